#include "earpipe/detection.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace earpipe {

namespace {

std::string trim_lower(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<Detection> clamp_all(std::vector<Detection> dets, int w, int h) {
    std::vector<Detection> out;
    out.reserve(dets.size());
    for (auto& d : dets) {
        if (auto b = d.box.clamped(w, h)) {
            d.box = *b;
            out.push_back(std::move(d));
        }
    }
    return out;
}

std::vector<Detection> run_backend(DetectorBackend& backend, const Image& image,
                                   const std::optional<std::string>& prompt) {
    try {
        auto dets = backend.detect(image, prompt);
        for (const auto& d : dets) d.check();
        return dets;
    } catch (const std::exception& e) {
        throw DetectionError("backend '" + backend.name() + "' failed: " + e.what());
    }
}

}  // namespace

void DetectorConfig::check() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(box_threshold)) throw ConfigError("box_threshold must be in [0,1]");
    if (!unit(text_threshold)) throw ConfigError("text_threshold must be in [0,1]");
    if (!(max_area_ratio > 0.0 && max_area_ratio <= 1.0)) {
        throw ConfigError("max_area_ratio must be in (0,1]");
    }
}

std::string format_text_prompt(std::span<const std::string> terms) {
    if (terms.empty()) throw ConfigError("prompt terms must not be empty");
    std::string prompt;
    for (const auto& t : terms) {
        auto term = trim_lower(t);
        if (term.empty()) throw ConfigError("prompt terms must not be blank");
        if (!prompt.empty()) prompt += ' ';
        prompt += term;
        prompt += '.';
    }
    return prompt;
}

std::vector<Detection> filter_detections(std::span<const Detection> detections,
                                         const DetectorConfig& config, int image_width,
                                         int image_height) {
    const double image_area = double(image_width) * double(image_height);
    std::vector<Detection> kept;
    for (const auto& d : detections) {
        if (d.confidence < config.box_threshold) continue;
        if (d.text_alignment && *d.text_alignment < config.text_threshold) continue;
        if (d.box.area() / image_area > config.max_area_ratio) continue;
        kept.push_back(d);
    }
    return kept;
}

std::vector<Detection> detect_accessories(const Image& image, DetectorBackend& supervised,
                                          DetectorBackend& zero_shot,
                                          const DetectorConfig& config) {
    const int w = image.width(), h = image.height();
    auto sup = clamp_all(run_backend(supervised, image, std::nullopt), w, h);
    auto zs = clamp_all(run_backend(zero_shot, image, format_text_prompt(config.prompt_terms)), w,
                        h);

    auto out = filter_detections(sup, config, w, h);
    auto zs_kept = filter_detections(zs, config, w, h);
    out.insert(out.end(), zs_kept.begin(), zs_kept.end());
    return out;
}

nlohmann::json detection_to_json(const Detection& d) {
    nlohmann::json j{{"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}},
                     {"confidence", d.confidence},
                     {"source", to_string(d.source)},
                     {"label", d.label}};
    if (d.text_alignment) j["text_alignment"] = *d.text_alignment;
    return j;
}

Detection detection_from_json(const nlohmann::json& j) {
    Detection d;
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 4) throw DetectionError("box must be [x0,y0,x1,y1]");
    d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    d.confidence = j.at("confidence").get<double>();
    if (j.contains("text_alignment") && !j["text_alignment"].is_null()) {
        d.text_alignment = j["text_alignment"].get<double>();
    }
    d.source = detector_source_from_string(j.at("source").get<std::string>());
    d.label = j.value("label", std::string{});
    return d;
}

void write_detection_dump(const DetectionDump& dump, const std::filesystem::path& file) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : dump.detections) dets.push_back(detection_to_json(d));
    std::string image = dump.image.generic_string();
    if (file.has_parent_path() && dump.image.is_absolute()) {
        auto rel = dump.image.lexically_relative(std::filesystem::absolute(file).parent_path());
        if (!rel.empty()) image = rel.generic_string();
    }
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw IoError("cannot write detection dump " + file.string());
    out << nlohmann::json{{"image", image}, {"detections", dets}}.dump(2) << '\n';
}

DetectionDump read_detection_dump(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read detection dump " + file.string());
    try {
        nlohmann::json doc;
        in >> doc;
        DetectionDump dump;
        std::filesystem::path image = doc.value("image", std::string{});
        dump.image = image.is_absolute() || image.empty()
                         ? image
                         : std::filesystem::absolute(file).parent_path() / image;
        for (const auto& j : doc.at("detections")) dump.detections.push_back(detection_from_json(j));
        return dump;
    } catch (const nlohmann::json::exception& e) {
        throw DetectionError("malformed detection dump " + file.string() + ": " + e.what());
    }
}

}  // namespace earpipe
