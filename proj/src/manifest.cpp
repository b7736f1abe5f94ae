#include "earpipe/manifest.hpp"

#include <fstream>
#include <set>

namespace earpipe {

namespace fs = std::filesystem;

namespace {

std::string relative_to(const fs::path& p, const fs::path& base) {
    if (base.empty() || !p.is_absolute()) return p.generic_string();
    auto rel = p.lexically_relative(base);
    if (rel.empty()) return p.generic_string();
    return rel.generic_string();
}

void put_optional(nlohmann::json& j, const char* name, const std::optional<fs::path>& p,
                  const fs::path& base) {
    if (p) j[name] = relative_to(*p, base);
}

std::optional<fs::path> get_optional(const nlohmann::json& j, const char* name,
                                     const fs::path& base) {
    if (!j.contains(name) || j[name].is_null()) return std::nullopt;
    fs::path p = j[name].get<std::string>();
    return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

nlohmann::json manifest_to_json(const DatasetManifest& manifest, const fs::path& base) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : manifest.records) {
        nlohmann::json j{{"subject_id", r.subject_id},
                         {"side", to_string(r.side)},
                         {"stage", to_string(r.stage)},
                         {"path", relative_to(manifest.resolve(r.path), base)},
                         {"key", r.key}};
        if (!r.source_dataset.empty()) j["source_dataset"] = r.source_dataset;
        put_optional(j, "annotations", r.annotations, base);
        put_optional(j, "ear_mask", r.ear_mask, base);
        put_optional(j, "detections", r.detections, base);
        put_optional(j, "mask", r.mask, base);
        records.push_back(std::move(j));
    }
    return {{"name", manifest.name}, {"side_split", manifest.side_split}, {"records", records}};
}

DatasetManifest manifest_from_json(const nlohmann::json& doc, const fs::path& base) {
    DatasetManifest m;
    m.root = base;
    try {
        m.name = doc.value("name", std::string{});
        m.side_split = doc.value("side_split", false);
        for (const auto& j : doc.at("records")) {
            ImageRecord r;
            r.subject_id = j.at("subject_id").get<std::string>();
            r.side = side_from_string(j.value("side", std::string{"unknown"}));
            r.stage = image_stage_from_string(j.value("stage", std::string{"raw"}));
            fs::path p = j.at("path").get<std::string>();
            r.path = p.is_absolute() || base.empty() ? p : base / p;
            r.source_dataset = j.value("source_dataset", m.name);
            r.key = j.value("key", std::string{});
            r.annotations = get_optional(j, "annotations", base);
            r.ear_mask = get_optional(j, "ear_mask", base);
            r.detections = get_optional(j, "detections", base);
            r.mask = get_optional(j, "mask", base);
            m.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("malformed manifest: ") + e.what());
    }
    assign_record_keys(m);
    return m;
}

DatasetManifest load_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IngestionError("cannot read manifest " + file.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError("cannot parse manifest " + file.string() + ": " + e.what());
    }
    return manifest_from_json(doc, fs::absolute(file).parent_path());
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw IoError("cannot write manifest " + file.string());
    out << manifest_to_json(manifest, fs::absolute(file).parent_path()).dump(2) << '\n';
}

void assign_record_keys(DatasetManifest& manifest) {
    std::set<std::string> used;
    for (const auto& r : manifest.records) {
        if (!r.key.empty()) used.insert(r.key);
    }
    for (auto& r : manifest.records) {
        if (!r.key.empty()) continue;
        std::string base = r.subject_id + "/" + r.path.stem().string();
        std::string key = base;
        for (int n = 2; used.count(key); ++n) key = base + "#" + std::to_string(n);
        used.insert(key);
        r.key = key;
    }
}

std::vector<std::string> validate_manifest(const DatasetManifest& manifest) {
    std::vector<std::string> violations;
    std::set<std::string> keys;
    for (const auto& r : manifest.records) {
        const std::string who = "record '" + (r.key.empty() ? r.path.string() : r.key) + "'";
        if (r.subject_id.empty()) violations.push_back(who + ": empty subject_id");
        if (!r.key.empty() && !keys.insert(r.key).second) {
            violations.push_back(who + ": duplicate record key");
        }
        if (!fs::exists(manifest.resolve(r.path))) {
            violations.push_back(who + ": file not found: " + manifest.resolve(r.path).string());
        }
    }
    if (manifest.identities().size() < 2) {
        violations.push_back("verification requires N ≥ 2");
    }
    return violations;
}

std::vector<std::string> manifest_warnings(const DatasetManifest& manifest) {
    std::vector<std::string> warnings;
    for (auto i : manifest.excluded_records()) {
        warnings.push_back("record '" + manifest.records[i].key +
                           "' has unknown side and is excluded under side-splitting");
    }
    return warnings;
}

}  // namespace earpipe
