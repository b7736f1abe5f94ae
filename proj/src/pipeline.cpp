#include "earpipe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "earpipe/hashing.hpp"
#include "earpipe/image_io.hpp"
#include "earpipe/manifest.hpp"
#include "earpipe/mock_backends.hpp"
#include "earpipe/parallel.hpp"
#include "earpipe/restoration.hpp"

namespace earpipe {

namespace fs = std::filesystem;
using nlohmann::json;

// --- stage names ------------------------------------------------------------------------------

const std::vector<StageName>& all_stages() {
    static const std::vector<StageName> stages{
        StageName::ingest, StageName::side_split, StageName::align,    StageName::detect,
        StageName::mask,   StageName::inpaint,    StageName::embed,    StageName::evaluate,
        StageName::report};
    return stages;
}

std::string_view to_string(StageName s) {
    switch (s) {
        case StageName::ingest: return "ingest";
        case StageName::side_split: return "side_split";
        case StageName::align: return "align";
        case StageName::detect: return "detect";
        case StageName::mask: return "mask";
        case StageName::inpaint: return "inpaint";
        case StageName::embed: return "embed";
        case StageName::evaluate: return "evaluate";
        case StageName::report: return "report";
    }
    return "ingest";
}

StageName stage_from_string(std::string_view s) {
    for (auto stage : all_stages()) {
        if (s == to_string(stage)) return stage;
    }
    throw ConfigError("unknown stage '" + std::string(s) + "'");
}

namespace {

struct StageError : Error {
    StageError(StageName stage, const std::string& what) : Error(std::string(to_string(stage)), what) {}
};

std::size_t stage_index(StageName s) {
    const auto& all = all_stages();
    return static_cast<std::size_t>(std::find(all.begin(), all.end(), s) - all.begin());
}

bool is_restoration_stage(StageName s) {
    return s == StageName::detect || s == StageName::mask || s == StageName::inpaint;
}

const std::set<std::string> kDetectors{"mock_replay", "mock_fixed", "none"};

void require_one_of(const std::string& value, const std::set<std::string>& allowed,
                    const std::string& what) {
    if (!allowed.count(value)) throw ConfigError("unknown " + what + " backend '" + value + "'");
}

}  // namespace

// --- configuration ----------------------------------------------------------------------------

bool PipelineConfig::has_stage(StageName s) const {
    return std::find(stages.begin(), stages.end(), s) != stages.end();
}

void PipelineConfig::check() const {
    if (stages.empty()) throw ConfigError("stage list is empty");
    // Canonical order, except that align may also run after the restoration stages.
    std::vector<double> rank;
    bool restored = false;
    for (auto s : stages) {
        restored = restored || is_restoration_stage(s);
        rank.push_back(s == StageName::align && restored ? 5.5 : static_cast<double>(stage_index(s)));
    }
    for (std::size_t i = 1; i < stages.size(); ++i) {
        if (rank[i] <= rank[i - 1]) {
            throw ConfigError("stage order must follow ingest, side_split, align, detect, mask, "
                              "inpaint, embed, evaluate, report without repeats (align may also "
                              "follow inpaint); '" +
                              std::string(to_string(stages[i])) + "' comes after '" +
                              std::string(to_string(stages[i - 1])) + "'");
        }
    }
    if (trials < 1) throw ConfigError("trial count must be at least 1");
    if (workers < 0) throw ConfigError("worker count must not be negative");
    if (impostor_fraction && !(*impostor_fraction > 0.0 && *impostor_fraction <= 1.0)) {
        throw ConfigError("impostor_fraction must lie in (0, 1]");
    }
    detector.check();
    masking.check();
    alignment.check();
    if (has_stage(StageName::embed) && has_stage(StageName::align) &&
        alignment.out_size != kEmbedderInputSize) {
        throw ConfigError("embedders take 112x112 input; alignment.out_size is " +
                          std::to_string(alignment.out_size));
    }
    require_one_of(backends.supervised_detector, kDetectors, "supervised detector");
    require_one_of(backends.zero_shot_detector, kDetectors, "zero-shot detector");
    require_one_of(backends.segmenter, {"mock_ellipse"}, "segmenter");
    require_one_of(backends.inpainter, {"mock_diffusion"}, "inpainter");
    require_one_of(backends.ear_segmenter, {"mock_threshold"}, "ear segmenter");
    require_one_of(backends.side_classifier, {"mock_mass"}, "side classifier");
    if (backends.detector_jitter < 0) throw ConfigError("detector_jitter must not be negative");
    if (backends.embedders.empty()) throw ConfigError("no embedders configured");
}

json PipelineConfig::to_json() const {
    json stage_list = json::array();
    for (auto s : stages) stage_list.push_back(std::string(to_string(s)));
    json embedder_list = json::array();
    for (const auto& d : backends.embedders) embedder_list.push_back(d.tag());
    return {
        {"stages", stage_list},
        {"detector",
         {{"box_threshold", detector.box_threshold},
          {"text_threshold", detector.text_threshold},
          {"max_area_ratio", detector.max_area_ratio},
          {"prompt_terms", detector.prompt_terms}}},
        {"masking",
         {{"binarize_threshold", masking.binarize_threshold},
          {"min_quality", masking.min_quality},
          {"dilation_radius", masking.dilation_radius}}},
        {"alignment",
         {{"k", alignment.k},
          {"pad_fill", std::string(earpipe::to_string(alignment.pad_fill))},
          {"out_size", alignment.out_size}}},
        {"backends",
         {{"supervised_detector", backends.supervised_detector},
          {"zero_shot_detector", backends.zero_shot_detector},
          {"segmenter", backends.segmenter},
          {"inpainter", backends.inpainter},
          {"ear_segmenter", backends.ear_segmenter},
          {"side_classifier", backends.side_classifier},
          {"detector_jitter", backends.detector_jitter},
          {"seed", backends.seed},
          {"embedders", embedder_list}}},
        {"cache_dir", cache_dir.generic_string()},
        {"workers", workers},
        {"trials", trials},
        {"impostor_fraction", impostor_fraction ? json(*impostor_fraction) : json(nullptr)},
        {"subsample_seed", subsample_seed}};
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_field(const json& j, const char* name, T& target) {
    if (j.contains(name)) target = j.at(name).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    try {
        reject_unknown_keys(j,
                            {"stages", "detector", "masking", "alignment", "backends", "cache_dir",
                             "workers", "trials", "impostor_fraction", "subsample_seed"},
                            "config");
        if (j.contains("stages")) {
            c.stages.clear();
            for (const auto& s : j.at("stages")) c.stages.push_back(stage_from_string(s.get<std::string>()));
        }
        if (j.contains("detector")) {
            const auto& d = j.at("detector");
            reject_unknown_keys(d, {"box_threshold", "text_threshold", "max_area_ratio", "prompt_terms"},
                                "detector");
            read_field(d, "box_threshold", c.detector.box_threshold);
            read_field(d, "text_threshold", c.detector.text_threshold);
            read_field(d, "max_area_ratio", c.detector.max_area_ratio);
            read_field(d, "prompt_terms", c.detector.prompt_terms);
        }
        if (j.contains("masking")) {
            const auto& m = j.at("masking");
            reject_unknown_keys(m, {"binarize_threshold", "min_quality", "dilation_radius"}, "masking");
            read_field(m, "binarize_threshold", c.masking.binarize_threshold);
            read_field(m, "min_quality", c.masking.min_quality);
            read_field(m, "dilation_radius", c.masking.dilation_radius);
        }
        if (j.contains("alignment")) {
            const auto& a = j.at("alignment");
            reject_unknown_keys(a, {"k", "pad_fill", "out_size"}, "alignment");
            read_field(a, "k", c.alignment.k);
            if (a.contains("pad_fill")) c.alignment.pad_fill = pad_fill_from_string(a.at("pad_fill").get<std::string>());
            read_field(a, "out_size", c.alignment.out_size);
        }
        if (j.contains("backends")) {
            const auto& b = j.at("backends");
            reject_unknown_keys(b,
                                {"supervised_detector", "zero_shot_detector", "segmenter", "inpainter",
                                 "ear_segmenter", "side_classifier", "detector_jitter", "seed",
                                 "embedders"},
                                "backends");
            read_field(b, "supervised_detector", c.backends.supervised_detector);
            read_field(b, "zero_shot_detector", c.backends.zero_shot_detector);
            read_field(b, "segmenter", c.backends.segmenter);
            read_field(b, "inpainter", c.backends.inpainter);
            read_field(b, "ear_segmenter", c.backends.ear_segmenter);
            read_field(b, "side_classifier", c.backends.side_classifier);
            read_field(b, "detector_jitter", c.backends.detector_jitter);
            read_field(b, "seed", c.backends.seed);
            if (b.contains("embedders")) {
                c.backends.embedders.clear();
                for (const auto& t : b.at("embedders")) {
                    c.backends.embedders.push_back(BackendDescriptor::from_tag(t.get<std::string>()));
                }
            }
        }
        if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
        read_field(j, "workers", c.workers);
        read_field(j, "trials", c.trials);
        if (j.contains("impostor_fraction") && !j.at("impostor_fraction").is_null()) {
            c.impostor_fraction = j.at("impostor_fraction").get<double>();
        }
        read_field(j, "subsample_seed", c.subsample_seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.check();
    return c;
}

std::string PipelineConfig::fingerprint() const {
    json j = to_json();
    j.erase("cache_dir");
    j.erase("workers");
    // Objects serialize with sorted keys, so the digest ignores source key order.
    return sha256_hex(j.dump());
}

PipelineConfig load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse config " + file.string() + ": " + e.what());
    }
    return PipelineConfig::from_json(j);
}

// --- ingestion --------------------------------------------------------------------------------

DatasetLayout dataset_layout_from_string(std::string_view s) {
    if (s == "subject_folders") return DatasetLayout::subject_folders;
    if (s == "flat_with_index") return DatasetLayout::flat_with_index;
    throw ConfigError("unknown dataset layout '" + std::string(s) + "'");
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool is_image_file(const fs::path& p) {
    if (lower(p.extension().string()) != ".png") return false;
    // Mask sidecars share the extension.
    return lower(p.stem().extension().string()) != ".mask";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

ImageRecord make_record(const fs::path& root, const fs::path& file, std::string subject, Side side,
                        const std::string& dataset) {
    ImageRecord r;
    r.subject_id = std::move(subject);
    r.side = side;
    r.path = fs::relative(file, root);
    r.source_dataset = dataset;
    fs::path key = r.path;
    key.replace_extension();
    r.key = key.generic_string();
    fs::path sidecar = file;
    sidecar.replace_extension(".detections.json");
    if (fs::exists(sidecar)) r.annotations = fs::absolute(sidecar);
    return r;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

IngestReport ingest_dataset(const fs::path& root_in, DatasetLayout layout, const std::string& name) {
    if (!fs::is_directory(root_in)) throw IngestionError("dataset root " + root_in.string() + " is not a directory");
    const fs::path root = fs::absolute(root_in).lexically_normal();
    IngestReport report;
    auto& m = report.manifest;
    m.root = root;
    m.name = name.empty() ? root.filename().string() : name;
    if (m.name.empty()) m.name = root.parent_path().filename().string();

    if (layout == DatasetLayout::subject_folders) {
        for (const auto& dir : sorted_subdirs(root)) {
            const std::string subject = dir.filename().string();
            std::vector<ImageRecord> found;
            for (const auto& f : sorted_images(dir)) {
                found.push_back(make_record(root, f, subject, Side::unknown, m.name));
            }
            for (Side side : {Side::left, Side::right}) {
                const fs::path sub = dir / std::string(to_string(side));
                if (!fs::is_directory(sub)) continue;
                for (const auto& f : sorted_images(sub)) found.push_back(make_record(root, f, subject, side, m.name));
            }
            if (found.empty()) {
                report.warnings.push_back("subject folder '" + subject + "' has no images; skipped");
                continue;
            }
            for (auto& r : found) m.records.push_back(std::move(r));
        }
    } else {
        const fs::path index = root / "index.csv";
        std::ifstream in(index);
        if (!in) throw IngestionError("flat_with_index layout needs " + index.string());
        std::string line;
        if (!std::getline(in, line)) throw IngestionError(index.string() + " is empty");
        const auto header = split_csv_line(line);
        auto column = [&](const std::string& col) -> std::optional<std::size_t> {
            auto it = std::find(header.begin(), header.end(), col);
            if (it == header.end()) return std::nullopt;
            return static_cast<std::size_t>(it - header.begin());
        };
        const auto path_col = column("path"), subject_col = column("subject_id"), side_col = column("side");
        if (!path_col || !subject_col) throw IngestionError(index.string() + " needs path and subject_id columns");
        for (int line_no = 2; std::getline(in, line); ++line_no) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto cells = split_csv_line(line);
            auto cell = [&](std::size_t c) { return c < cells.size() ? cells[c] : std::string{}; };
            const fs::path file = root / cell(*path_col);
            if (!fs::is_regular_file(file)) {
                throw IngestionError(index.string() + ":" + std::to_string(line_no) + ": no such image " + file.string());
            }
            const Side side = side_col ? side_from_string(cell(*side_col)) : Side::unknown;
            m.records.push_back(make_record(root, file, cell(*subject_col), side, m.name));
        }
        std::sort(m.records.begin(), m.records.end(),
                  [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
    }

    if (m.records.empty()) throw IngestionError("no images found under " + root.string());
    assign_record_keys(m);
    for (auto& w : manifest_warnings(m)) report.warnings.push_back(std::move(w));
    return report;
}

// --- run bookkeeping --------------------------------------------------------------------------

std::size_t RunStats::total_executed() const {
    std::size_t n = 0;
    for (const auto& [stage, count] : executed) n += count;
    return n;
}

namespace {

struct Context {
    const PipelineConfig& config;
    fs::path out_dir;
    fs::path cache_root;
    int workers;
    RunStats* stats;
    const std::function<void(const std::string&)>& log;

    void note(StageName stage, std::size_t executed, std::size_t cached) const {
        if (stats) {
            stats->executed[std::string(to_string(stage))] += executed;
            stats->cached[std::string(to_string(stage))] += cached;
        }
        if (log) {
            log("[" + std::string(to_string(stage)) + "] " + std::to_string(executed) + " computed, " +
                std::to_string(cached) + " cached");
        }
    }
};

Context make_context(const PipelineConfig& config, const RunOptions& options, RunStats* stats) {
    if (options.out_dir.empty()) throw ConfigError("no output directory given");
    const fs::path out = fs::absolute(options.out_dir).lexically_normal();
    const fs::path cache = fs::absolute(config.cache_dir.empty() ? out / "cache" : config.cache_dir).lexically_normal();
    return Context{config, out, cache,
                   config.workers > 0 ? config.workers : default_worker_count(), stats, options.log};
}

json stage_params(StageName stage, const PipelineConfig& c) {
    const auto cfg = c.to_json();
    switch (stage) {
        case StageName::side_split:
            return {{"side_classifier", c.backends.side_classifier}};
        case StageName::align:
            return {{"alignment", cfg.at("alignment")}, {"ear_segmenter", c.backends.ear_segmenter}};
        case StageName::detect:
            return {{"detector", cfg.at("detector")},
                    {"supervised", c.backends.supervised_detector},
                    {"zero_shot", c.backends.zero_shot_detector},
                    {"jitter", c.backends.detector_jitter},
                    {"seed", c.backends.seed}};
        case StageName::mask:
            return {{"binarize_threshold", c.masking.binarize_threshold},
                    {"min_quality", c.masking.min_quality},
                    {"segmenter", c.backends.segmenter}};
        case StageName::inpaint:
            return {{"dilation_radius", c.masking.dilation_radius}, {"inpainter", c.backends.inpainter}};
        case StageName::evaluate:
            return {{"impostor_fraction", cfg.at("impostor_fraction")},
                    {"subsample_seed", c.subsample_seed}};
        default:
            return json::object();
    }
}

std::string stage_fingerprint(StageName stage, const json& params) {
    return sha256_hex(std::string(to_string(stage)) + ":" + params.dump());
}

std::string safe_name(const std::string& key) {
    std::string out;
    for (char ch : key) {
        const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.';
        out += ok ? ch : '_';
    }
    return out;
}

std::string hash_of(const std::optional<fs::path>& file, const DatasetManifest& m) {
    return file ? sha256_file(m.resolve(*file)) : std::string("-");
}

void write_text_atomic(const fs::path& file, const std::string& text) {
    fs::create_directories(file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw IoError("cannot write " + tmp.string());
    }
    fs::rename(tmp, file);
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Write>
void write_atomic(const fs::path& file, Write&& write) {
    const fs::path tmp = file.parent_path() / (file.filename().string() + ".tmp" + file.extension().string());
    write(tmp);
    fs::rename(tmp, file);
}

std::string strip_tag(const std::string& what) {
    if (!what.empty() && what.front() == '[') {
        const auto close = what.find("] ");
        if (close != std::string::npos) return what.substr(close + 2);
    }
    return what;
}

// Per-record stage: `inputs` hashes what the record's output depends on, `plan` fills in the
// output record from the artifact base path without doing work, `compute` produces the
// artifacts (primary file last). A record whose primary artifact exists is a cache hit.
struct RecordStage {
    StageName stage;
    std::string primary_suffix;
    std::function<std::string(const ImageRecord&, const DatasetManifest&)> inputs;
    std::function<ImageRecord(const ImageRecord&, const fs::path& base)> plan;
    std::function<void(const ImageRecord&, const DatasetManifest&, const fs::path& base)> compute;
};

DatasetManifest run_record_stage(const RecordStage& st, const DatasetManifest& in, const Context& ctx) {
    const std::string fp = stage_fingerprint(st.stage, stage_params(st.stage, ctx.config));
    const fs::path dir = ctx.cache_root / std::string(to_string(st.stage)) / fp.substr(0, 16);
    fs::create_directories(dir);

    DatasetManifest out = in;
    std::vector<fs::path> bases(in.records.size());
    std::atomic<std::size_t> executed{0}, cached{0};

    parallel_for(in.records.size(), ctx.workers, [] { return 0; }, [&](int&, std::size_t i) {
        const auto& record = in.records[i];
        try {
            const std::string input_hash = st.inputs(record, in);
            const fs::path base =
                dir / (safe_name(record.key) + "-" + sha256_hex(record.key + "\n" + input_hash).substr(0, 16));
            out.records[i] = st.plan(record, base);
            if (fs::exists(base.string() + st.primary_suffix)) {
                ++cached;
                return;
            }
            st.compute(record, in, base);
            ++executed;
        } catch (const std::exception& e) {
            throw StageError(st.stage, "record '" + record.key + "': " + strip_tag(e.what()));
        }
    });
    ctx.note(st.stage, executed, cached);
    return out;
}

// --- stages -----------------------------------------------------------------------------------

DatasetManifest stage_ingest(const DatasetManifest& in, const Context& ctx) {
    DatasetManifest m = in;
    assign_record_keys(m);
    const auto violations = validate_manifest(m);
    if (!violations.empty()) {
        std::string msg = "manifest has " + std::to_string(violations.size()) + " problem(s):";
        for (const auto& v : violations) msg += "\n  " + v;
        throw IngestionError(msg);
    }
    if (ctx.log) {
        for (const auto& w : manifest_warnings(m)) ctx.log("[ingest] warning: " + w);
    }
    return m;
}

DatasetManifest stage_side_split(const DatasetManifest& in, const Context& ctx) {
    const std::string fp = stage_fingerprint(StageName::side_split, stage_params(StageName::side_split, ctx.config));
    const fs::path dir = ctx.cache_root / "side_split" / fp.substr(0, 16);
    DatasetManifest out = in;
    out.side_split = true;
    std::atomic<std::size_t> executed{0}, cached{0};
    parallel_for(in.records.size(), ctx.workers, [] { return MockMassSideClassifier(); },
                 [&](MockMassSideClassifier& classifier, std::size_t i) {
        auto& r = out.records[i];
        if (r.side != Side::unknown) return;
        try {
            const std::string hash = sha256_file(in.resolve(r.path));
            const fs::path file = dir / (safe_name(r.key) + "-" + hash.substr(0, 16) + ".side.json");
            if (fs::exists(file)) {
                r.side = side_from_string(json::parse(read_text(file)).at("side").get<std::string>());
                ++cached;
                return;
            }
            DatasetManifest one;
            one.root = in.root;
            one.records = {r};
            r.side = split_by_side(one, classifier).records.front().side;
            fs::create_directories(dir);
            write_text_atomic(file, json{{"side", std::string(to_string(r.side))}}.dump() + "\n");
            ++executed;
        } catch (const std::exception& e) {
            throw StageError(StageName::side_split, "record '" + r.key + "': " + strip_tag(e.what()));
        }
    });
    ctx.note(StageName::side_split, executed, cached);
    return out;
}

DatasetManifest stage_align(const DatasetManifest& in, const Context& ctx) {
    const AlignmentConfig cfg = ctx.config.alignment;
    RecordStage st;
    st.stage = StageName::align;
    st.primary_suffix = ".aligned.png";
    st.inputs = [](const ImageRecord& r, const DatasetManifest& m) {
        return sha256_file(m.resolve(r.path)) + hash_of(r.ear_mask, m) + hash_of(r.annotations, m);
    };
    st.plan = [](const ImageRecord& r, const fs::path& base) {
        ImageRecord o = r;
        o.path = base.string() + ".aligned.png";
        o.stage = ImageStage::aligned;
        o.annotations = r.annotations ? std::optional<fs::path>(base.string() + ".annotations.json") : std::nullopt;
        o.ear_mask.reset();
        o.detections.reset();
        o.mask.reset();
        return o;
    };
    st.compute = [cfg](const ImageRecord& r, const DatasetManifest& m, const fs::path& base) {
        const Image image = read_png(m.resolve(r.path));
        BinaryMask ear = r.ear_mask ? read_mask_png(m.resolve(*r.ear_mask))
                                    : MockThresholdEarSegmenter().segment_ear(image);
        const AlignmentResult result = align_ear(image, ear, cfg);
        const auto& t = result.transform;
        const json sidecar{{"angle", result.axis.angle},
                           {"support", result.axis.support},
                           {"confidence", result.axis.confidence},
                           {"crop", {t.crop.x0, t.crop.y0, t.crop.x1, t.crop.y1}},
                           {"rotated_size", {t.rotated_width, t.rotated_height}}};
        write_text_atomic(base.string() + ".align.json", sidecar.dump(2) + "\n");
        if (r.annotations) {
            const DetectionDump src = read_detection_dump(m.resolve(*r.annotations));
            DetectionDump dst{fs::path(base.string() + ".aligned.png"), {}};
            for (const auto& d : src.detections) {
                if (auto box = t.map_box(d.box)) {
                    Detection moved = d;
                    moved.box = *box;
                    dst.detections.push_back(moved);
                }
            }
            write_detection_dump(dst, base.string() + ".annotations.json");
        }
        write_atomic(base.string() + ".aligned.png", [&](const fs::path& p) { write_png(result.image, p); });
    };
    return run_record_stage(st, in, ctx);
}

std::unique_ptr<DetectorBackend> make_detector(const std::string& name, DetectorSource role,
                                               const BackendSelection& b, const ImageRecord& r,
                                               const DatasetManifest& m, const Image& image) {
    if (name == "none") return std::make_unique<NullDetector>();
    if (name == "mock_fixed") return std::make_unique<MockFixedBoxDetector>(BoundingBox{0.375, 0.375, 0.625, 0.625}, role);
    auto replay = std::make_unique<MockReplayDetector>(role, b.detector_jitter, b.seed);
    if (r.annotations) replay->add(image, read_detection_dump(m.resolve(*r.annotations)).detections);
    return replay;
}

DatasetManifest stage_detect(const DatasetManifest& in, const Context& ctx) {
    const DetectorConfig cfg = ctx.config.detector;
    const BackendSelection backends = ctx.config.backends;
    RecordStage st;
    st.stage = StageName::detect;
    st.primary_suffix = ".detections.json";
    st.inputs = [](const ImageRecord& r, const DatasetManifest& m) {
        return sha256_file(m.resolve(r.path)) + hash_of(r.annotations, m);
    };
    st.plan = [](const ImageRecord& r, const fs::path& base) {
        ImageRecord o = r;
        o.detections = base.string() + ".detections.json";
        return o;
    };
    st.compute = [cfg, backends](const ImageRecord& r, const DatasetManifest& m, const fs::path& base) {
        const Image image = read_png(m.resolve(r.path));
        auto supervised = make_detector(backends.supervised_detector, DetectorSource::supervised, backends, r, m, image);
        auto zero_shot = make_detector(backends.zero_shot_detector, DetectorSource::zero_shot, backends, r, m, image);
        DetectionDump dump{fs::absolute(m.resolve(r.path)), detect_accessories(image, *supervised, *zero_shot, cfg)};
        write_atomic(base.string() + ".detections.json", [&](const fs::path& p) { write_detection_dump(dump, p); });
    };
    return run_record_stage(st, in, ctx);
}

DatasetManifest stage_mask(const DatasetManifest& in, const Context& ctx) {
    const MaskingConfig cfg = ctx.config.masking;
    RecordStage st;
    st.stage = StageName::mask;
    st.primary_suffix = ".mask.png";
    st.inputs = [](const ImageRecord& r, const DatasetManifest& m) {
        if (!r.detections) throw MaskingError("no detections; run the detect stage first");
        return sha256_file(m.resolve(r.path)) + hash_of(r.detections, m);
    };
    st.plan = [](const ImageRecord& r, const fs::path& base) {
        ImageRecord o = r;
        o.mask = base.string() + ".mask.png";
        return o;
    };
    st.compute = [cfg](const ImageRecord& r, const DatasetManifest& m, const fs::path& base) {
        const Image image = read_png(m.resolve(r.path));
        const auto dump = read_detection_dump(m.resolve(*r.detections));
        MockEllipseSegmenter segmenter;
        const AccessoryMask am = build_accessory_mask(image, dump.detections, segmenter, cfg);
        write_atomic(base.string() + ".mask.png", [&](const fs::path& p) { write_mask_png(am.mask, p); });
    };
    return run_record_stage(st, in, ctx);
}

DatasetManifest stage_inpaint(const DatasetManifest& in, const Context& ctx) {
    const int dilation = ctx.config.masking.dilation_radius;
    RecordStage st;
    st.stage = StageName::inpaint;
    st.primary_suffix = ".inpainted.png";
    st.inputs = [](const ImageRecord& r, const DatasetManifest& m) {
        if (!r.mask) throw RestorationError("no accessory mask; run the mask stage first");
        return sha256_file(m.resolve(r.path)) + hash_of(r.mask, m);
    };
    st.plan = [](const ImageRecord& r, const fs::path& base) {
        ImageRecord o = r;
        o.path = base.string() + ".inpainted.png";
        o.stage = ImageStage::inpainted;
        return o;
    };
    st.compute = [dilation](const ImageRecord& r, const DatasetManifest& m, const fs::path& base) {
        const Image image = read_png(m.resolve(r.path));
        const BinaryMask mask = dilate_mask(read_mask_png(m.resolve(*r.mask)), dilation);
        BoundaryAverageInpainter inpainter;
        const Image restored = restore(image, mask, inpainter);
        write_atomic(base.string() + ".inpainted.png", [&](const fs::path& p) { write_png(restored, p); });
    };
    return run_record_stage(st, in, ctx);
}

class UnavailableEmbedder final : public EmbedderBackend {
public:
    UnavailableEmbedder(BackendDescriptor d, fs::path dir) : d_(d), dir_(std::move(dir)) {}
    BackendDescriptor descriptor() const override { return d_; }
    EmbeddingVector embed(const Image&) override {
        throw EmbeddingError("no built-in " + d_.tag() + " backend; place precomputed vectors in " +
                             dir_.string());
    }

private:
    BackendDescriptor d_;
    fs::path dir_;
};

// Trial t of backend d: mock models differ by seed, others are looked up in their own cache.
struct TrialEmbeddings {
    BackendDescriptor backend;
    std::vector<EmbeddingTable> trials;
};

std::vector<TrialEmbeddings> stage_embed(const DatasetManifest& in, InputCondition condition, const Context& ctx) {
    std::vector<TrialEmbeddings> out;
    std::size_t executed = 0, cached = 0;
    for (const auto& d : ctx.config.backends.embedders) {
        TrialEmbeddings te{d, {}};
        for (int t = 0; t < ctx.config.trials; ++t) {
            const std::uint64_t seed = ctx.config.backends.seed + static_cast<std::uint64_t>(t);
            const json params{{"backend", d.tag()}, {"trial", t}, {"seed", d.family == ModelFamily::mock ? json(seed) : json(nullptr)}};
            const std::string fp = stage_fingerprint(StageName::embed, params);
            // One cache per condition: both hold the same record keys with different pixels.
            const fs::path dir = ctx.cache_root / "embed" / std::string(to_string(condition)) /
                                 (d.tag() + "-trial" + std::to_string(t) + "-" + fp.substr(0, 12));
            EmbeddingCache cache(dir, d);
            std::function<std::unique_ptr<EmbedderBackend>()> make = [&]() -> std::unique_ptr<EmbedderBackend> {
                if (d.family == ModelFamily::mock) return std::make_unique<MockEmbedder>(seed, d.patch_size);
                return std::make_unique<UnavailableEmbedder>(d, dir);
            };
            EmbedStats stats;
            try {
                te.trials.push_back(embed_manifest(in, make, &cache, ctx.workers, &stats));
            } catch (const std::exception& e) {
                throw StageError(StageName::embed, strip_tag(e.what()));
            }
            executed += stats.computed;
            cached += stats.cached;
        }
        out.push_back(std::move(te));
    }
    ctx.note(StageName::embed, executed, cached);
    return out;
}

std::string dataset_name(const DatasetManifest& m) { return m.name.empty() ? "dataset" : m.name; }

std::vector<EvaluationResult> stage_evaluate(const DatasetManifest& in,
                                             const std::vector<TrialEmbeddings>& embeddings,
                                             InputCondition condition, const Context& ctx) {
    const json params = stage_params(StageName::evaluate, ctx.config);
    std::vector<EvaluationResult> results;
    std::size_t executed = 0, cached = 0;
    const fs::path results_dir = ctx.out_dir / "results" / std::string(to_string(condition));
    const fs::path roc_dir = ctx.out_dir / "roc";
    fs::create_directories(results_dir);
    fs::create_directories(roc_dir);

    // The cache key covers everything the scores depend on: the identity structure and the
    // embedding vectors themselves.
    std::string structure;
    for (const auto& [key, idx] : in.identities()) {
        structure += key + ":";
        for (auto i : idx) structure += in.records[i].key + ",";
        structure += "\n";
    }

    for (const auto& te : embeddings) {
        Sha256 h;
        h.update(stage_fingerprint(StageName::evaluate, params))
            .update(dataset_name(in))
            .update(std::string(to_string(condition)))
            .update(te.backend.tag())
            .update(structure);
        for (const auto& table : te.trials) {
            for (const auto& [key, e] : table) {
                h.update(key);
                h.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(e.vector.data()),
                                                        sizeof(float) * kEmbeddingDim));
            }
        }
        const std::string key = h.hex();
        const fs::path entry = ctx.cache_root / "evaluate" / key.substr(0, 16);
        const std::string stem = std::string(to_string(condition)) + "_" + te.backend.tag();

        if (!fs::exists(entry / "result.json") || !fs::exists(entry / "roc.svg")) {
            try {
                ScoringOptions opts{ctx.config.impostor_fraction, ctx.config.subsample_seed};
                std::vector<double> aucs;
                std::optional<ScoreSet> first;
                for (const auto& table : te.trials) {
                    ScoreSet scores = score_all_pairs(table, in, opts);
                    aucs.push_back(compute_auc(scores));
                    if (!first) first = std::move(scores);
                }
                EvaluationResult r;
                r.dataset = dataset_name(in);
                r.backend = te.backend;
                r.condition = condition;
                r.summary = aggregate_trials(aucs);
                r.pair_counts = enumerate_pairs(in).counts();
                fs::create_directories(entry);
                emit_roc_plot(*first, entry / "roc.svg.tmp",
                              r.dataset + " " + te.backend.tag() + " " + std::string(to_string(condition)) + " (trial 0)");
                fs::rename(entry / "roc.svg.tmp", entry / "roc.svg");
                write_text_atomic(entry / "result.json", to_json(r).dump(2) + "\n");
            } catch (const std::exception& e) {
                throw StageError(StageName::evaluate, te.backend.tag() + ": " + strip_tag(e.what()));
            }
            ++executed;
        } else {
            ++cached;
        }
        const std::string text = read_text(entry / "result.json");
        results.push_back(evaluation_result_from_json(json::parse(text)));
        write_text_atomic(results_dir / (te.backend.tag() + ".json"), text);
        write_text_atomic(roc_dir / (stem + ".svg"), read_text(entry / "roc.svg"));
    }
    ctx.note(StageName::evaluate, executed, cached);
    return results;
}

void save_stage_manifest(const DatasetManifest& m, const Context& ctx, InputCondition condition, StageName stage) {
    save_manifest(m, ctx.out_dir / "manifests" / std::string(to_string(condition)) /
                         (std::string(to_string(stage)) + ".json"));
}

DatasetManifest apply_record_stage(StageName stage, const DatasetManifest& m, const Context& ctx) {
    switch (stage) {
        case StageName::ingest: return stage_ingest(m, ctx);
        case StageName::side_split: return stage_side_split(m, ctx);
        case StageName::align: return stage_align(m, ctx);
        case StageName::detect: return stage_detect(m, ctx);
        case StageName::mask: return stage_mask(m, ctx);
        case StageName::inpaint: return stage_inpaint(m, ctx);
        default: return m;
    }
}

}  // namespace

// --- results and reports ----------------------------------------------------------------------

std::vector<EvaluationResult> load_results(const fs::path& source) {
    std::vector<fs::path> files;
    if (fs::is_directory(source)) {
        for (const auto& e : fs::directory_iterator(source)) {
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(source)) {
        files.push_back(source);
    } else {
        throw ComparisonError("no results at " + source.string());
    }
    std::vector<EvaluationResult> out;
    for (const auto& f : files) {
        json doc;
        try {
            doc = json::parse(read_text(f));
        } catch (const json::exception& e) {
            throw ComparisonError("cannot parse results " + f.string() + ": " + e.what());
        }
        if (doc.is_array()) {
            for (const auto& j : doc) out.push_back(evaluation_result_from_json(j));
        } else {
            out.push_back(evaluation_result_from_json(doc));
        }
    }
    return out;
}

namespace {

std::string describe(const GridKey& k) {
    return k.model + "_p" + std::to_string(k.patch) + "/" + k.dataset;
}

GridKey grid_key(const EvaluationResult& r) {
    return {std::string(to_string(r.backend.family)), r.backend.patch_size, r.dataset};
}

}  // namespace

ComparisonTable compare_conditions(const fs::path& results_baseline, const fs::path& results_inpainted) {
    const auto base = load_results(results_baseline);
    const auto inp = load_results(results_inpainted);
    std::set<GridKey> a, b;
    for (const auto& r : base) {
        if (r.condition != InputCondition::baseline) {
            throw ComparisonError(results_baseline.string() + " holds a non-baseline entry for " + describe(grid_key(r)));
        }
        a.insert(grid_key(r));
    }
    for (const auto& r : inp) {
        if (r.condition != InputCondition::inpainted) {
            throw ComparisonError(results_inpainted.string() + " holds a non-inpainted entry for " + describe(grid_key(r)));
        }
        b.insert(grid_key(r));
    }
    std::vector<std::string> missing;
    for (const auto& k : a) {
        if (!b.count(k)) missing.push_back(describe(k) + " (no inpainted result)");
    }
    for (const auto& k : b) {
        if (!a.count(k)) missing.push_back(describe(k) + " (no baseline result)");
    }
    if (!missing.empty()) {
        std::string msg = "result grids differ:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw ComparisonError(msg);
    }
    ComparisonTable table;
    for (const auto& r : base) table.add(r);
    for (const auto& r : inp) table.add(r);
    table.classify();
    return table;
}

void write_report(const ComparisonTable& table, const fs::path& dir) {
    fs::create_directories(dir);
    write_text_atomic(dir / "report.csv", render_csv(table));
    write_text_atomic(dir / "report.html", render_html(table));
    write_text_atomic(dir / "report.txt", render_text(table));
}

// --- entry points -----------------------------------------------------------------------------

DatasetManifest run_stage(StageName stage, const PipelineConfig& config, const DatasetManifest& manifest,
                          InputCondition condition, const RunOptions& options, RunStats* stats) {
    config.check();
    const Context ctx = make_context(config, options, stats);
    switch (stage) {
        case StageName::embed: {
            stage_embed(manifest, condition, ctx);
            return manifest;
        }
        case StageName::evaluate: {
            stage_evaluate(manifest, stage_embed(manifest, condition, ctx), condition, ctx);
            return manifest;
        }
        case StageName::report: {
            ComparisonTable table;
            for (auto c : {InputCondition::baseline, InputCondition::inpainted}) {
                const fs::path dir = options.out_dir / "results" / std::string(to_string(c));
                if (!fs::is_directory(dir)) continue;
                for (const auto& r : load_results(dir)) table.add(r);
            }
            if (table.cells().empty()) {
                throw StageError(StageName::report, "no results under " + (options.out_dir / "results").string());
            }
            table.classify();
            write_report(table, options.out_dir);
            return manifest;
        }
        default: {
            DatasetManifest out = apply_record_stage(stage, manifest, ctx);
            save_stage_manifest(out, ctx, condition, stage);
            return out;
        }
    }
}

RunSummary run_pipeline(const PipelineConfig& config, const DatasetManifest& manifest, const RunOptions& options) {
    config.check();
    RunSummary summary;
    const Context ctx = make_context(config, options, &summary.stats);

    const bool restoration = config.has_stage(StageName::inpaint);
    std::vector<InputCondition> conditions;
    if (options.condition) {
        if (*options.condition == InputCondition::inpainted && !restoration) {
            throw ConfigError("the inpainted condition needs the inpaint stage in the stage list");
        }
        conditions.push_back(*options.condition);
    } else {
        conditions.push_back(InputCondition::baseline);
        if (restoration) conditions.push_back(InputCondition::inpainted);
    }

    for (auto condition : conditions) {
        DatasetManifest m = manifest;
        std::optional<std::vector<TrialEmbeddings>> embeddings;
        for (auto stage : config.stages) {
            if (condition == InputCondition::baseline && is_restoration_stage(stage)) continue;
            if (stage == StageName::report) continue;
            if (ctx.log) ctx.log("[" + std::string(to_string(stage)) + "] " + std::string(to_string(condition)));
            if (stage == StageName::embed) {
                embeddings = stage_embed(m, condition, ctx);
            } else if (stage == StageName::evaluate) {
                if (!embeddings) embeddings = stage_embed(m, condition, ctx);
                for (auto& r : stage_evaluate(m, *embeddings, condition, ctx)) summary.results.push_back(std::move(r));
            } else {
                m = apply_record_stage(stage, m, ctx);
                save_stage_manifest(m, ctx, condition, stage);
            }
        }
        summary.final_manifests.emplace(condition, std::move(m));
    }

    if (config.has_stage(StageName::report)) {
        if (summary.results.empty()) throw StageError(StageName::report, "report needs the evaluate stage");
        ComparisonTable table;
        for (const auto& r : summary.results) table.add(r);
        table.classify();
        write_report(table, options.out_dir);
        summary.report_dir = options.out_dir;
    }
    return summary;
}

}  // namespace earpipe
