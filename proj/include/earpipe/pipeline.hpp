#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "earpipe/alignment.hpp"
#include "earpipe/detection.hpp"
#include "earpipe/embedding.hpp"
#include "earpipe/masking.hpp"
#include "earpipe/reporting.hpp"
#include "earpipe/verification.hpp"

namespace earpipe {

enum class StageName { ingest, side_split, align, detect, mask, inpaint, embed, evaluate, report };

std::string_view to_string(StageName s);
StageName stage_from_string(std::string_view s);

/// Every stage in canonical order; a configured stage list must be a subsequence of it.
const std::vector<StageName>& all_stages();

struct BackendSelection {
    std::string supervised_detector = "mock_replay";  // mock_replay | mock_fixed | none
    std::string zero_shot_detector = "none";          // mock_replay | mock_fixed | none
    std::string segmenter = "mock_ellipse";
    std::string inpainter = "mock_diffusion";
    std::string ear_segmenter = "mock_threshold";
    std::string side_classifier = "mock_mass";
    double detector_jitter = 0.0;
    std::uint64_t seed = 7;
    /// Embedders to evaluate. Mock entries are computed; other families must already have
    /// their vectors in the embedding cache.
    std::vector<BackendDescriptor> embedders{{ModelFamily::mock, 16}};
};

struct PipelineConfig {
    std::vector<StageName> stages = all_stages();
    DetectorConfig detector;
    MaskingConfig masking;
    AlignmentConfig alignment;
    BackendSelection backends;
    std::filesystem::path cache_dir;  // empty: <out>/cache
    int workers = 0;                  // 0: available parallelism
    int trials = 5;
    std::optional<double> impostor_fraction;
    std::uint64_t subsample_seed = 0;

    /// Throws ConfigError when an invariant does not hold.
    void check() const;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);

    /// Hash of the fields that affect outputs. Key order in the source document, cache
    /// location and worker count do not enter it.
    std::string fingerprint() const;

    bool has_stage(StageName s) const;
};

PipelineConfig load_config(const std::filesystem::path& file);

enum class DatasetLayout { subject_folders, flat_with_index };

DatasetLayout dataset_layout_from_string(std::string_view s);

struct IngestReport {
    DatasetManifest manifest;
    std::vector<std::string> warnings;
};

/// subject_folders: root/<subject>/*.png, or root/<subject>/{left,right}/*.png.
/// flat_with_index: root/index.csv with a `path,subject_id[,side]` header.
/// Records come out in lexicographic path order. Throws IngestionError when nothing is found.
IngestReport ingest_dataset(const std::filesystem::path& root, DatasetLayout layout,
                            const std::string& name = "");

struct RunStats {
    std::map<std::string, std::size_t> executed;
    std::map<std::string, std::size_t> cached;

    std::size_t total_executed() const;
};

struct RunOptions {
    std::filesystem::path out_dir;
    /// Restricts the run to one condition; by default baseline always runs and inpainted runs
    /// when the stage list contains inpaint.
    std::optional<InputCondition> condition;
    /// Progress lines; silent when empty.
    std::function<void(const std::string&)> log;
};

struct RunSummary {
    RunStats stats;
    std::vector<EvaluationResult> results;
    std::map<InputCondition, DatasetManifest> final_manifests;
    std::optional<std::filesystem::path> report_dir;
};

/// Runs the configured stages on `manifest`. Outputs under out_dir:
///   manifests/<condition>/<stage>.json, results/<condition>/<backend>.json,
///   roc/<condition>_<backend>.svg, report.{csv,html,txt}, cache/...
/// Per-record work is cached under (stage fingerprint, record key, input content hash).
RunSummary run_pipeline(const PipelineConfig& config, const DatasetManifest& manifest,
                        const RunOptions& options);

/// Runs one stage on a manifest and returns the rewritten manifest. embed and evaluate also
/// write results; report reads results from out_dir.
DatasetManifest run_stage(StageName stage, const PipelineConfig& config,
                          const DatasetManifest& manifest, InputCondition condition,
                          const RunOptions& options, RunStats* stats = nullptr);

/// Evaluation results from a JSON file holding one object or an array, or from every .json
/// file of a directory (sorted by name).
std::vector<EvaluationResult> load_results(const std::filesystem::path& source);

/// Joins baseline and inpainted results over the (model, patch, dataset) grid. Throws
/// ComparisonError listing the keys present on one side only.
ComparisonTable compare_conditions(const std::filesystem::path& results_baseline,
                                   const std::filesystem::path& results_inpainted);

/// Writes report.csv, report.html and report.txt into dir.
void write_report(const ComparisonTable& table, const std::filesystem::path& dir);

}  // namespace earpipe
