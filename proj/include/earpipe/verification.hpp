#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "earpipe/core_types.hpp"
#include "earpipe/embedding.hpp"

namespace earpipe {

struct PairCounts {
    std::uint64_t genuine = 0;
    std::uint64_t impostor = 0;
    bool operator==(const PairCounts&) const = default;
};

enum class PairKind { genuine, impostor };

/// Identities of a manifest in canonical order (by identity key), with their record indices,
/// and the genuine/impostor pair stream over them.
class PairEnumeration {
public:
    explicit PairEnumeration(const DatasetManifest& manifest);

    const PairCounts& counts() const { return counts_; }
    const std::vector<std::string>& identity_keys() const { return keys_; }
    const std::vector<std::vector<std::size_t>>& identities() const { return groups_; }

    /// Calls f(record_a, record_b, kind) for every unordered pair exactly once: all genuine
    /// pairs (identity i, then a < b in record order), then impostor pairs ordered by
    /// (identity i, identity j > i, record of i, record of j).
    template <typename F>
    void for_each(F&& f) const {
        for (const auto& g : groups_) {
            for (std::size_t a = 0; a < g.size(); ++a) {
                for (std::size_t b = a + 1; b < g.size(); ++b) f(g[a], g[b], PairKind::genuine);
            }
        }
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            for (std::size_t j = i + 1; j < groups_.size(); ++j) {
                for (auto a : groups_[i]) {
                    for (auto b : groups_[j]) f(a, b, PairKind::impostor);
                }
            }
        }
    }

private:
    std::vector<std::string> keys_;
    std::vector<std::vector<std::size_t>> groups_;
    PairCounts counts_;
};

/// Throws ProtocolError when the manifest has fewer than two identities.
PairEnumeration enumerate_pairs(const DatasetManifest& manifest);

/// Closed-form pair counts for identity sizes M_i.
PairCounts pair_counts(std::span<const std::size_t> identity_sizes);

/// dot(a,b) / (|a||b|), clamped to [-1, 1]. Throws ScoringError on a zero-norm input.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    const auto ad = a.template cast<double>();
    const auto bd = b.template cast<double>();
    const double na = ad.norm(), nb = bd.norm();
    if (na == 0.0 || nb == 0.0) throw ScoringError("cosine similarity of a zero-norm vector");
    const double s = ad.dot(bd) / (na * nb);
    return s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
}

struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

struct ScoringOptions {
    /// Keep each impostor pair with this probability (seeded); unset keeps all pairs.
    std::optional<double> impostor_fraction;
    std::uint64_t subsample_seed = 0;
};

/// Scores every pair of enumerate_pairs in its canonical order. Each identity-pair block is
/// scored with one matrix product, so the full score matrix is never held at once.
ScoreSet score_all_pairs(const EmbeddingTable& embeddings, const DatasetManifest& manifest,
                         const ScoringOptions& options = {});

/// P(genuine > impostor) + P(tie)/2, exact, via sorted merge counting.
double compute_auc(const ScoreSet& scores);

struct RocPoint {
    double fpr = 0;
    double tpr = 0;
    bool operator==(const RocPoint&) const = default;
};

/// Operating points from the strictest threshold to the loosest, starting at (0,0) and
/// ending at (1,1); one point per distinct score.
std::vector<RocPoint> roc_curve(const ScoreSet& scores);

struct TrialSummary {
    std::vector<double> auc_per_trial;
    double mean = 0;
    double std = 0;  // sample standard deviation; 0 for a single trial
    int trials = 0;

    /// A single trial has no spread estimate.
    bool degenerate() const { return trials < 2; }
    /// "mean ± std" with four decimals.
    std::string formatted() const;
};

TrialSummary aggregate_trials(std::span<const double> aucs);

enum class InputCondition { baseline, inpainted };
std::string_view to_string(InputCondition c);
InputCondition input_condition_from_string(std::string_view s);

/// Contents of a results file.
struct EvaluationResult {
    std::string dataset;
    BackendDescriptor backend;
    InputCondition condition = InputCondition::baseline;
    TrialSummary summary;
    PairCounts pair_counts;
};

nlohmann::json to_json(const EvaluationResult& r);
EvaluationResult evaluation_result_from_json(const nlohmann::json& j);

}  // namespace earpipe
