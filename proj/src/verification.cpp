#include "earpipe/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace earpipe {

PairEnumeration::PairEnumeration(const DatasetManifest& manifest) {
    std::vector<std::size_t> sizes;
    for (auto& [key, indices] : manifest.identities()) {
        keys_.push_back(key);
        sizes.push_back(indices.size());
        groups_.push_back(indices);
    }
    counts_ = pair_counts(sizes);
}

PairEnumeration enumerate_pairs(const DatasetManifest& manifest) {
    PairEnumeration pairs(manifest);
    if (pairs.identities().size() < 2) {
        throw ProtocolError("verification requires N ≥ 2 identities, got " +
                            std::to_string(pairs.identities().size()));
    }
    return pairs;
}

PairCounts pair_counts(std::span<const std::size_t> identity_sizes) {
    PairCounts c;
    std::uint64_t seen = 0;
    for (auto m : identity_sizes) {
        c.genuine += static_cast<std::uint64_t>(m) * (m - (m > 0 ? 1 : 0)) / 2;
        c.impostor += seen * m;
        seen += m;
    }
    return c;
}

ScoreSet score_all_pairs(const EmbeddingTable& embeddings, const DatasetManifest& manifest,
                         const ScoringOptions& options) {
    const PairEnumeration pairs = enumerate_pairs(manifest);
    const auto& groups = pairs.identities();

    // Unit-normalized embeddings, one row per record, grouped by identity.
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(groups.size());
    for (const auto& g : groups) {
        Eigen::MatrixXd block(static_cast<Eigen::Index>(g.size()), kEmbeddingDim);
        for (std::size_t r = 0; r < g.size(); ++r) {
            const auto& key = manifest.records[g[r]].key;
            auto it = embeddings.find(key);
            if (it == embeddings.end()) {
                throw ScoringError("no embedding for record '" + key + "'");
            }
            const Eigen::VectorXd v = it->second.vector.cast<double>();
            const double n = v.norm();
            if (n == 0.0) throw ScoringError("zero-norm embedding for record '" + key + "'");
            block.row(static_cast<Eigen::Index>(r)) = v.transpose() / n;
        }
        blocks.push_back(std::move(block));
    }

    auto clamp = [](double s) { return std::clamp(s, -1.0, 1.0); };
    ScoreSet out;
    out.genuine.reserve(pairs.counts().genuine);
    for (const auto& b : blocks) {
        const Eigen::MatrixXd sims = b * b.transpose();
        for (Eigen::Index i = 0; i < sims.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < sims.cols(); ++j) out.genuine.push_back(clamp(sims(i, j)));
        }
    }

    std::mt19937_64 rng(options.subsample_seed);
    std::bernoulli_distribution keep(options.impostor_fraction.value_or(1.0));
    if (!options.impostor_fraction) out.impostor.reserve(pairs.counts().impostor);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        for (std::size_t j = i + 1; j < blocks.size(); ++j) {
            const Eigen::MatrixXd sims = blocks[i] * blocks[j].transpose();
            for (Eigen::Index a = 0; a < sims.rows(); ++a) {
                for (Eigen::Index b = 0; b < sims.cols(); ++b) {
                    if (options.impostor_fraction && !keep(rng)) continue;
                    out.impostor.push_back(clamp(sims(a, b)));
                }
            }
        }
    }
    return out;
}

double compute_auc(const ScoreSet& scores) {
    if (scores.genuine.empty() || scores.impostor.empty()) {
        throw ProtocolError("AUC needs non-empty genuine and impostor score sets");
    }
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double s) { return std::isfinite(s); });
    };
    if (!finite(scores.genuine) || !finite(scores.impostor)) {
        throw ProtocolError("AUC input contains non-finite scores");
    }

    std::vector<double> g = scores.genuine, im = scores.impostor;
    std::sort(g.begin(), g.end());
    std::sort(im.begin(), im.end());

    // Twice the Mann-Whitney U statistic: each impostor below a genuine score counts 2,
    // each tie counts 1. Integer arithmetic keeps the result exact.
    std::uint64_t twice_u = 0;
    std::size_t below = 0, at_or_below = 0;
    for (double s : g) {
        while (below < im.size() && im[below] < s) ++below;
        if (at_or_below < below) at_or_below = below;
        while (at_or_below < im.size() && im[at_or_below] <= s) ++at_or_below;
        twice_u += 2 * below + (at_or_below - below);
    }
    return static_cast<double>(twice_u) /
           (2.0 * static_cast<double>(g.size()) * static_cast<double>(im.size()));
}

std::vector<RocPoint> roc_curve(const ScoreSet& scores) {
    if (scores.genuine.empty() || scores.impostor.empty()) {
        throw ProtocolError("ROC needs non-empty genuine and impostor score sets");
    }
    std::vector<std::pair<double, bool>> all;
    all.reserve(scores.genuine.size() + scores.impostor.size());
    for (double s : scores.genuine) all.emplace_back(s, true);
    for (double s : scores.impostor) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first > b.first; });

    const double g = static_cast<double>(scores.genuine.size());
    const double n = static_cast<double>(scores.impostor.size());
    std::vector<RocPoint> curve{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < all.size();) {
        const double threshold = all[i].first;
        for (; i < all.size() && all[i].first == threshold; ++i) (all[i].second ? tp : fp)++;
        curve.push_back({fp / n, tp / g});
    }
    return curve;
}

std::string TrialSummary::formatted() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f ± %.4f", mean, std);
    return buf;
}

TrialSummary aggregate_trials(std::span<const double> aucs) {
    if (aucs.empty()) throw ProtocolError("no trials to aggregate");
    TrialSummary t;
    t.auc_per_trial.assign(aucs.begin(), aucs.end());
    t.trials = static_cast<int>(aucs.size());
    const Eigen::Map<const Eigen::ArrayXd> a(aucs.data(), static_cast<Eigen::Index>(aucs.size()));
    t.mean = a.mean();
    t.std = aucs.size() > 1 ? std::sqrt((a - t.mean).square().sum() / (a.size() - 1)) : 0.0;
    return t;
}

std::string_view to_string(InputCondition c) {
    return c == InputCondition::baseline ? "baseline" : "inpainted";
}

InputCondition input_condition_from_string(std::string_view s) {
    if (s == "baseline") return InputCondition::baseline;
    if (s == "inpainted") return InputCondition::inpainted;
    throw ConfigError("unknown input condition '" + std::string(s) + "'");
}

nlohmann::json to_json(const EvaluationResult& r) {
    return {{"dataset", r.dataset},
            {"backend",
             {{"family", to_string(r.backend.family)}, {"patch_size", r.backend.patch_size}}},
            {"input_condition", to_string(r.condition)},
            {"trials", r.summary.auc_per_trial},
            {"mean", r.summary.mean},
            {"std", r.summary.std},
            {"pair_counts", {{"genuine", r.pair_counts.genuine}, {"impostor", r.pair_counts.impostor}}}};
}

EvaluationResult evaluation_result_from_json(const nlohmann::json& j) {
    try {
        EvaluationResult r;
        r.dataset = j.at("dataset").get<std::string>();
        r.backend.family = model_family_from_string(j.at("backend").at("family").get<std::string>());
        r.backend.patch_size = j.at("backend").at("patch_size").get<int>();
        r.condition = input_condition_from_string(j.at("input_condition").get<std::string>());
        const auto trials = j.at("trials").get<std::vector<double>>();
        if (trials.empty()) throw ProtocolError("results entry has no trials");
        r.summary = aggregate_trials(trials);
        // Stored statistics win, so results produced elsewhere keep their reported values.
        if (j.contains("mean")) r.summary.mean = j["mean"].get<double>();
        if (j.contains("std")) r.summary.std = j["std"].get<double>();
        if (j.contains("pair_counts")) {
            r.pair_counts.genuine = j["pair_counts"].value("genuine", std::uint64_t{0});
            r.pair_counts.impostor = j["pair_counts"].value("impostor", std::uint64_t{0});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ComparisonError(std::string("malformed results entry: ") + e.what());
    }
}

}  // namespace earpipe
