#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "earpipe/verification.hpp"

namespace earpipe {

enum class CellClass { surpass, close_within_3pct, neither };

std::string_view to_string(CellClass c);

/// surpass: inpainted > baseline. close_within_3pct: not above, and the gap relative to the
/// baseline is at most `relative_tolerance`. Throws ClassificationError for a zero baseline.
CellClass classify_cell(double baseline_mean, double inpainted_mean,
                        double relative_tolerance = 0.03);

struct GridKey {
    std::string model;  // e.g. "ViT_B"
    int patch = 0;
    std::string dataset;
    auto operator<=>(const GridKey&) const = default;
};

struct ComparisonCell {
    std::optional<TrialSummary> baseline;
    std::optional<TrialSummary> inpainted;
    /// Set only when both conditions are present.
    std::optional<CellClass> classification;
};

/// Results laid out like the comparison table: one Baseline and one Inpainted row per
/// (model, patch), one column per dataset.
class ComparisonTable {
public:
    void add(const EvaluationResult& result);

    /// Fills in classifications; call after all results are added.
    void classify(double relative_tolerance = 0.03);

    const std::vector<std::string>& datasets() const { return datasets_; }
    std::vector<std::pair<std::string, int>> models() const;
    const ComparisonCell* find(const GridKey& key) const;
    const std::map<GridKey, ComparisonCell>& cells() const { return cells_; }

private:
    std::vector<std::string> datasets_;  // first-seen order
    std::map<GridKey, ComparisonCell> cells_;
};

/// model,patch,dataset,baseline_mean,baseline_std,inpainted_mean,inpainted_std,classification
std::string render_csv(const ComparisonTable& table);
/// Table with green (surpass) and orange (close) cell backgrounds.
std::string render_html(const ComparisonTable& table);
/// Aligned plain-text table; classification marked with [+] surpass and [~] close.
std::string render_text(const ComparisonTable& table);

/// Writes an SVG ROC plot with the AUC in the legend and returns the plotted points.
std::vector<RocPoint> emit_roc_plot(const ScoreSet& scores, const std::filesystem::path& file,
                                    const std::string& title);

}  // namespace earpipe
