#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "earpipe/reporting.hpp"
#include "oracles.hpp"
#include "table1.hpp"

using namespace earpipe;

namespace {

EvaluationResult result(std::string model, int patch, std::string ds, InputCondition c, double mean) {
    EvaluationResult r;
    r.dataset = std::move(ds);
    r.backend = {model_family_from_string(model), patch};
    r.condition = c;
    const std::vector<double> trials{mean - 0.001, mean + 0.001};
    r.summary = aggregate_trials(trials);
    return r;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Classify, ReferenceExamples) {
    EXPECT_EQ(classify_cell(0.7086, 0.7660), CellClass::surpass);
    EXPECT_EQ(classify_cell(0.9168, 0.9098), CellClass::close_within_3pct);
    EXPECT_EQ(classify_cell(0.9442, 0.9140), CellClass::neither);
}

TEST(Classify, BoundariesAndErrors) {
    EXPECT_EQ(classify_cell(0.5, 0.5), CellClass::close_within_3pct);
    EXPECT_EQ(classify_cell(1.0, 0.97), CellClass::close_within_3pct);
    EXPECT_EQ(classify_cell(1.0, 0.9699), CellClass::neither);
    EXPECT_THROW(classify_cell(0.0, 0.5), ClassificationError);
}

TEST(Classify, ExhaustiveAndExclusive) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(1e-6, 1.0);
    for (int t = 0; t < 10000; ++t) {
        const double b = u(rng), i = u(rng);
        const bool surpass = i > b;
        const bool close = !surpass && (b - i) / b <= 0.03;
        const CellClass c = classify_cell(b, i);
        ASSERT_EQ(c == CellClass::surpass, surpass);
        ASSERT_EQ(c == CellClass::close_within_3pct, close);
        ASSERT_EQ(c == CellClass::neither, !surpass && !close);
    }
}

TEST(Table1, FixtureParsesFromSource) {
    const auto cells = table1::load(EARPIPE_TABLE_SOURCE);
    ASSERT_EQ(cells.size(), 48u);
    EXPECT_EQ(cells[0].model, "ViT_T");
    EXPECT_EQ(cells[0].dataset, "AWE");
    EXPECT_DOUBLE_EQ(cells[0].baseline, 0.9832);
    EXPECT_DOUBLE_EQ(cells[0].inpainted, 0.9260);
    int green = 0, orange = 0;
    for (const auto& c : cells) {
        green += c.colour == CellClass::surpass;
        orange += c.colour == CellClass::close_within_3pct;
    }
    EXPECT_EQ(green, 15);
    EXPECT_EQ(orange, 10);
}

// Every green cell is reproduced, every orange cell is reproduced, and the rule marks four
// uncoloured cells as close: their relative gaps (2.5% to 3.0%) fall under 3%.
TEST(Table1, RelativeRuleAgainstReferenceColouring) {
    std::set<std::string> mismatches;
    for (const auto& c : table1::load(EARPIPE_TABLE_SOURCE)) {
        const CellClass got = classify_cell(c.baseline, c.inpainted);
        if (c.colour != CellClass::neither) EXPECT_EQ(got, c.colour) << c.model << c.patch << " " << c.dataset;
        if (got != c.colour) mismatches.insert(c.model + "_p" + std::to_string(c.patch) + "/" + c.dataset);
    }
    const std::set<std::string> expected{"ViT_S_p16/WPUT", "ViT_B_p28/OPIB", "ViT_L_p16/WPUT",
                                         "ViT_L_p28/OPIB"};
    EXPECT_EQ(mismatches, expected);
}

TEST(Render, SingleCell) {
    ComparisonTable t;
    t.add(result("ViT_T", 16, "AWE", InputCondition::baseline, 0.9));
    t.add(result("ViT_T", 16, "AWE", InputCondition::inpainted, 0.95));
    t.classify();
    const std::string csv = render_csv(t);
    EXPECT_EQ(csv,
              "model,patch,dataset,baseline_mean,baseline_std,inpainted_mean,inpainted_std,classification\n"
              "ViT_T,16,AWE,0.9000,0.0014,0.9500,0.0014,surpass\n");
    const std::string text = render_text(t);
    EXPECT_NE(text.find("0.9500 ± 0.0014 [+]"), std::string::npos);
    const std::string html = render_html(t);
    EXPECT_NE(html.find("class=\"surpass\""), std::string::npos);
    EXPECT_NE(html.find("198,239,206"), std::string::npos);
}

TEST(Render, MissingCellsShowDash) {
    ComparisonTable t;
    for (auto c : {InputCondition::baseline, InputCondition::inpainted}) {
        t.add(result("ViT_B", 16, "AWE", c, 0.9));
        t.add(result("ViT_B", 28, "OPIB", c, 0.8));
    }
    t.classify();
    EXPECT_NE(render_csv(t).find("ViT_B,16,OPIB,—,—,—,—,"), std::string::npos);
    EXPECT_NE(render_text(t).find("—"), std::string::npos);
    EXPECT_NE(render_html(t).find("<td>—</td>"), std::string::npos);
}

TEST(Render, Table1ColoursInHtml) {
    ComparisonTable t;
    for (const auto& c : table1::load(EARPIPE_TABLE_SOURCE)) {
        t.add(result(c.model, c.patch, c.dataset, InputCondition::baseline, c.baseline));
        t.add(result(c.model, c.patch, c.dataset, InputCondition::inpainted, c.inpainted));
    }
    t.classify();
    EXPECT_EQ(t.models().size(), 12u);
    EXPECT_EQ(t.models().front(), std::make_pair(std::string("ViT_T"), 16));
    EXPECT_EQ(t.models().back(), std::make_pair(std::string("ViT_L"), 56));
    EXPECT_EQ(t.datasets(), (std::vector<std::string>{"AWE", "OPIB", "WPUT", "EarVN1.0"}));
    const std::string html = render_html(t);
    auto count = [&](const std::string& needle) {
        int n = 0;
        for (auto p = html.find(needle); p != std::string::npos; p = html.find(needle, p + 1)) ++n;
        return n;
    };
    EXPECT_EQ(count("<td class=\"surpass\""), 15);
    EXPECT_EQ(count("<td class=\"close\""), 14);
}

TEST(Render, RoundingOnlyAtRenderTime) {
    ComparisonTable t;
    t.add(result("ViT_S", 16, "X", InputCondition::baseline, 0.80004));
    t.add(result("ViT_S", 16, "X", InputCondition::inpainted, 0.80006));
    t.classify();
    EXPECT_EQ(*t.find({"ViT_S", 16, "X"})->classification, CellClass::surpass);
    EXPECT_NE(render_text(t).find("0.8001"), std::string::npos);
}

TEST(RocPlot, PerfectSeparationPassesThroughCorner) {
    const auto dir = oracle::scratch_dir("roc_perfect");
    const auto pts = emit_roc_plot({{0.9, 0.8}, {0.1, 0.2}}, dir / "roc.svg", "perfect");
    EXPECT_NE(std::find(pts.begin(), pts.end(), RocPoint{0, 1}), pts.end());
    const std::string svg = slurp(dir / "roc.svg");
    EXPECT_NE(svg.find("AUC = 1.0000"), std::string::npos);
    EXPECT_NE(svg.find("<svg"), std::string::npos);
}

TEST(RocPlot, IdenticalDistributionsGiveDiagonal) {
    const auto dir = oracle::scratch_dir("roc_diag");
    const auto pts = emit_roc_plot({{0.5, 0.5}, {0.5, 0.5, 0.5}}, dir / "roc.svg", "ties");
    EXPECT_EQ(pts, (std::vector<RocPoint>{{0, 0}, {1, 1}}));
    EXPECT_NE(slurp(dir / "roc.svg").find("AUC = 0.5000"), std::string::npos);
}

TEST(RocPlot, FiveScoreFixtureAndDeterminism) {
    const auto dir = oracle::scratch_dir("roc_fixture");
    const ScoreSet s{{0.9, 0.6, 0.3}, {0.7, 0.2}};
    const auto pts = emit_roc_plot(s, dir / "a.svg", "fixture");
    const std::vector<RocPoint> expected{{0, 0}, {0, 1.0 / 3}, {0.5, 1.0 / 3}, {0.5, 2.0 / 3}, {0.5, 1}, {1, 1}};
    ASSERT_EQ(pts.size(), expected.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_NEAR(pts[i].fpr, expected[i].fpr, 1e-12);
        EXPECT_NEAR(pts[i].tpr, expected[i].tpr, 1e-12);
    }
    emit_roc_plot(s, dir / "b.svg", "fixture");
    EXPECT_EQ(slurp(dir / "a.svg"), slurp(dir / "b.svg"));
}

TEST(RocPlot, UnwritablePathIsIoError) {
    EXPECT_THROW(emit_roc_plot({{0.9}, {0.1}}, "/proc/earpipe/roc.svg", "x"), Error);
}
