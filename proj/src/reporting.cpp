#include "earpipe/reporting.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace earpipe {

namespace {

constexpr const char* kMissing = "—";

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

int family_rank(const std::string& model) {
    static const std::vector<std::string> order{"ViT_T", "ViT_S", "ViT_B", "ViT_L", "mock"};
    auto it = std::find(order.begin(), order.end(), model);
    return static_cast<int>(it - order.begin());
}

std::string cell_text(const std::optional<TrialSummary>& s) {
    return s ? s->formatted() : kMissing;
}

// Column width in code points; the table contains a few multi-byte characters (±, —).
std::size_t display_width(const std::string& s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t width) {
    const auto w = display_width(s);
    return s + std::string(width > w ? width - w : 0, ' ');
}

std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(CellClass c) {
    switch (c) {
        case CellClass::surpass: return "surpass";
        case CellClass::close_within_3pct: return "close_within_3pct";
        case CellClass::neither: return "neither";
    }
    return "neither";
}

CellClass classify_cell(double baseline_mean, double inpainted_mean, double relative_tolerance) {
    if (baseline_mean == 0.0) throw ClassificationError("baseline mean is zero");
    if (inpainted_mean > baseline_mean) return CellClass::surpass;
    // 1e-12 keeps a gap of exactly the tolerance (1.0 vs 0.97) on the close side.
    if ((baseline_mean - inpainted_mean) / baseline_mean <= relative_tolerance + 1e-12) {
        return CellClass::close_within_3pct;
    }
    return CellClass::neither;
}

void ComparisonTable::add(const EvaluationResult& result) {
    if (std::find(datasets_.begin(), datasets_.end(), result.dataset) == datasets_.end()) {
        datasets_.push_back(result.dataset);
    }
    GridKey key{std::string(to_string(result.backend.family)), result.backend.patch_size,
                result.dataset};
    auto& cell = cells_[key];
    (result.condition == InputCondition::baseline ? cell.baseline : cell.inpainted) = result.summary;
}

void ComparisonTable::classify(double relative_tolerance) {
    for (auto& [key, cell] : cells_) {
        cell.classification.reset();
        if (cell.baseline && cell.inpainted) {
            cell.classification =
                classify_cell(cell.baseline->mean, cell.inpainted->mean, relative_tolerance);
        }
    }
}

std::vector<std::pair<std::string, int>> ComparisonTable::models() const {
    std::vector<std::pair<std::string, int>> out;
    for (const auto& [key, cell] : cells_) {
        std::pair<std::string, int> m{key.model, key.patch};
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        const int ra = family_rank(a.first), rb = family_rank(b.first);
        if (ra != rb) return ra < rb;
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    return out;
}

const ComparisonCell* ComparisonTable::find(const GridKey& key) const {
    auto it = cells_.find(key);
    return it == cells_.end() ? nullptr : &it->second;
}

std::string render_csv(const ComparisonTable& table) {
    std::ostringstream out;
    out << "model,patch,dataset,baseline_mean,baseline_std,inpainted_mean,inpainted_std,"
           "classification\n";
    for (const auto& [model, patch] : table.models()) {
        for (const auto& ds : table.datasets()) {
            const auto* cell = table.find({model, patch, ds});
            auto stat = [&](const std::optional<TrialSummary>& s, bool mean) {
                return s ? fixed4(mean ? s->mean : s->std) : std::string(kMissing);
            };
            out << model << ',' << patch << ',' << ds << ',';
            if (!cell) {
                out << kMissing << ',' << kMissing << ',' << kMissing << ',' << kMissing << ",\n";
                continue;
            }
            out << stat(cell->baseline, true) << ',' << stat(cell->baseline, false) << ','
                << stat(cell->inpainted, true) << ',' << stat(cell->inpainted, false) << ','
                << (cell->classification ? to_string(*cell->classification) : "") << '\n';
        }
    }
    return out.str();
}

std::string render_html(const ComparisonTable& table) {
    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
           "<title>AUC comparison</title>\n<style>\n"
           "table { border-collapse: collapse; font-family: sans-serif; }\n"
           "th, td { border: 1px solid #999; padding: 4px 8px; text-align: center; }\n"
           "td.surpass { background-color: rgb(198,239,206); font-weight: bold; }\n"
           "td.close { background-color: rgb(255,229,204); }\n"
           "</style>\n</head>\n<body>\n<table>\n<tr><th>Model</th><th>Patch &amp; Stride</th>"
           "<th>Input</th>";
    for (const auto& ds : table.datasets()) out << "<th>" << html_escape(ds) << "</th>";
    out << "</tr>\n";
    for (const auto& [model, patch] : table.models()) {
        const std::string name = model + "_p" + std::to_string(patch);
        for (bool inpainted : {false, true}) {
            out << "<tr><td>" << html_escape(name) << "</td><td>" << patch << "</td><td>"
                << (inpainted ? "Inpainted" : "Baseline") << "</td>";
            for (const auto& ds : table.datasets()) {
                const auto* cell = table.find({model, patch, ds});
                const auto* s = cell ? &(inpainted ? cell->inpainted : cell->baseline) : nullptr;
                std::string cls;
                if (inpainted && cell && cell->classification) {
                    if (*cell->classification == CellClass::surpass) cls = " class=\"surpass\"";
                    if (*cell->classification == CellClass::close_within_3pct) cls = " class=\"close\"";
                }
                out << "<td" << cls << ">" << (s ? cell_text(*s) : kMissing) << "</td>";
            }
            out << "</tr>\n";
        }
    }
    out << "</table>\n</body>\n</html>\n";
    return out.str();
}

std::string render_text(const ComparisonTable& table) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Model", "Patch", "Input"};
    for (const auto& ds : table.datasets()) header.push_back(ds);
    rows.push_back(header);
    for (const auto& [model, patch] : table.models()) {
        for (bool inpainted : {false, true}) {
            std::vector<std::string> row{model + "_p" + std::to_string(patch),
                                         std::to_string(patch),
                                         inpainted ? "Inpainted" : "Baseline"};
            for (const auto& ds : table.datasets()) {
                const auto* cell = table.find({model, patch, ds});
                if (!cell) {
                    row.push_back(kMissing);
                    continue;
                }
                std::string text = cell_text(inpainted ? cell->inpainted : cell->baseline);
                if (inpainted && cell->classification) {
                    if (*cell->classification == CellClass::surpass) text += " [+]";
                    if (*cell->classification == CellClass::close_within_3pct) text += " [~]";
                }
                row.push_back(text);
            }
            rows.push_back(row);
        }
    }

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
    }
    std::ostringstream out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            line += (c ? "  " : "") + pad(rows[r][c], widths[c]);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : widths) total += w;
            out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
        }
    }
    out << "\n[+] surpasses baseline   [~] within 3% of baseline (relative), not above\n";
    return out.str();
}

std::vector<RocPoint> emit_roc_plot(const ScoreSet& scores, const std::filesystem::path& file,
                                    const std::string& title) {
    const auto curve = roc_curve(scores);
    const double auc = compute_auc(scores);

    constexpr double size = 400, margin = 50;
    auto px = [&](double fpr) { return margin + fpr * size; };
    auto py = [&](double tpr) { return margin + (1.0 - tpr) * size; };
    char buf[128];

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"500\" height=\"500\" "
           "viewBox=\"0 0 500 500\">\n"
        << "<rect width=\"500\" height=\"500\" fill=\"white\"/>\n"
        << "<text x=\"250\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">"
        << html_escape(title) << "</text>\n"
        << "<rect x=\"50\" y=\"50\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n"
        << "<line x1=\"50\" y1=\"450\" x2=\"450\" y2=\"50\" stroke=\"#bbb\" "
           "stroke-dasharray=\"4,4\"/>\n"
        << "<text x=\"250\" y=\"485\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">False positive rate</text>\n"
        << "<text x=\"15\" y=\"250\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\" transform=\"rotate(-90 15 250)\">True positive rate</text>\n"
        << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(curve[i].fpr),
                      py(curve[i].tpr));
        svg << buf;
    }
    svg << "\"/>\n";
    std::snprintf(buf, sizeof buf, "AUC = %.4f", auc);
    svg << "<rect x=\"300\" y=\"400\" width=\"140\" height=\"36\" fill=\"white\" stroke=\"#999\"/>\n"
        << "<line x1=\"308\" y1=\"418\" x2=\"330\" y2=\"418\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n"
        << "<text x=\"336\" y=\"422\" font-family=\"sans-serif\" font-size=\"12\">" << buf
        << "</text>\n</svg>\n";

    std::error_code ec;
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path(), ec);
    std::ofstream out(file);
    if (!out) throw IoError("cannot write ROC plot " + file.string());
    out << svg.str();
    if (!out) throw IoError("cannot write ROC plot " + file.string());
    return curve;
}

}  // namespace earpipe
