#pragma once

// Reads the reference AUC table (means and cell colours) out of its LaTeX source.

#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "earpipe/reporting.hpp"

namespace table1 {

struct Cell {
    std::string model;  // "ViT_T"
    int patch = 0;
    std::string dataset;
    double baseline = 0;
    double inpainted = 0;
    earpipe::CellClass colour = earpipe::CellClass::neither;
};

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\n");
    const auto e = s.find_last_not_of(" \t\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline std::vector<Cell> load(const std::string& source_path) {
    std::ifstream in(source_path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto begin = text.find("\\begin{tabular}");
    const auto end = text.find("\\end{tabular}", begin);
    if (begin == std::string::npos || end == std::string::npos) return {};
    const std::string body = text.substr(begin, end - begin);

    const std::vector<std::string> datasets{"AWE", "OPIB", "WPUT", "EarVN1.0"};
    const std::regex mean_re(R"((\d\.\d{4})\s*\$\\pm)");
    const std::regex model_re(R"(ViT\\_([TSBL])\\_p(\d+))");

    struct Row {
        std::string model;
        int patch;
        std::vector<double> means;
        std::vector<earpipe::CellClass> colour;
    };
    std::vector<Row> baseline, inpainted;

    std::size_t pos = 0;
    while (pos < body.size()) {
        auto next = body.find("\\\\", pos);
        if (next == std::string::npos) next = body.size();
        const std::string row = body.substr(pos, next - pos);
        pos = next + 2;

        std::vector<std::string> fields;
        std::stringstream ss(row);
        for (std::string f; std::getline(ss, f, '&');) fields.push_back(trim(f));
        if (fields.size() != 7) continue;
        std::smatch m;
        if (!std::regex_search(fields[0], m, model_re)) continue;

        Row r{std::string("ViT_") + m[1].str(), std::stoi(m[2].str()), {}, {}};
        for (int d = 0; d < 4; ++d) {
            const std::string& f = fields[3 + d];
            std::smatch mm;
            if (!std::regex_search(f, mm, mean_re)) return {};
            r.means.push_back(std::stod(mm[1].str()));
            r.colour.push_back(f.find("impGreen") != std::string::npos      ? earpipe::CellClass::surpass
                               : f.find("closeOrange") != std::string::npos ? earpipe::CellClass::close_within_3pct
                                                                            : earpipe::CellClass::neither);
        }
        (fields[2] == "Baseline" ? baseline : inpainted).push_back(std::move(r));
    }
    if (baseline.size() != inpainted.size()) return {};

    std::vector<Cell> cells;
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        if (baseline[i].model != inpainted[i].model || baseline[i].patch != inpainted[i].patch) return {};
        for (int d = 0; d < 4; ++d) {
            cells.push_back({baseline[i].model, baseline[i].patch, datasets[d], baseline[i].means[d],
                             inpainted[i].means[d], inpainted[i].colour[d]});
        }
    }
    return cells;
}

}  // namespace table1
