// Acceptance checks. `acceptance <name>` runs one and prints a single PASS/FAIL line;
// without arguments every check runs in turn.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "earpipe/alignment.hpp"
#include "earpipe/masking.hpp"
#include "earpipe/pipeline.hpp"
#include "earpipe/reporting.hpp"
#include "earpipe/restoration.hpp"
#include "earpipe/verification.hpp"
#include "oracles.hpp"
#include "table1.hpp"

using namespace earpipe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

bool sh(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()) == 0; }

// --- pairs ---------------------------------------------------------------------------------------

Outcome pairs() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    int bad = 0;
    for (int t = 0; t < 200; ++t) {
        const int n = 2 + static_cast<int>(rng() % 9);
        DatasetManifest m;
        std::vector<int> label;
        for (int i = 0; i < n; ++i) {
            const int mi = 1 + static_cast<int>(rng() % 6);
            for (int j = 0; j < mi; ++j) {
                ImageRecord r;
                r.subject_id = "s" + std::to_string(i);
                r.path = r.subject_id + "_" + std::to_string(j) + ".png";
                r.key = r.subject_id + "/" + std::to_string(j);
                m.records.push_back(r);
                label.push_back(i);
            }
        }
        // Records of one identity need not be adjacent.
        std::vector<std::size_t> perm(m.records.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        DatasetManifest shuffled = m;
        std::vector<int> shuffled_label(label.size());
        for (std::size_t k = 0; k < perm.size(); ++k) {
            shuffled.records[k] = m.records[perm[k]];
            shuffled_label[k] = label[perm[k]];
        }
        const auto brute = oracle::brute_pairs(shuffled_label);
        const auto got = enumerate_pairs(shuffled).counts();
        bad += got.genuine != brute.genuine || got.impostor != brute.impostor;
    }
    DatasetManifest awe;
    for (int i = 0; i < 100; ++i) {
        for (int j = 0; j < 10; ++j) {
            ImageRecord r;
            r.subject_id = "a" + std::to_string(i);
            r.path = r.subject_id + "_" + std::to_string(j) + ".png";
            r.key = r.subject_id + "/" + std::to_string(j);
            awe.records.push_back(r);
        }
    }
    const auto c = enumerate_pairs(awe).counts();
    const double secs = seconds_since(t0);
    const bool pass = bad == 0 && c.genuine == 4500 && c.impostor == 495000 && secs < 5.0;
    return {pass, fmt("%.0f/200 manifests differ from brute force; AWE-shaped %.0f genuine / ", bad, c.genuine) +
                      fmt("%.0f impostor; %.2f s", c.impostor, secs)};
}

// --- auc -----------------------------------------------------------------------------------------

Outcome auc() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(99);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t g = 1 + rng() % 500, i = 1 + rng() % 500;
        ScoreSet s{oracle::tied_scores(rng, g, 10), oracle::tied_scores(rng, i, 0)};
        worst = std::max(worst, std::abs(compute_auc(s) - oracle::brute_auc(s.genuine, s.impostor)));
    }
    const double perfect = compute_auc({{0.9, 0.8, 0.7}, {0.1, 0.2}});
    const double identical = compute_auc({{0.3, 0.6, 0.6}, {0.3, 0.6, 0.6}});
    const double secs = seconds_since(t0);
    const bool pass = worst <= 1e-9 && perfect == 1.0 && identical == 0.5 && secs < 10.0;
    return {pass, fmt("max |auc - brute| = %.3g over 100 sets; perfect %.4f; identical ", worst, perfect) +
                      fmt("%.4f; %.2f s", identical, secs)};
}

// --- morphology ----------------------------------------------------------------------------------

Outcome morphology() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    int bad_refine = 0, bad_dilate = 0;
    for (int t = 0; t < 500; ++t) {
        const BinaryMask m = oracle::random_mask(rng, 16, 16, u(rng));
        const int r = 1 + static_cast<int>(rng() % 3);
        bad_refine += !(refine_mask(m) == oracle::refine(m));
        bad_dilate += !(dilate_mask(m, r) == oracle::dilate(m, r));
    }
    return {bad_refine == 0 && bad_dilate == 0,
            fmt("refine mismatches %.0f/500, dilate mismatches %.0f/500", bad_refine, bad_dilate)};
}

// --- axis ----------------------------------------------------------------------------------------

Outcome axis() {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    const double thetas[] = {-30.0, -15.0, 15.0, 30.0};
    int ok = 0, rel_ok = 0;
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        const double theta = thetas[t % 4];
        const double a = 30 + 20 * u(rng), b = a / (2.0 + 1.5 * u(rng));
        const double got = estimate_vertical_axis(oracle::ellipse_mask(160, 160, a, b, theta), 16).angle;
        const double err = oracle::axis_error(got, theta);
        worst = std::max(worst, err);
        ok += err <= 2.0;
        // Informational: rotate an upright raster instead of drawing the tilted shape.
        const auto upright = oracle::ellipse_mask(120, 120, a, b, 0);
        const double base = estimate_vertical_axis(upright, 16).angle;
        const double rel = estimate_vertical_axis(rotate_mask(upright, -theta), 16).angle;
        rel_ok += oracle::axis_error(rel, normalize_axis_angle(base + theta)) <= 2.0;
    }
    return {ok >= 95, fmt("%.0f/100 trials within 2 deg (worst %.2f deg); via rotate_mask %.0f/100", ok, worst, rel_ok)};
}

// --- restoration ---------------------------------------------------------------------------------

Outcome restoration() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.02, 0.4);
    BoundaryAverageInpainter inpainter;
    int bad = 0;
    for (int t = 0; t < 100; ++t) {
        const int w = 8 + static_cast<int>(rng() % 40), h = 8 + static_cast<int>(rng() % 40);
        const int channels[] = {1, 3, 4};
        const Image img = oracle::random_image(rng, w, h, channels[rng() % 3]);
        const BinaryMask mask = oracle::random_mask(rng, w, h, u(rng));
        const Image norm = normalize_input(img);
        const Image out = restore(img, mask, inpainter);
        bool same = out.width() == norm.width() && out.height() == norm.height() && out.channels() == norm.channels();
        for (int y = 0; same && y < h; ++y)
            for (int x = 0; same && x < w; ++x)
                if (!mask(x, y))
                    for (int c = 0; c < norm.channels(); ++c) same = same && out.at(x, y, c) == norm.at(x, y, c);
        const Image untouched = restore(img, BinaryMask(w, h), inpainter);
        same = same && untouched.width() == w && std::ranges::equal(untouched.pixels(), norm.pixels());
        bad += !same;
    }
    return {bad == 0, fmt("%.0f/100 pairs changed a background pixel or an empty-mask input", bad)};
}

// --- table 1 -------------------------------------------------------------------------------------

Outcome table1_colouring() {
    const auto cells = table1::load(EARPIPE_TABLE_SOURCE);
    if (cells.size() != 48) return {false, fmt("parsed %.0f cells from the reference table, expected 48", cells.size())};
    std::string list;
    int mismatches = 0;
    for (const auto& c : cells) {
        if (classify_cell(c.baseline, c.inpainted) == c.colour) continue;
        ++mismatches;
        list += " " + c.model + "_p" + std::to_string(c.patch) + "/" + c.dataset;
    }
    return {mismatches == 0, fmt("%.0f/48 cells differ from the reference colouring", mismatches) +
                                 (list.empty() ? "" : ":" + list)};
}

// --- end to end ----------------------------------------------------------------------------------

const std::string cli = EARPIPE_CLI;

bool synth_and_run(const fs::path& dir, const std::vector<std::string>& outs) {
    if (!fs::exists(dir / "data" / "manifest.json") &&
        !sh(cli + " -q synth --identities 4 --images 5 --rate 0.5 --seed 7 --out " + (dir / "data").string())) {
        return false;
    }
    for (const auto& o : outs) {
        if (!sh(cli + " -q run --manifest " + (dir / "data" / "manifest.json").string() + " --out " + (dir / o).string())) {
            return false;
        }
    }
    return true;
}

Outcome determinism() {
    const auto t0 = Clock::now();
    const auto dir = oracle::scratch_dir("acceptance_determinism");
    if (!synth_and_run(dir, {"run1", "run2"})) return {false, "earpipe synth/run failed"};
    const double secs = seconds_since(t0);
    std::vector<fs::path> files{"report.csv", "report.html", "report.txt"};
    for (const char* c : {"baseline", "inpainted"}) {
        for (const auto& e : fs::directory_iterator(dir / "run1" / "results" / c)) {
            files.push_back(fs::path("results") / c / e.path().filename());
        }
    }
    int differ = 0;
    for (const auto& f : files) differ += !fs::exists(dir / "run2" / f) || bytes(dir / "run1" / f) != bytes(dir / "run2" / f);
    return {differ == 0 && files.size() == 5 && secs < 60.0,
            fmt("%.0f of %.0f report/results files differ; %.1f s for synth and two runs", differ, files.size(), secs)};
}

Outcome separability() {
    const auto dir = oracle::scratch_dir("acceptance_separability");
    if (!synth_and_run(dir, {"run"})) return {false, "earpipe synth/run failed"};
    const auto b = load_results(dir / "run" / "results" / "baseline");
    const auto i = load_results(dir / "run" / "results" / "inpainted");
    if (b.size() != 1 || i.size() != 1) return {false, "expected one result per condition"};
    return {b[0].summary.mean < i[0].summary.mean,
            fmt("baseline AUC %.4f, inpainted AUC %.4f", b[0].summary.mean, i[0].summary.mean)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"pairs", pairs},           {"auc", auc},
        {"morphology", morphology}, {"axis", axis},
        {"restoration", restoration}, {"table1", table1_colouring},
        {"determinism", determinism}, {"separability", separability}};

    std::vector<std::string> wanted(argv + 1, argv + argc);
    if (wanted.empty())
        for (const auto& [name, f] : checks) wanted.push_back(name);

    bool all = true;
    for (const auto& name : wanted) {
        auto it = std::find_if(checks.begin(), checks.end(), [&](const auto& c) { return c.first == name; });
        if (it == checks.end()) {
            std::cerr << "unknown check '" << name << "'\n";
            return 2;
        }
        Outcome o;
        try {
            o = it->second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
