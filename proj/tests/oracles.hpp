#pragma once

// Slow, obvious reference implementations and small random generators shared by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "earpipe/core_types.hpp"

namespace oracle {

using earpipe::BinaryMask;

inline BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double density) {
    std::uniform_real_distribution<double> u(0, 1);
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, u(rng) < density);
    return m;
}

// Outside pixels are background for erosion.
inline BinaryMask erode(const BinaryMask& m, int r) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool all = true;
            for (int dy = -r; dy <= r && all; ++dy) {
                for (int dx = -r; dx <= r && all; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= m.width() || yy >= m.height() || !m(xx, yy)) all = false;
                }
            }
            out.set(x, y, all);
        }
    }
    return out;
}

inline BinaryMask dilate(const BinaryMask& m, int r) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool any = false;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx >= 0 && yy >= 0 && xx < m.width() && yy < m.height() && m(xx, yy)) any = true;
                }
            }
            out.set(x, y, any);
        }
    }
    return out;
}

// Median of a binary window with replicated edges: foreground when more than half are set.
inline BinaryMask median(const BinaryMask& m, int k) {
    const int r = k / 2;
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            std::vector<int> window;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = std::clamp(x + dx, 0, m.width() - 1);
                    const int yy = std::clamp(y + dy, 0, m.height() - 1);
                    window.push_back(m(xx, yy) ? 1 : 0);
                }
            }
            std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
            out.set(x, y, window[window.size() / 2] == 1);
        }
    }
    return out;
}

inline BinaryMask refine(const BinaryMask& m) { return median(erode(m, 1), 5); }

// Lists every unordered record pair and sorts it by identity membership.
struct BruteCounts {
    std::uint64_t genuine = 0, impostor = 0;
};

inline BruteCounts brute_pairs(const std::vector<int>& identity_of_record) {
    BruteCounts c;
    for (std::size_t a = 0; a < identity_of_record.size(); ++a)
        for (std::size_t b = a + 1; b < identity_of_record.size(); ++b)
            (identity_of_record[a] == identity_of_record[b] ? c.genuine : c.impostor)++;
    return c;
}

inline double brute_auc(const std::vector<double>& g, const std::vector<double>& im) {
    double s = 0;
    for (double a : g)
        for (double b : im) s += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return s / (static_cast<double>(g.size()) * static_cast<double>(im.size()));
}

// Scores on the grid k/20 - 1, k in [shift, 40], so ties are frequent and exact.
inline std::vector<double> tied_scores(std::mt19937_64& rng, std::size_t n, int shift) {
    std::uniform_int_distribution<int> level(shift, 40);
    std::vector<double> v(n);
    for (auto& s : v) s = level(rng) / 20.0 - 1.0;
    return v;
}

inline earpipe::Image random_image(std::mt19937_64& rng, int w, int h, int c) {
    std::uniform_int_distribution<int> byte(0, 255);
    earpipe::Image img(w, h, c);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(byte(rng));
    return img;
}

// Filled ellipse centred in a w x h canvas, major axis vertical before rotating by angle_deg
// counterclockwise.
inline BinaryMask ellipse_mask(int w, int h, double semi_major, double semi_minor, double angle_deg) {
    const double t = angle_deg * M_PI / 180.0;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = cy - y;  // y up
            // Undo the rotation: counterclockwise by t in the y-up frame.
            const double u = dx * std::cos(t) + dy * std::sin(t);
            const double v = -dx * std::sin(t) + dy * std::cos(t);
            m.set(x, y, (u * u) / (semi_minor * semi_minor) + (v * v) / (semi_major * semi_major) <= 1.0);
        }
    }
    return m;
}

inline double axis_error(double a, double b) {
    double d = std::fmod(std::abs(a - b), 180.0);
    return std::min(d, 180.0 - d);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("earpipe_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace oracle
