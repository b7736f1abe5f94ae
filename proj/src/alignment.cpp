#include "earpipe/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace earpipe {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Orientation (deg, CCW from image vertical) of a direction given in image coordinates (y down).
double direction_to_axis_angle(const Eigen::Vector2d& d) {
    return normalize_axis_angle(std::atan2(-d.x(), -d.y()) / kDeg);
}

struct EdgePoint {
    int x, y;
};

int border_index(int i, int n, PadFill mode) {
    if (i >= 0 && i < n) return i;
    switch (mode) {
        case PadFill::black: return -1;
        case PadFill::replicate: return std::clamp(i, 0, n - 1);
        case PadFill::reflect: {
            if (n == 1) return 0;
            const int period = 2 * (n - 1);
            int m = i % period;
            if (m < 0) m += period;
            return m < n ? m : period - m;
        }
    }
    return -1;
}

double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

// Source position (pixel-index coordinates) for an output pixel of the upright canvas.
struct RotationMap {
    double cos_a, sin_a;
    double src_cx, src_cy, dst_cx, dst_cy;

    RotationMap(int src_w, int src_h, int dst_w, int dst_h, double angle_deg)
        : cos_a(std::cos(angle_deg * kDeg)),
          sin_a(std::sin(angle_deg * kDeg)),
          src_cx((src_w - 1) / 2.0),
          src_cy((src_h - 1) / 2.0),
          dst_cx((dst_w - 1) / 2.0),
          dst_cy((dst_h - 1) / 2.0) {}

    // Inverse map: output -> source. Rotating the tilted content clockwise by `angle` is the
    // same as sampling the source at the counterclockwise-rotated output offset.
    Eigen::Vector2d to_source(double u, double v) const {
        const double du = u - dst_cx, dv = v - dst_cy;
        return {snap(src_cx + cos_a * du + sin_a * dv), snap(src_cy - sin_a * du + cos_a * dv)};
    }

    Eigen::Vector2d to_output(double x, double y) const {
        const double dx = x - src_cx, dy = y - src_cy;
        return {dst_cx + cos_a * dx - sin_a * dy, dst_cy + sin_a * dx + cos_a * dy};
    }
};

}  // namespace

double normalize_axis_angle(double degrees) {
    double a = std::fmod(degrees, 180.0);
    if (a <= -90.0) a += 180.0;
    if (a > 90.0) a -= 180.0;
    return a;
}

double LineSegment::orientation_deg() const { return direction_to_axis_angle(p1 - p0); }

BinaryMask boundary_pixels(const BinaryMask& mask) {
    const int w = mask.width(), h = mask.height();
    BinaryMask edges(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask(x, y)) continue;
            const bool interior = x > 0 && y > 0 && x < w - 1 && y < h - 1 && mask(x - 1, y) &&
                                  mask(x + 1, y) && mask(x, y - 1) && mask(x, y + 1);
            if (!interior) edges.set(x, y);
        }
    }
    return edges;
}

std::vector<LineSegment> extract_line_segments(const BinaryMask& mask,
                                               const LineExtractionParams& params) {
    const BinaryMask edges = boundary_pixels(mask);
    std::vector<EdgePoint> points;
    for (int y = 0; y < edges.height(); ++y) {
        for (int x = 0; x < edges.width(); ++x) {
            if (edges(x, y)) points.push_back({x, y});
        }
    }
    if (points.empty()) return {};

    const double min_length =
        std::max(params.min_length,
                 params.min_length_area_fraction * std::sqrt(static_cast<double>(mask.count())));

    const int n_theta = static_cast<int>(std::lround(180.0 / params.angle_step_deg));
    const int max_rho = static_cast<int>(std::ceil(std::hypot(mask.width(), mask.height())));
    const int n_rho = 2 * max_rho + 1;

    Eigen::ArrayXd cos_t(n_theta), sin_t(n_theta);
    for (int t = 0; t < n_theta; ++t) {
        cos_t(t) = std::cos(t * params.angle_step_deg * kDeg);
        sin_t(t) = std::sin(t * params.angle_step_deg * kDeg);
    }

    Eigen::ArrayXXi votes = Eigen::ArrayXXi::Zero(n_theta, n_rho);
    auto cast_votes = [&](const EdgePoint& p, int delta) {
        for (int t = 0; t < n_theta; ++t) {
            const int r = static_cast<int>(std::lround(p.x * cos_t(t) + p.y * sin_t(t))) + max_rho;
            votes(t, r) += delta;
        }
    };
    for (const auto& p : points) cast_votes(p, +1);

    std::vector<bool> active(points.size(), true);
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> banned =
        Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n_theta, n_rho, false);

    std::vector<LineSegment> segments;
    const int max_iterations = 16 * params.max_segments + 256;
    for (int iter = 0; iter < max_iterations &&
                       static_cast<int>(segments.size()) < params.max_segments;
         ++iter) {
        Eigen::Index bt = 0, br = 0;
        const int best = banned.select(-1, votes).maxCoeff(&bt, &br);
        if (best < params.min_votes) break;

        const double c = cos_t(bt), s = sin_t(bt);
        const double rho = static_cast<double>(br - max_rho);

        // Points near the peak line, ordered along it.
        std::vector<std::pair<double, std::size_t>> along;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!active[i]) continue;
            const double d = points[i].x * c + points[i].y * s - rho;
            if (std::abs(d) <= params.distance_tolerance) {
                along.emplace_back(-points[i].x * s + points[i].y * c, i);
            }
        }
        std::sort(along.begin(), along.end());

        std::size_t best_begin = 0, best_end = 0;
        double best_extent = -1;
        for (std::size_t b = 0; b < along.size();) {
            std::size_t e = b + 1;
            while (e < along.size() && along[e].first - along[e - 1].first <= params.max_gap) ++e;
            const double extent = along[e - 1].first - along[b].first;
            if (extent > best_extent) {
                best_extent = extent;
                best_begin = b;
                best_end = e;
            }
            b = e;
        }
        if (best_extent < min_length) {
            banned(bt, br) = true;
            continue;
        }

        // Total least squares over the run.
        const auto n = static_cast<Eigen::Index>(best_end - best_begin);
        Eigen::Matrix2Xd run(2, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& p = points[along[best_begin + j].second];
            run.col(j) << p.x, p.y;
        }
        const Eigen::Vector2d centroid = run.rowwise().mean();
        const Eigen::Matrix2Xd centred = run.colwise() - centroid;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(centred * centred.transpose());
        const Eigen::Vector2d dir = es.eigenvectors().col(1);
        const Eigen::RowVectorXd proj = dir.transpose() * centred;
        segments.push_back({centroid + dir * proj.minCoeff(), centroid + dir * proj.maxCoeff()});

        for (std::size_t j = best_begin; j < best_end; ++j) {
            const auto idx = along[j].second;
            active[idx] = false;
            cast_votes(points[idx], -1);
        }
    }

    std::stable_sort(segments.begin(), segments.end(),
                     [](const LineSegment& a, const LineSegment& b) {
                         return a.length() > b.length();
                     });
    return segments;
}

double moment_axis_angle(const BinaryMask& mask) {
    double n = 0, sx = 0, sy = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y)) continue;
            n += 1;
            sx += x;
            sy += y;
        }
    }
    if (n == 0) throw AlignmentError("no ear region");
    const double cx = sx / n, cy = sy / n;
    double mu20 = 0, mu02 = 0, mu11 = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y)) continue;
            mu20 += (x - cx) * (x - cx);
            mu02 += (y - cy) * (y - cy);
            mu11 += (x - cx) * (y - cy);
        }
    }
    const double alpha = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);
    return direction_to_axis_angle({std::cos(alpha), std::sin(alpha)});
}

AxisEstimate estimate_vertical_axis(const BinaryMask& ear_mask, int k,
                                    const LineExtractionParams& params) {
    if (k < 1) throw AlignmentError("k must be >= 1");
    if (!ear_mask.any()) throw AlignmentError("no ear region");

    auto segments = extract_line_segments(ear_mask, params);
    if (segments.empty()) {
        return {moment_axis_angle(ear_mask), 0, 0.0};
    }
    const int used = std::min<int>(k, static_cast<int>(segments.size()));

    // Doubled angles make orientations 180 degrees apart coincide.
    double sum_c = 0, sum_s = 0, sum_w = 0;
    for (int i = 0; i < used; ++i) {
        const double phi = 2.0 * segments[i].orientation_deg() * kDeg;
        const double w = segments[i].length();
        sum_c += w * std::cos(phi);
        sum_s += w * std::sin(phi);
        sum_w += w;
    }
    // Segments spread evenly over all directions (a disk, a square) carry no axis.
    if (std::hypot(sum_c, sum_s) < params.min_coherence * sum_w) {
        return {moment_axis_angle(ear_mask), 0, 0.0};
    }
    const double angle = normalize_axis_angle(0.5 * std::atan2(sum_s, sum_c) / kDeg);
    return {angle, used, static_cast<double>(used) / k};
}

std::string_view to_string(PadFill p) {
    switch (p) {
        case PadFill::black: return "black";
        case PadFill::replicate: return "replicate";
        case PadFill::reflect: return "reflect";
    }
    return "black";
}

PadFill pad_fill_from_string(std::string_view s) {
    if (s == "black") return PadFill::black;
    if (s == "replicate") return PadFill::replicate;
    if (s == "reflect") return PadFill::reflect;
    throw ConfigError("unknown pad_fill '" + std::string(s) + "'");
}

std::pair<int, int> rotated_canvas(int width, int height, double angle_deg) {
    const double c = std::abs(std::cos(angle_deg * kDeg));
    const double s = std::abs(std::sin(angle_deg * kDeg));
    const int w = static_cast<int>(std::ceil(width * c + height * s - 1e-6));
    const int h = static_cast<int>(std::ceil(width * s + height * c - 1e-6));
    return {std::max(w, 1), std::max(h, 1)};
}

Image rotate_upright(const Image& image, double angle_deg, PadFill pad_fill) {
    const auto [out_w, out_h] = rotated_canvas(image.width(), image.height(), angle_deg);
    const RotationMap map(image.width(), image.height(), out_w, out_h, angle_deg);
    const int ch = image.channels();
    Image out(out_w, out_h, ch);

    for (int v = 0; v < out_h; ++v) {
        for (int u = 0; u < out_w; ++u) {
            const Eigen::Vector2d src = map.to_source(u, v);
            const double fx0 = std::floor(src.x()), fy0 = std::floor(src.y());
            const double ax = src.x() - fx0, ay = src.y() - fy0;
            const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
            const int xs[2] = {border_index(x0, image.width(), pad_fill),
                               border_index(x0 + 1, image.width(), pad_fill)};
            const int ys[2] = {border_index(y0, image.height(), pad_fill),
                               border_index(y0 + 1, image.height(), pad_fill)};
            const double wx[2] = {1.0 - ax, ax}, wy[2] = {1.0 - ay, ay};
            for (int c = 0; c < ch; ++c) {
                double acc = 0;
                for (int j = 0; j < 2; ++j) {
                    for (int i = 0; i < 2; ++i) {
                        const double w = wx[i] * wy[j];
                        if (w == 0.0 || xs[i] < 0 || ys[j] < 0) continue;
                        acc += w * image.at(xs[i], ys[j], c);
                    }
                }
                out.at(u, v, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
            }
        }
    }
    return out;
}

BinaryMask rotate_mask(const BinaryMask& mask, double angle_deg) {
    const auto [out_w, out_h] = rotated_canvas(mask.width(), mask.height(), angle_deg);
    const RotationMap map(mask.width(), mask.height(), out_w, out_h, angle_deg);
    auto inside = [&](long x, long y) {
        return x >= 0 && y >= 0 && x < mask.width() && y < mask.height() &&
               mask(static_cast<int>(x), static_cast<int>(y));
    };
    BinaryMask out(out_w, out_h);
    for (int v = 0; v < out_h; ++v) {
        for (int u = 0; u < out_w; ++u) {
            const Eigen::Vector2d src = map.to_source(u, v);
            const double fx = std::floor(src.x()), fy = std::floor(src.y());
            const double ax = src.x() - fx, ay = src.y() - fy;
            const long x = static_cast<long>(fx), y = static_cast<long>(fy);
            const double cover = (1 - ax) * (1 - ay) * inside(x, y) + ax * (1 - ay) * inside(x + 1, y) +
                                 (1 - ax) * ay * inside(x, y + 1) + ax * ay * inside(x + 1, y + 1);
            out.set(u, v, cover >= 0.5);
        }
    }
    return out;
}

PixelRect foreground_bounds(const BinaryMask& mask) {
    if (!mask.any()) throw AlignmentError("no ear region");
    const auto& bits = mask.bits();
    const auto rows = bits.rowwise().any();
    const auto cols = bits.colwise().any();
    PixelRect r;
    for (r.y0 = 0; !rows(r.y0); ++r.y0) {}
    for (r.y1 = mask.height() - 1; !rows(r.y1); --r.y1) {}
    for (r.x0 = 0; !cols(r.x0); ++r.x0) {}
    for (r.x1 = mask.width() - 1; !cols(r.x1); --r.x1) {}
    return r;
}

Image crop(const Image& image, const PixelRect& rect) {
    Image out(rect.width(), rect.height(), image.channels());
    for (int y = 0; y < rect.height(); ++y) {
        for (int x = 0; x < rect.width(); ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                out.at(x, y, c) = image.at(rect.x0 + x, rect.y0 + y, c);
            }
        }
    }
    return out;
}

Image resize_bilinear(const Image& image, int out_width, int out_height) {
    if (out_width == image.width() && out_height == image.height()) return image;
    Image out(out_width, out_height, image.channels());
    const double sx = double(image.width()) / out_width;
    const double sy = double(image.height()) / out_height;
    for (int v = 0; v < out_height; ++v) {
        const double fy = std::clamp((v + 0.5) * sy - 0.5, 0.0, double(image.height() - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height() - 1);
        const double ay = fy - y0;
        for (int u = 0; u < out_width; ++u) {
            const double fx = std::clamp((u + 0.5) * sx - 0.5, 0.0, double(image.width() - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width() - 1);
            const double ax = fx - x0;
            for (int c = 0; c < image.channels(); ++c) {
                const double top = (1 - ax) * image.at(x0, y0, c) + ax * image.at(x1, y0, c);
                const double bottom = (1 - ax) * image.at(x0, y1, c) + ax * image.at(x1, y1, c);
                out.at(u, v, c) = static_cast<std::uint8_t>(
                    std::clamp(std::lround((1 - ay) * top + ay * bottom), 0L, 255L));
            }
        }
    }
    return out;
}

Image crop_and_resize(const Image& image, const BinaryMask& ear_mask, int out_width,
                      int out_height) {
    if (ear_mask.width() != image.width() || ear_mask.height() != image.height()) {
        throw AlignmentError("ear mask and image dimensions differ");
    }
    return resize_bilinear(crop(image, foreground_bounds(ear_mask)), out_width, out_height);
}

void AlignmentConfig::check() const {
    if (k < 1) throw ConfigError("alignment k must be >= 1");
    if (out_size < 1) throw ConfigError("alignment out_size must be >= 1");
}

Eigen::Vector2d AlignmentTransform::map_point(const Eigen::Vector2d& continuous) const {
    const RotationMap map(source_width, source_height, rotated_width, rotated_height, angle);
    const Eigen::Vector2d r = map.to_output(continuous.x() - 0.5, continuous.y() - 0.5);
    const double x = (r.x() + 0.5 - crop.x0) * out_width / crop.width();
    const double y = (r.y() + 0.5 - crop.y0) * out_height / crop.height();
    return {x, y};
}

std::optional<BoundingBox> AlignmentTransform::map_box(const BoundingBox& box) const {
    const Eigen::Vector2d corners[4] = {map_point({box.x_min, box.y_min}),
                                        map_point({box.x_max, box.y_min}),
                                        map_point({box.x_min, box.y_max}),
                                        map_point({box.x_max, box.y_max})};
    BoundingBox out{corners[0].x(), corners[0].y(), corners[0].x(), corners[0].y()};
    for (const auto& p : corners) {
        out.x_min = std::min(out.x_min, p.x());
        out.y_min = std::min(out.y_min, p.y());
        out.x_max = std::max(out.x_max, p.x());
        out.y_max = std::max(out.y_max, p.y());
    }
    return out.clamped(out_width, out_height);
}

AlignmentResult align_ear(const Image& image, const BinaryMask& ear_mask,
                          const AlignmentConfig& config) {
    if (ear_mask.width() != image.width() || ear_mask.height() != image.height()) {
        throw AlignmentError("ear mask and image dimensions differ");
    }
    const AxisEstimate axis = estimate_vertical_axis(ear_mask, config.k);
    const Image upright = rotate_upright(to_three_channel(image), axis.angle, config.pad_fill);
    const BinaryMask upright_mask = rotate_mask(ear_mask, axis.angle);

    AlignmentTransform t;
    t.angle = axis.angle;
    t.source_width = image.width();
    t.source_height = image.height();
    t.rotated_width = upright.width();
    t.rotated_height = upright.height();
    t.crop = foreground_bounds(upright_mask);
    t.out_width = config.out_size;
    t.out_height = config.out_size;

    return {resize_bilinear(crop(upright, t.crop), t.out_width, t.out_height), axis, t};
}

}  // namespace earpipe
