#include "earpipe/mock_backends.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "earpipe/hashing.hpp"
#include "earpipe/image_io.hpp"
#include "earpipe/manifest.hpp"

namespace earpipe {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::uint64_t out = 0;
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return out;
}

// Uniform double from a raw engine draw; the standard distributions are not specified
// bit-for-bit across library implementations.
double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

double gaussian(std::mt19937_64& rng) {
    double u1 = uniform(rng, 0.0, 1.0);
    const double u2 = uniform(rng, 0.0, 1.0);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

double channel_mean(const Image& image, int x, int y) {
    double s = 0;
    for (int c = 0; c < image.channels(); ++c) s += image.at(x, y, c);
    return s / image.channels();
}

}  // namespace

// --- detectors --------------------------------------------------------------------------------

void MockReplayDetector::add(const Image& image, std::vector<Detection> detections) {
    table_[image_fingerprint(image)] = std::move(detections);
}

std::string MockReplayDetector::name() const {
    return role_ == DetectorSource::supervised ? "mock_replay" : "mock_replay_zero_shot";
}

std::vector<Detection> MockReplayDetector::detect(const Image& image,
                                                  const std::optional<std::string>& prompt) {
    const std::string fp = image_fingerprint(image);
    auto it = table_.find(fp);
    if (it == table_.end()) return {};

    std::mt19937_64 rng(mix_seed(seed_, std::stoull(fp.substr(0, 16), nullptr, 16)));
    std::string label = "accessory";
    if (role_ == DetectorSource::zero_shot && prompt) {
        label = prompt->substr(0, prompt->find('.'));
    }
    std::vector<Detection> out;
    for (const auto& gt : it->second) {
        Detection d;
        d.box = gt.box;
        if (jitter_ > 0) {
            d.box.x_min += uniform(rng, -jitter_, jitter_);
            d.box.y_min += uniform(rng, -jitter_, jitter_);
            d.box.x_max += uniform(rng, -jitter_, jitter_);
            d.box.y_max += uniform(rng, -jitter_, jitter_);
            if (!d.box.valid()) d.box = gt.box;
        }
        d.confidence = 0.9;
        d.source = role_;
        if (role_ == DetectorSource::zero_shot) {
            d.text_alignment = 0.8;
            d.label = label;
        } else {
            d.label = gt.label.empty() ? label : gt.label;
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Detection> MockFixedBoxDetector::detect(const Image& image,
                                                    const std::optional<std::string>& prompt) {
    Detection d;
    d.box = {box_.x_min * image.width(), box_.y_min * image.height(), box_.x_max * image.width(),
             box_.y_max * image.height()};
    d.confidence = 0.9;
    d.source = role_;
    if (role_ == DetectorSource::zero_shot) {
        d.text_alignment = 0.8;
        d.label = prompt ? prompt->substr(0, prompt->find('.')) : "accessory";
    } else {
        d.label = "accessory";
    }
    return {d};
}

// --- segmenters -------------------------------------------------------------------------------

SoftMask MockEllipseSegmenter::ellipse_scores(int width, int height, const BoundingBox& box,
                                              double scale) {
    SoftMask s = SoftMask::Zero(height, width);
    const double cx = 0.5 * (box.x_min + box.x_max), cy = 0.5 * (box.y_min + box.y_max);
    const double rx = 0.5 * box.width() * scale, ry = 0.5 * box.height() * scale;
    if (rx <= 0 || ry <= 0) return s;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = (x + 0.5 - cx) / rx, v = (y + 0.5 - cy) / ry;
            // 0.5 exactly on the ellipse, 1 well inside, 0 well outside.
            s(y, x) = static_cast<float>(std::clamp((1.15 - (u * u + v * v)) / 0.3, 0.0, 1.0));
        }
    }
    return s;
}

std::vector<MaskCandidate> MockEllipseSegmenter::segment(const Image& image, const BoundingBox& box,
                                                         bool multi_mask) {
    const int w = image.width(), h = image.height();
    std::vector<MaskCandidate> out;
    out.push_back({ellipse_scores(w, h, box, 1.0), 0.92});
    if (multi_mask) {
        out.push_back({ellipse_scores(w, h, box, 0.6), 0.45});
        SoftMask rect = SoftMask::Zero(h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                if (px >= box.x_min && px < box.x_max && py >= box.y_min && py < box.y_max) {
                    rect(y, x) = 1.0f;
                }
            }
        }
        out.push_back({std::move(rect), 0.3});
    }
    return out;
}

BinaryMask MockThresholdEarSegmenter::segment_ear(const Image& image) {
    BinaryMask m(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (channel_mean(image, x, y) >= threshold_) m.set(x, y);
        }
    }
    return m;
}

Side MockMassSideClassifier::classify(const Image& image) {
    double sx = 0;
    std::size_t n = 0;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (channel_mean(image, x, y) >= threshold_) {
                sx += x + 0.5;
                ++n;
            }
        }
    }
    if (n == 0) return Side::unknown;
    return sx / static_cast<double>(n) < 0.5 * image.width() ? Side::left : Side::right;
}

// --- embedder ---------------------------------------------------------------------------------

MockEmbedder::MockEmbedder(std::uint64_t seed, int patch_size)
    : patch_size_(patch_size), projection_(kEmbeddingDim, kInputDim) {
    // The patch size only enters through the seed, so each (seed, patch) pair is its own model.
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(patch_size)));
    const double scale = 1.0 / std::sqrt(static_cast<double>(kInputDim));
    for (Eigen::Index j = 0; j < projection_.cols(); ++j) {
        for (Eigen::Index i = 0; i < projection_.rows(); ++i) {
            projection_(i, j) = static_cast<float>(gaussian(rng) * scale);
        }
    }
}

Eigen::VectorXf MockEmbedder::pooled_features(const Image& image) {
    if (image.width() != kEmbedderInputSize || image.height() != kEmbedderInputSize ||
        image.channels() != 3) {
        throw EmbeddingError("mock embedder expects a 112x112 three-channel image");
    }
    Eigen::VectorXf f(kInputDim);
    for (int c = 0; c < 3; ++c) {
        const Eigen::ArrayXXf ch = image.channel_as_float(c);
        for (int py = 0; py < kPooledSide; ++py) {
            for (int px = 0; px < kPooledSide; ++px) {
                f((py * kPooledSide + px) * 3 + c) =
                    ch.block(py * kPool, px * kPool, kPool, kPool).mean();
            }
        }
    }
    return f;
}

EmbeddingVector MockEmbedder::embed(const Image& image) {
    Eigen::VectorXf f = pooled_features(image);
    f.array() -= f.mean();
    if (f.squaredNorm() < 1e-12f) f.setOnes();
    EmbeddingVector e = projection_ * f;
    const float n = e.norm();
    if (!(n > 0.0f)) throw EmbeddingError("mock embedder produced a zero vector");
    return e / n;
}

// --- synthetic data ---------------------------------------------------------------------------

namespace {

struct Blob {
    double u, v, amplitude, sigma;
};

struct EarTemplate {
    double semi_major, semi_minor;  // pixels
    double base;
    std::array<double, 3> tint;
    std::vector<Blob> blobs;
    double ridge_amp, ridge_freq, ridge_dir, ridge_phase;

    // Intensity at normalized ear coordinates (u across, v along the long axis), before tint.
    double shade(double u, double v) const {
        double s = base;
        for (const auto& b : blobs) {
            const double du = u - b.u, dv = v - b.v;
            s += b.amplitude * std::exp(-(du * du + dv * dv) / (2 * b.sigma * b.sigma));
        }
        s += ridge_amp *
             std::sin(ridge_freq * (u * std::cos(ridge_dir) + v * std::sin(ridge_dir)) + ridge_phase);
        return s;
    }
};

EarTemplate make_template(std::uint64_t seed, int identity) {
    std::mt19937_64 rng(mix_seed(seed, 0x7e3a11ULL, static_cast<std::uint64_t>(identity)));
    EarTemplate t;
    t.semi_major = uniform(rng, 40.0, 50.0);
    t.semi_minor = uniform(rng, 22.0, 28.0);
    t.base = uniform(rng, 135.0, 150.0);
    for (auto& c : t.tint) c = uniform(rng, 0.9, 1.1);
    for (int i = 0; i < 4; ++i) {
        Blob b;
        do {
            b.u = uniform(rng, -0.8, 0.8);
            b.v = uniform(rng, -0.8, 0.8);
        } while (b.u * b.u + b.v * b.v > 0.7);
        b.amplitude = uniform(rng, 20.0, 30.0) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
        b.sigma = uniform(rng, 0.25, 0.45);
        t.blobs.push_back(b);
    }
    t.ridge_amp = uniform(rng, 8.0, 12.0);
    t.ridge_freq = uniform(rng, 6.0, 10.0);
    t.ridge_dir = uniform(rng, 0.0, std::numbers::pi);
    t.ridge_phase = uniform(rng, 0.0, 2 * std::numbers::pi);
    return t;
}

std::string padded(int value, int width) {
    std::string s = std::to_string(value);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

SynthDataset synth_dataset(const fs::path& root, int n_identities, int images_per_identity,
                           double occlusion_rate, std::uint64_t seed, const SynthOptions& options) {
    if (n_identities < 1 || images_per_identity < 1) {
        throw ConfigError("synth_dataset needs at least one identity and one image per identity");
    }
    if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
        throw ConfigError("occlusion rate must lie in [0, 1]");
    }
    const int size = options.image_size;
    const int total = n_identities * images_per_identity;
    const auto n_occluded = static_cast<std::size_t>(std::llround(occlusion_rate * total));

    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    {
        std::mt19937_64 rng(mix_seed(seed, 0x0cc1dedULL));
        // Fisher-Yates with raw draws, for the same reason as uniform().
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng() % i);
            std::swap(order[i - 1], order[j]);
        }
    }
    std::vector<bool> occluded(static_cast<std::size_t>(total), false);
    for (std::size_t i = 0; i < n_occluded; ++i) occluded[static_cast<std::size_t>(order[i])] = true;

    SynthDataset out;
    fs::create_directories(root);
    out.root = fs::absolute(root);
    out.occluded = n_occluded;
    out.manifest.name = "synth";
    out.manifest.root = out.root;

    const int id_width = std::max(2, static_cast<int>(std::to_string(n_identities - 1).size()));
    const int img_width = std::max(2, static_cast<int>(std::to_string(images_per_identity - 1).size()));

    for (int id = 0; id < n_identities; ++id) {
        const EarTemplate tmpl = make_template(seed, id);
        const std::string subject = "S" + padded(id, id_width);
        fs::create_directories(root / subject);

        for (int k = 0; k < images_per_identity; ++k) {
            const int index = id * images_per_identity + k;
            std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(id) + 1,
                                         static_cast<std::uint64_t>(k) + 1));
            const double theta =
                uniform(rng, -options.max_rotation_deg, options.max_rotation_deg) * std::numbers::pi / 180.0;
            const double cx = 0.5 * size + uniform(rng, -4.0, 4.0);
            const double cy = 0.5 * size + uniform(rng, -4.0, 4.0);
            const double brightness = uniform(rng, -6.0, 6.0);
            const double ct = std::cos(theta), st = std::sin(theta);

            // Ear template frame -> image: p = c + R t with R = [[cos, sin], [-sin, cos]], which
            // turns the upright template counterclockwise on screen.
            auto to_image = [&](double tx, double ty) {
                return Eigen::Vector2d(cx + ct * tx + st * ty, cy - st * tx + ct * ty);
            };

            std::optional<Eigen::Vector2d> disk_center;
            double disk_radius = 0;
            if (occluded[static_cast<std::size_t>(index)]) {
                double u, v;
                do {
                    u = uniform(rng, -0.6, 0.6);
                    v = uniform(rng, -0.6, 0.6);
                } while (u * u + v * v > 0.3);
                disk_radius = uniform(rng, 8.0, 11.0);
                disk_center = to_image(u * tmpl.semi_minor, v * tmpl.semi_major);
            }

            Image image(size, size, 3);
            BinaryMask gt(size, size);
            static constexpr std::array<double, 3> kAccessory{245.0, 228.0, 160.0};
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                    const double tx = ct * dx - st * dy, ty = st * dx + ct * dy;
                    const double u = tx / tmpl.semi_minor, v = ty / tmpl.semi_major;
                    const bool ear = u * u + v * v <= 1.0;
                    bool accessory = false;
                    if (disk_center) {
                        const double ax = x + 0.5 - disk_center->x(), ay = y + 0.5 - disk_center->y();
                        accessory = ax * ax + ay * ay <= disk_radius * disk_radius;
                    }
                    if (accessory) gt.set(x, y);
                    const double shade = tmpl.shade(u, v) + brightness;
                    for (int c = 0; c < 3; ++c) {
                        double value;
                        if (accessory) {
                            value = kAccessory[static_cast<std::size_t>(c)];
                        } else if (ear) {
                            value = shade * tmpl.tint[static_cast<std::size_t>(c)];
                        } else {
                            value = 12.0;
                        }
                        image.at(x, y, c) = to_byte(value + 3.0 * gaussian(rng));
                    }
                }
            }

            const std::string stem = subject + "_" + padded(k, img_width);
            const fs::path rel = fs::path(subject) / (stem + ".png");
            const fs::path sidecar = fs::path(subject) / (stem + ".detections.json");
            const fs::path gt_rel = fs::path(subject) / (stem + ".gt.mask.png");
            write_png(image, root / rel);
            write_mask_png(gt, root / gt_rel);

            DetectionDump dump{rel.filename(), {}};
            if (disk_center) {
                Detection d;
                d.box = {disk_center->x() - disk_radius - 2.0, disk_center->y() - disk_radius - 2.0,
                         disk_center->x() + disk_radius + 2.0, disk_center->y() + disk_radius + 2.0};
                d.box = d.box.clamped(size, size).value_or(d.box);
                d.confidence = 1.0;
                d.source = DetectorSource::supervised;
                d.label = "earring";
                dump.detections.push_back(d);
            }
            write_detection_dump(dump, root / sidecar);

            ImageRecord r;
            r.subject_id = subject;
            r.side = id % 2 == 0 ? Side::left : Side::right;
            r.path = rel;
            r.source_dataset = "synth";
            r.key = subject + "/" + stem;
            r.annotations = out.root / sidecar;
            out.manifest.records.push_back(std::move(r));
            out.ground_truth_masks.push_back(out.root / gt_rel);
        }
    }

    out.manifest_file = out.root / "manifest.json";
    save_manifest(out.manifest, out.manifest_file);
    return out;
}

}  // namespace earpipe
