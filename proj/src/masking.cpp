#include "earpipe/masking.hpp"

#include <algorithm>

namespace earpipe {

namespace {

enum class Border { zero, replicate };

// Foreground count in the (2r+1)^2 window centred on each pixel, via a summed-area table.
Eigen::ArrayXXi window_counts(const MaskArray& bits, int r, Border border) {
    const Eigen::Index h = bits.rows(), w = bits.cols();
    const Eigen::Index ph = h + 2 * r, pw = w + 2 * r;

    Eigen::ArrayXXi sat = Eigen::ArrayXXi::Zero(ph + 1, pw + 1);
    for (Eigen::Index y = 0; y < ph; ++y) {
        for (Eigen::Index x = 0; x < pw; ++x) {
            Eigen::Index sy = y - r, sx = x - r;
            int v = 0;
            if (border == Border::replicate) {
                sy = std::clamp<Eigen::Index>(sy, 0, h - 1);
                sx = std::clamp<Eigen::Index>(sx, 0, w - 1);
                v = bits(sy, sx);
            } else if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                v = bits(sy, sx);
            }
            sat(y + 1, x + 1) = v + sat(y, x + 1) + sat(y + 1, x) - sat(y, x);
        }
    }

    const Eigen::Index k = 2 * r + 1;
    return sat.block(k, k, h, w) - sat.block(0, k, h, w) - sat.block(k, 0, h, w) +
           sat.block(0, 0, h, w);
}

}  // namespace

BinaryMask merge_masks(std::span<const BinaryMask> masks, int width, int height) {
    BinaryMask out(width, height);
    for (const auto& m : masks) {
        if (m.width() != width || m.height() != height) {
            throw MaskingError("cannot merge a " + std::to_string(m.width()) + "x" +
                               std::to_string(m.height()) + " mask into " +
                               std::to_string(width) + "x" + std::to_string(height));
        }
        out.bits() = out.bits() || m.bits();
    }
    return out;
}

BinaryMask erode_mask(const BinaryMask& mask, int radius) {
    if (radius < 0) throw MaskingError("erosion radius must be >= 0");
    if (radius == 0) return mask;
    const int full = (2 * radius + 1) * (2 * radius + 1);
    return BinaryMask(MaskArray(window_counts(mask.bits(), radius, Border::zero) == full));
}

BinaryMask dilate_mask(const BinaryMask& mask, int radius) {
    if (radius < 0) throw MaskingError("dilation radius must be >= 0");
    if (radius == 0) return mask;
    return BinaryMask(MaskArray(window_counts(mask.bits(), radius, Border::zero) > 0));
}

BinaryMask median_filter_mask(const BinaryMask& mask, int ksize) {
    if (ksize < 1 || ksize % 2 == 0) throw MaskingError("median kernel size must be odd");
    const int r = ksize / 2;
    const int majority = (ksize * ksize) / 2 + 1;
    return BinaryMask(MaskArray(window_counts(mask.bits(), r, Border::replicate) >= majority));
}

BinaryMask refine_mask(const BinaryMask& mask) {
    return median_filter_mask(erode_mask(mask, 1), 5);
}

void MaskingConfig::check() const {
    if (!(binarize_threshold >= 0.0 && binarize_threshold <= 1.0)) {
        throw ConfigError("binarize_threshold must be in [0,1]");
    }
    if (!(min_quality >= 0.0 && min_quality <= 1.0)) {
        throw ConfigError("min_quality must be in [0,1]");
    }
    if (dilation_radius < 0) throw ConfigError("dilation_radius must be >= 0");
}

AccessoryMask build_accessory_mask(const Image& image, std::span<const Detection> detections,
                                   SegmenterBackend& segmenter, const MaskingConfig& config) {
    const int w = image.width(), h = image.height();
    std::vector<BinaryMask> accepted;
    for (const auto& det : detections) {
        std::vector<MaskCandidate> candidates;
        try {
            candidates = segmenter.segment(image, det.box, /*multi_mask=*/true);
        } catch (const std::exception& e) {
            throw MaskingError("segmenter '" + segmenter.name() + "' failed: " + e.what());
        }
        for (const auto& c : candidates) {
            if (c.scores.rows() != h || c.scores.cols() != w) {
                throw MaskingError("segmenter '" + segmenter.name() +
                                   "' returned a mask of the wrong size");
            }
            if (c.quality < config.min_quality) continue;
            accepted.push_back(binarize(c.scores, static_cast<float>(config.binarize_threshold)));
        }
    }

    BinaryMask merged = merge_masks(accepted, w, h);
    if (!merged.any()) return {std::move(merged), false};
    BinaryMask refined = refine_mask(merged);
    const bool occluded = refined.any();
    return {std::move(refined), occluded};
}

}  // namespace earpipe
