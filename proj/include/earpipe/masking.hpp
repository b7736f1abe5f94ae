#pragma once

#include <span>
#include <string>
#include <vector>

#include "earpipe/core_types.hpp"

namespace earpipe {

/// Foreground wherever score >= threshold.
template <typename Derived>
BinaryMask binarize(const Eigen::ArrayBase<Derived>& scores, typename Derived::Scalar threshold) {
    return BinaryMask(MaskArray(scores.derived() >= threshold));
}

/// Pixel-wise OR. An empty list yields the all-background mask of the given size.
BinaryMask merge_masks(std::span<const BinaryMask> masks, int width, int height);

/// Erosion with a full (2r+1)x(2r+1) element; pixels outside the image count as background.
BinaryMask erode_mask(const BinaryMask& mask, int radius);

/// Dilation with a full (2r+1)x(2r+1) element, clipped at the borders. Radius 0 is the identity.
BinaryMask dilate_mask(const BinaryMask& mask, int radius);

/// Binary median over a ksize x ksize window (ksize odd) with edge replication.
BinaryMask median_filter_mask(const BinaryMask& mask, int ksize);

/// One 3x3 erosion followed by a 5x5 median filter.
BinaryMask refine_mask(const BinaryMask& mask);

struct MaskCandidate {
    SoftMask scores;  // height x width
    double quality = 0;
};

/// Box-prompted segmentation. Instances are used by one worker at a time.
class SegmenterBackend {
public:
    virtual ~SegmenterBackend() = default;
    virtual std::string name() const = 0;
    virtual std::vector<MaskCandidate> segment(const Image& image, const BoundingBox& box,
                                               bool multi_mask) = 0;
};

struct MaskingConfig {
    double binarize_threshold = 0.5;
    double min_quality = 0.5;  // candidates below this are not "accepted"
    int dilation_radius = 0;   // applied before inpainting; 0 disables

    void check() const;
};

struct AccessoryMask {
    BinaryMask mask;
    bool occluded = false;  // false means the image passes through restoration untouched
};

/// Segment every box, keep candidates with quality >= min_quality, binarize, union, refine.
AccessoryMask build_accessory_mask(const Image& image, std::span<const Detection> detections,
                                   SegmenterBackend& segmenter, const MaskingConfig& config);

}  // namespace earpipe
