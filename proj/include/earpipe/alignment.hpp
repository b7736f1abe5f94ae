#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "earpipe/core_types.hpp"

namespace earpipe {

/// Ear orientation: degrees counterclockwise from image vertical, in (-90, 90].
struct AxisEstimate {
    double angle = 0;
    int support = 0;  // segments used, <= k; 0 means the moment fallback was taken
    double confidence = 0;
};

struct LineSegment {
    Eigen::Vector2d p0;
    Eigen::Vector2d p1;

    double length() const { return (p1 - p0).norm(); }
    /// Orientation in (-90, 90], counterclockwise from vertical.
    double orientation_deg() const;
};

struct LineExtractionParams {
    double angle_step_deg = 0.5;
    double distance_tolerance = 1.5;  // max point-to-line distance, pixels
    double max_gap = 3.0;             // gap that splits a run into two segments
    double min_length = 3.0;          // absolute floor
    double min_length_area_fraction = 0.0;  // times sqrt(mask area)
    int min_votes = 3;
    int max_segments = 64;
    /// Below this resultant-to-total-length ratio the doubled-angle mean has no direction.
    double min_coherence = 0.25;
};

/// Foreground pixels with a 4-neighbour in the background (or on the image border).
BinaryMask boundary_pixels(const BinaryMask& mask);

/// Straight segments along the mask boundary, longest first. Deterministic Hough voting
/// followed by run extraction along each peak line; orientation is refit by least squares.
std::vector<LineSegment> extract_line_segments(const BinaryMask& mask,
                                               const LineExtractionParams& params = {});

/// Orientation of the mask's principal (major) axis from second-order moments.
double moment_axis_angle(const BinaryMask& mask);

/// Length-weighted doubled-angle mean of the k longest boundary segments. Falls back to the
/// moment axis with confidence 0 when no segment qualifies or the segments are incoherent. Throws AlignmentError on an empty mask.
AxisEstimate estimate_vertical_axis(const BinaryMask& ear_mask, int k,
                                    const LineExtractionParams& params = {});

/// Maps any angle in degrees to (-90, 90].
double normalize_axis_angle(double degrees);

enum class PadFill { black, replicate, reflect };
std::string_view to_string(PadFill p);
PadFill pad_fill_from_string(std::string_view s);

/// Size of the canvas that holds a width x height image rotated by `angle_deg`.
std::pair<int, int> rotated_canvas(int width, int height, double angle_deg);

/// Rotates by -angle about the centre (bilinear) onto a canvas that holds the whole result.
Image rotate_upright(const Image& image, double angle_deg, PadFill pad_fill = PadFill::black);

/// Same geometry as rotate_upright. Bilinear coverage thresholded at 0.5, background outside
/// the source.
BinaryMask rotate_mask(const BinaryMask& mask, double angle_deg);

/// Inclusive pixel rectangle.
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool operator==(const PixelRect&) const = default;
};

/// Tight bounds of the foreground. Throws AlignmentError on an empty mask.
PixelRect foreground_bounds(const BinaryMask& mask);

/// Bilinear resize with pixel-centre alignment and edge clamping.
Image resize_bilinear(const Image& image, int out_width, int out_height);

Image crop(const Image& image, const PixelRect& rect);

/// Crop to the tight bounds of `ear_mask`, then resize to out_width x out_height.
Image crop_and_resize(const Image& image, const BinaryMask& ear_mask, int out_width = 112,
                      int out_height = 112);

/// Produces an ear mask for alignment. Instances are used by one worker at a time.
class EarSegmenterBackend {
public:
    virtual ~EarSegmenterBackend() = default;
    virtual std::string name() const = 0;
    virtual BinaryMask segment_ear(const Image& image) = 0;
};

struct AlignmentConfig {
    int k = 16;
    PadFill pad_fill = PadFill::black;
    int out_size = 112;

    void check() const;
};

/// Maps coordinates of the source image into the aligned output. Box coordinates are continuous
/// (pixel i covers [i, i+1)).
struct AlignmentTransform {
    double angle = 0;
    int source_width = 0, source_height = 0;
    int rotated_width = 0, rotated_height = 0;
    PixelRect crop;
    int out_width = 0, out_height = 0;

    Eigen::Vector2d map_point(const Eigen::Vector2d& continuous) const;
    /// Bounding box of the four mapped corners, clamped to the output; nullopt if it falls outside.
    std::optional<BoundingBox> map_box(const BoundingBox& box) const;
};

struct AlignmentResult {
    Image image;
    AxisEstimate axis;
    AlignmentTransform transform;
};

/// Estimate the axis, rotate upright, crop to the rotated ear mask and resize. The output always
/// has three channels.
AlignmentResult align_ear(const Image& image, const BinaryMask& ear_mask,
                          const AlignmentConfig& config);

}  // namespace earpipe
