#pragma once

#include <string>

#include "earpipe/core_types.hpp"

namespace earpipe {

/// 1 -> 3 channels by replication, 4 -> 3 by dropping alpha, 3 unchanged.
Image normalize_input(const Image& image);

/// Nearest-neighbour resize to width x height; identity when the size already matches.
BinaryMask conform_mask(const BinaryMask& mask, int width, int height);

/// Fills masked pixels of a three-channel image. Instances are used by one worker at a time.
class InpainterBackend {
public:
    virtual ~InpainterBackend() = default;
    virtual std::string name() const = 0;
    virtual Image inpaint(const Image& rgb, const BinaryMask& mask) = 0;
};

/// Runs the backend on the normalized image and conformed mask, then copies every background
/// pixel back from the input so only masked pixels can change. An empty mask skips the backend.
Image restore(const Image& image, const BinaryMask& mask, InpainterBackend& backend);

/// Deterministic reference inpainter: seeds the hole with the mean of the pixels bordering it,
/// then relaxes each hole pixel towards the mean of its 4-neighbours until the largest update
/// drops below `tolerance` or `max_sweeps` is reached. A mask with no known pixels fills 128.
class BoundaryAverageInpainter final : public InpainterBackend {
public:
    explicit BoundaryAverageInpainter(int max_sweeps = 500, double tolerance = 0.5)
        : max_sweeps_(max_sweeps), tolerance_(tolerance) {}

    std::string name() const override { return "mock_diffusion"; }
    Image inpaint(const Image& rgb, const BinaryMask& mask) override;

    int last_sweeps() const { return last_sweeps_; }

private:
    int max_sweeps_;
    double tolerance_;
    int last_sweeps_ = 0;
};

}  // namespace earpipe
