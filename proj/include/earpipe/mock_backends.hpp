#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "earpipe/alignment.hpp"
#include "earpipe/detection.hpp"
#include "earpipe/embedding.hpp"
#include "earpipe/masking.hpp"
#include "earpipe/restoration.hpp"

namespace earpipe {

// Deterministic stand-ins for the detector, segmenter, inpainter and embedder roles, plus a
// synthetic ear dataset to drive them. Same construction arguments and same pixels always give
// the same output.

/// Replays known detections for images it has been given, keyed by pixel content.
/// Confidence is fixed at 0.9; zero-shot replays also report a text alignment of 0.8 and take
/// their label from the first prompt term. Optional seeded jitter moves box edges by up to
/// `jitter` pixels.
class MockReplayDetector final : public DetectorBackend {
public:
    explicit MockReplayDetector(DetectorSource role, double jitter = 0.0, std::uint64_t seed = 0)
        : role_(role), jitter_(jitter), seed_(seed) {}

    void add(const Image& image, std::vector<Detection> detections);
    std::size_t size() const { return table_.size(); }

    std::string name() const override;
    std::vector<Detection> detect(const Image& image,
                                  const std::optional<std::string>& prompt) override;

private:
    DetectorSource role_;
    double jitter_;
    std::uint64_t seed_;
    std::map<std::string, std::vector<Detection>> table_;
};

/// Always proposes the same box, given as fractions of the image size.
class MockFixedBoxDetector final : public DetectorBackend {
public:
    explicit MockFixedBoxDetector(BoundingBox relative_box, DetectorSource role = DetectorSource::supervised)
        : box_(relative_box), role_(role) {}

    std::string name() const override { return "mock_fixed"; }
    std::vector<Detection> detect(const Image& image,
                                  const std::optional<std::string>& prompt) override;

private:
    BoundingBox box_;
    DetectorSource role_;
};

/// Box -> inscribed ellipse. With multi-mask on, also returns a shrunken ellipse (quality 0.45)
/// and the full box (quality 0.3), which the default acceptance threshold rejects.
class MockEllipseSegmenter final : public SegmenterBackend {
public:
    std::string name() const override { return "mock_ellipse"; }
    std::vector<MaskCandidate> segment(const Image& image, const BoundingBox& box,
                                       bool multi_mask) override;

    /// Soft scores that reach 0.5 exactly on the ellipse inscribed in `box`, scaled by `scale`.
    static SoftMask ellipse_scores(int width, int height, const BoundingBox& box, double scale);
};

/// Ear = pixels whose channel mean is at least `threshold`.
class MockThresholdEarSegmenter final : public EarSegmenterBackend {
public:
    explicit MockThresholdEarSegmenter(int threshold = 60) : threshold_(threshold) {}
    std::string name() const override { return "mock_threshold"; }
    BinaryMask segment_ear(const Image& image) override;

private:
    int threshold_;
};

/// Left when the bright-pixel centroid lies left of the image centre, else right.
class MockMassSideClassifier final : public SideClassifierBackend {
public:
    explicit MockMassSideClassifier(int threshold = 60) : threshold_(threshold) {}
    std::string name() const override { return "mock_mass"; }
    Side classify(const Image& image) override;

private:
    int threshold_;
};

/// 4x4 average pooling (112x112x3 -> 2352 values), mean-centring, a seeded Gaussian projection
/// to 512 dimensions, then unit normalization. A constant image maps to the normalized
/// projection of the all-ones vector.
class MockEmbedder final : public EmbedderBackend {
public:
    static constexpr int kPool = 4;
    static constexpr int kPooledSide = kEmbedderInputSize / kPool;
    static constexpr int kInputDim = kPooledSide * kPooledSide * 3;

    explicit MockEmbedder(std::uint64_t seed, int patch_size = 16);

    BackendDescriptor descriptor() const override { return {ModelFamily::mock, patch_size_}; }
    EmbeddingVector embed(const Image& image) override;

    /// The pooled, flattened feature vector before centring.
    static Eigen::VectorXf pooled_features(const Image& image);

private:
    int patch_size_;
    Eigen::MatrixXf projection_;  // 512 x kInputDim
};

struct SynthDataset {
    std::filesystem::path root;
    std::filesystem::path manifest_file;
    DatasetManifest manifest;
    std::vector<std::filesystem::path> ground_truth_masks;  // parallel to manifest.records
    std::size_t occluded = 0;
};

struct SynthOptions {
    int image_size = 128;
    double max_rotation_deg = 20.0;
};

/// Writes n_identities x images_per_identity ear images under `root`: an elongated ellipse per
/// identity with its own texture, drawn at a per-image rotation with noise. round(rate * total)
/// images, picked by seed, carry a bright disk accessory whose padded box goes to the
/// detection sidecar and whose pixels go to the ground-truth mask. Even identities are left
/// ears, odd ones right.
SynthDataset synth_dataset(const std::filesystem::path& root, int n_identities,
                           int images_per_identity, double occlusion_rate, std::uint64_t seed,
                           const SynthOptions& options = {});

}  // namespace earpipe
