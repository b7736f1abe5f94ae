#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace earpipe {

// ---------------------------------------------------------------------------
// Errors. Every error carries the pipeline stage (or subsystem) it came from
// so the CLI can print a stage-qualified message.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    Error(std::string where, const std::string& what)
        : std::runtime_error("[" + where + "] " + what), where_(std::move(where)) {}

    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

#define EARPIPE_DEFINE_ERROR(Name, tag)                                           \
    struct Name : Error {                                                         \
        explicit Name(const std::string& what) : Error(tag, what) {}              \
    }

EARPIPE_DEFINE_ERROR(IngestionError, "ingest");
EARPIPE_DEFINE_ERROR(ConfigError, "config");
EARPIPE_DEFINE_ERROR(DetectionError, "detect");
EARPIPE_DEFINE_ERROR(MaskingError, "mask");
EARPIPE_DEFINE_ERROR(AlignmentError, "align");
EARPIPE_DEFINE_ERROR(RestorationError, "inpaint");
EARPIPE_DEFINE_ERROR(EmbeddingError, "embed");
EARPIPE_DEFINE_ERROR(SideSplitError, "side_split");
EARPIPE_DEFINE_ERROR(ProtocolError, "evaluate");
EARPIPE_DEFINE_ERROR(ScoringError, "evaluate");
EARPIPE_DEFINE_ERROR(ClassificationError, "report");
EARPIPE_DEFINE_ERROR(ComparisonError, "report");
EARPIPE_DEFINE_ERROR(IoError, "io");

#undef EARPIPE_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Raster data
// ---------------------------------------------------------------------------

/// Row-major, interleaved 8-bit image with 1, 3 or 4 channels.
class Image {
public:
    using ChannelMap = Eigen::Map<const Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic,
                                                     Eigen::RowMajor>,
                                  0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

    Image(int width, int height, int channels);
    Image(int width, int height, int channels, std::vector<std::uint8_t> pixels);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }

    std::uint8_t& at(int x, int y, int c) { return pixels_[index(x, y, c)]; }
    std::uint8_t at(int x, int y, int c) const { return pixels_[index(x, y, c)]; }

    std::span<std::uint8_t> pixels() noexcept { return pixels_; }
    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

    /// Strided view of one channel as a height x width array.
    ChannelMap channel(int c) const;

    /// Channel c converted to float, height x width.
    Eigen::ArrayXXf channel_as_float(int c) const;

    bool operator==(const Image&) const = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_;
    int height_;
    int channels_;
    std::vector<std::uint8_t> pixels_;
};

/// Gray is replicated into three channels, alpha is dropped, RGB passes through.
Image to_three_channel(const Image& image);

/// Rows index y, columns index x.
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel soft scores (rows = height); what a segmenter returns before binarization.
using SoftMask = Eigen::ArrayXXf;

class BinaryMask {
public:
    /// All-background mask.
    BinaryMask(int width, int height);
    explicit BinaryMask(MaskArray bits);

    static BinaryMask full(int width, int height);

    int width() const noexcept { return static_cast<int>(bits_.cols()); }
    int height() const noexcept { return static_cast<int>(bits_.rows()); }

    bool operator()(int x, int y) const { return bits_(y, x); }
    void set(int x, int y, bool value = true) { bits_(y, x) = value; }

    const MaskArray& bits() const noexcept { return bits_; }
    MaskArray& bits() noexcept { return bits_; }

    bool any() const { return bits_.any(); }
    Eigen::Index count() const { return bits_.count(); }

    bool operator==(const BinaryMask& other) const {
        return width() == other.width() && height() == other.height() &&
               (bits_ == other.bits_).all();
    }

private:
    MaskArray bits_;
};

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Pixel-space box, half-open in the sense that area = (x_max - x_min) * (y_max - y_min).
struct BoundingBox {
    double x_min = 0;
    double y_min = 0;
    double x_max = 0;
    double y_max = 0;

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    double area() const noexcept { return width() * height(); }
    bool valid() const noexcept { return x_min < x_max && y_min < y_max; }

    /// Intersection with [0,W]x[0,H]; nullopt if nothing remains.
    std::optional<BoundingBox> clamped(int image_width, int image_height) const;

    bool operator==(const BoundingBox&) const = default;
};

enum class DetectorSource { supervised, zero_shot };

std::string_view to_string(DetectorSource s);
DetectorSource detector_source_from_string(std::string_view s);

struct Detection {
    BoundingBox box;
    double confidence = 0;
    std::optional<double> text_alignment;  // present iff source == zero_shot
    DetectorSource source = DetectorSource::supervised;
    std::string label;

    /// Throws DetectionError when the score/source invariants do not hold.
    void check() const;

    bool operator==(const Detection&) const = default;
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

enum class Side { left, right, unknown };
enum class ImageStage { raw, aligned, inpainted };

std::string_view to_string(Side s);
Side side_from_string(std::string_view s);
std::string_view to_string(ImageStage s);
ImageStage image_stage_from_string(std::string_view s);

struct ImageRecord {
    std::string subject_id;
    Side side = Side::unknown;
    ImageStage stage = ImageStage::raw;
    std::filesystem::path path;
    std::string source_dataset;

    /// Stable per-record key, unique within a manifest. Survives stage rewrites of `path`.
    std::string key;

    // Optional sidecars. `annotations` holds ground-truth or externally produced detections in
    // the detection-dump format; the others are written by pipeline stages.
    std::optional<std::filesystem::path> annotations;
    std::optional<std::filesystem::path> ear_mask;
    std::optional<std::filesystem::path> detections;
    std::optional<std::filesystem::path> mask;

    bool operator==(const ImageRecord&) const = default;
};

/// "subject_id/side" when side-splitting, else "subject_id".
std::string identity_key(std::string_view subject_id, Side side, bool side_split);

struct DatasetManifest {
    std::string name;
    bool side_split = false;
    std::vector<ImageRecord> records;

    /// Directory that relative record paths resolve against.
    std::filesystem::path root;

    /// Identity key -> indices into `records`, in record order. Identities are ordered by key.
    /// With side_split, records whose side is unknown are left out.
    std::map<std::string, std::vector<std::size_t>> identities() const;

    /// Indices of records excluded from identities() (unknown side under side_split).
    std::vector<std::size_t> excluded_records() const;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

inline constexpr int kEmbeddingDim = 512;
using EmbeddingVector = Eigen::Matrix<float, kEmbeddingDim, 1>;

struct Embedding {
    EmbeddingVector vector = EmbeddingVector::Zero();
    std::string record_key;

    /// Throws EmbeddingError for non-finite components or zero norm.
    void check() const;
};

}  // namespace earpipe
