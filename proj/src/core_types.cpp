#include "earpipe/core_types.hpp"

#include <algorithm>
#include <cmath>

namespace earpipe {

Image::Image(int width, int height, int channels)
    : Image(width, height, channels,
            std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                      std::max(height, 0) * std::max(channels, 0))) {}

Image::Image(int width, int height, int channels, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1) {
        throw Error("image", "image dimensions must be positive, got " + std::to_string(width) +
                                 "x" + std::to_string(height));
    }
    if (channels != 1 && channels != 3 && channels != 4) {
        throw Error("image", "unsupported channel count " + std::to_string(channels));
    }
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw Error("image", "pixel buffer length does not match width*height*channels");
    }
}

Image::ChannelMap Image::channel(int c) const {
    return ChannelMap(pixels_.data() + c, height_, width_,
                      Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(
                          static_cast<Eigen::Index>(width_) * channels_, channels_));
}

Eigen::ArrayXXf Image::channel_as_float(int c) const {
    return channel(c).cast<float>();
}

Image to_three_channel(const Image& image) {
    if (image.channels() == 3) return image;
    Image out(image.width(), image.height(), 3);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = image.at(x, y, image.channels() == 1 ? 0 : c);
            }
        }
    }
    return out;
}

BinaryMask::BinaryMask(int width, int height) : bits_(MaskArray::Constant(height, width, false)) {
    if (width < 1 || height < 1) {
        throw Error("mask", "mask dimensions must be positive");
    }
}

BinaryMask::BinaryMask(MaskArray bits) : bits_(std::move(bits)) {
    if (bits_.rows() < 1 || bits_.cols() < 1) {
        throw Error("mask", "mask dimensions must be positive");
    }
}

BinaryMask BinaryMask::full(int width, int height) {
    return BinaryMask(MaskArray::Constant(height, width, true));
}

std::optional<BoundingBox> BoundingBox::clamped(int image_width, int image_height) const {
    BoundingBox b{std::clamp(x_min, 0.0, double(image_width)),
                  std::clamp(y_min, 0.0, double(image_height)),
                  std::clamp(x_max, 0.0, double(image_width)),
                  std::clamp(y_max, 0.0, double(image_height))};
    if (!b.valid()) return std::nullopt;
    return b;
}

std::string_view to_string(DetectorSource s) {
    return s == DetectorSource::supervised ? "supervised" : "zero_shot";
}

DetectorSource detector_source_from_string(std::string_view s) {
    if (s == "supervised") return DetectorSource::supervised;
    if (s == "zero_shot") return DetectorSource::zero_shot;
    throw DetectionError("unknown detector source '" + std::string(s) + "'");
}

void Detection::check() const {
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    if (!in_unit(confidence)) {
        throw DetectionError("confidence outside [0,1]: " + std::to_string(confidence));
    }
    if (text_alignment && !in_unit(*text_alignment)) {
        throw DetectionError("text alignment outside [0,1]: " + std::to_string(*text_alignment));
    }
    if (text_alignment.has_value() != (source == DetectorSource::zero_shot)) {
        throw DetectionError("text alignment must be present exactly for zero-shot detections");
    }
    if (!box.valid()) {
        throw DetectionError("degenerate bounding box");
    }
}

std::string_view to_string(Side s) {
    switch (s) {
        case Side::left: return "left";
        case Side::right: return "right";
        case Side::unknown: return "unknown";
    }
    return "unknown";
}

Side side_from_string(std::string_view s) {
    if (s == "left") return Side::left;
    if (s == "right") return Side::right;
    if (s == "unknown" || s.empty()) return Side::unknown;
    throw IngestionError("unknown side '" + std::string(s) + "'");
}

std::string_view to_string(ImageStage s) {
    switch (s) {
        case ImageStage::raw: return "raw";
        case ImageStage::aligned: return "aligned";
        case ImageStage::inpainted: return "inpainted";
    }
    return "raw";
}

ImageStage image_stage_from_string(std::string_view s) {
    if (s == "raw" || s.empty()) return ImageStage::raw;
    if (s == "aligned") return ImageStage::aligned;
    if (s == "inpainted") return ImageStage::inpainted;
    throw IngestionError("unknown stage '" + std::string(s) + "'");
}

std::string identity_key(std::string_view subject_id, Side side, bool side_split) {
    std::string key(subject_id);
    if (side_split) {
        key += '/';
        key += to_string(side);
    }
    return key;
}

std::map<std::string, std::vector<std::size_t>> DatasetManifest::identities() const {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (side_split && r.side == Side::unknown) continue;
        out[identity_key(r.subject_id, r.side, side_split)].push_back(i);
    }
    return out;
}

std::vector<std::size_t> DatasetManifest::excluded_records() const {
    std::vector<std::size_t> out;
    if (!side_split) return out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].side == Side::unknown) out.push_back(i);
    }
    return out;
}

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
    if (p.is_absolute() || root.empty()) return p;
    return root / p;
}

void Embedding::check() const {
    if (!vector.allFinite()) {
        throw EmbeddingError("embedding for '" + record_key + "' has non-finite components");
    }
    if (vector.squaredNorm() == 0.0f) {
        throw EmbeddingError("embedding for '" + record_key + "' has zero norm");
    }
}

}  // namespace earpipe
