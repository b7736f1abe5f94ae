#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "earpipe/core_types.hpp"

namespace earpipe {

struct DetectorConfig {
    double box_threshold = 0.35;
    double text_threshold = 0.25;
    double max_area_ratio = 0.8;
    std::vector<std::string> prompt_terms{"earring", "wireless earbud", "hearing aid"};

    /// Throws ConfigError on out-of-range thresholds.
    void check() const;
};

/// A source of accessory proposals. Instances are used by one worker at a time.
class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    virtual std::string name() const = 0;
    /// `prompt` is set only when querying a text-conditioned backend.
    virtual std::vector<Detection> detect(const Image& image,
                                          const std::optional<std::string>& prompt) = 0;
};

/// Backend that never fires; stands in for a disabled detector role.
class NullDetector final : public DetectorBackend {
public:
    std::string name() const override { return "none"; }
    std::vector<Detection> detect(const Image&, const std::optional<std::string>&) override {
        return {};
    }
};

/// Lowercase, trim, join with ". " and terminate with ".".
std::string format_text_prompt(std::span<const std::string> terms);

/// Keeps detections passing the box threshold, the text threshold (when a text score exists)
/// and the max area ratio. Order is preserved.
std::vector<Detection> filter_detections(std::span<const Detection> detections,
                                         const DetectorConfig& config, int image_width,
                                         int image_height);

/// Supervised proposals followed by zero-shot proposals, each clamped to the image and filtered.
std::vector<Detection> detect_accessories(const Image& image, DetectorBackend& supervised,
                                          DetectorBackend& zero_shot,
                                          const DetectorConfig& config);

// Detection dump: {image, detections: [{box:[x0,y0,x1,y1], confidence, text_alignment?, source,
// label}]}. Used for caching, sidecar annotations, and the replay mock.
struct DetectionDump {
    std::filesystem::path image;
    std::vector<Detection> detections;
};

nlohmann::json detection_to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);
void write_detection_dump(const DetectionDump& dump, const std::filesystem::path& file);
DetectionDump read_detection_dump(const std::filesystem::path& file);

}  // namespace earpipe
