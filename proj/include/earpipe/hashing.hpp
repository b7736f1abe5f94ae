#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace earpipe {

/// Incremental SHA-256, hex digest.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const unsigned char> bytes);
    Sha256& update(std::string_view text);
    Sha256& update_file(const std::filesystem::path& file);
    std::string hex();

private:
    void* ctx_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& file);

}  // namespace earpipe

namespace earpipe {
class Image;
/// SHA-256 over dimensions, channel count and pixel bytes.
std::string image_fingerprint(const Image& image);
}  // namespace earpipe
