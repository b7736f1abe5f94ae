#include "earpipe/image_io.hpp"

#include <cstring>

#include <png.h>

namespace earpipe {

namespace {

struct PngImage {
    png_image img;
    PngImage() {
        std::memset(&img, 0, sizeof img);
        img.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&img); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

png_uint_32 format_for_channels(int channels) {
    switch (channels) {
        case 1: return PNG_FORMAT_GRAY;
        case 3: return PNG_FORMAT_RGB;
        default: return PNG_FORMAT_RGBA;
    }
}

}  // namespace

Image read_png(const std::filesystem::path& file) {
    PngImage png;
    if (!png_image_begin_read_from_file(&png.img, file.c_str())) {
        throw IoError("cannot read PNG " + file.string() + ": " + png.img.message);
    }
    const bool color = png.img.format & PNG_FORMAT_FLAG_COLOR;
    const bool alpha = png.img.format & PNG_FORMAT_FLAG_ALPHA;
    const int channels = color ? (alpha ? 4 : 3) : 1;
    png.img.format = format_for_channels(channels);
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png.img));
    if (!png_image_finish_read(&png.img, nullptr, buf.data(), 0, nullptr)) {
        throw IoError("cannot decode PNG " + file.string() + ": " + png.img.message);
    }
    return Image(static_cast<int>(png.img.width), static_cast<int>(png.img.height), channels,
                 std::move(buf));
}

void write_png(const Image& image, const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    PngImage png;
    png.img.width = static_cast<png_uint_32>(image.width());
    png.img.height = static_cast<png_uint_32>(image.height());
    png.img.format = format_for_channels(image.channels());
    if (!png_image_write_to_file(&png.img, file.c_str(), 0, image.pixels().data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + file.string() + ": " + png.img.message);
    }
}

BinaryMask read_mask_png(const std::filesystem::path& file) {
    const Image img = read_png(file);
    MaskArray bits(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            bool on = false;
            for (int c = 0; c < std::min(img.channels(), 3); ++c) on |= img.at(x, y, c) != 0;
            bits(y, x) = on;
        }
    }
    return BinaryMask(std::move(bits));
}

void write_mask_png(const BinaryMask& mask, const std::filesystem::path& file) {
    Image img(mask.width(), mask.height(), 1);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) img.at(x, y, 0) = mask(x, y) ? 255 : 0;
    }
    write_png(img, file);
}

}  // namespace earpipe
