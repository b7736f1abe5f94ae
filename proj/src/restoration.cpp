#include "earpipe/restoration.hpp"

#include <algorithm>
#include <cmath>

namespace earpipe {

Image normalize_input(const Image& image) {
    const int ch = image.channels();
    if (ch != 1 && ch != 3 && ch != 4) {
        throw RestorationError("unsupported channel count " + std::to_string(ch));
    }
    return to_three_channel(image);
}

BinaryMask conform_mask(const BinaryMask& mask, int width, int height) {
    if (mask.width() == width && mask.height() == height) return mask;
    BinaryMask out(width, height);
    const double sx = double(mask.width()) / width;
    const double sy = double(mask.height()) / height;
    for (int y = 0; y < height; ++y) {
        const int src_y = std::min(static_cast<int>((y + 0.5) * sy), mask.height() - 1);
        for (int x = 0; x < width; ++x) {
            const int src_x = std::min(static_cast<int>((x + 0.5) * sx), mask.width() - 1);
            out.set(x, y, mask(src_x, src_y));
        }
    }
    return out;
}

Image restore(const Image& image, const BinaryMask& mask, InpainterBackend& backend) {
    Image input = normalize_input(image);
    const BinaryMask hole = conform_mask(mask, input.width(), input.height());
    if (!hole.any()) return input;

    Image filled = [&] {
        try {
            return backend.inpaint(input, hole);
        } catch (const std::exception& e) {
            throw RestorationError("inpainter '" + backend.name() + "' failed: " + e.what());
        }
    }();
    if (filled.width() != input.width() || filled.height() != input.height() ||
        filled.channels() != 3) {
        throw RestorationError("inpainter '" + backend.name() + "' changed the image geometry");
    }

    for (int y = 0; y < input.height(); ++y) {
        for (int x = 0; x < input.width(); ++x) {
            if (hole(x, y)) continue;
            for (int c = 0; c < 3; ++c) filled.at(x, y, c) = input.at(x, y, c);
        }
    }
    return filled;
}

Image BoundaryAverageInpainter::inpaint(const Image& rgb, const BinaryMask& mask) {
    const int w = rgb.width(), h = rgb.height();
    Image out = rgb;
    last_sweeps_ = 0;

    std::vector<std::pair<int, int>> hole;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask(x, y)) hole.emplace_back(x, y);
        }
    }
    if (hole.empty()) return out;

    for (int c = 0; c < rgb.channels(); ++c) {
        Eigen::ArrayXXd v = rgb.channel_as_float(c).cast<double>();

        // Seed with the mean of known pixels touching the hole (8-neighbourhood).
        double ring_sum = 0;
        long ring_n = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (mask(x, y)) continue;
                bool touches = false;
                for (int dy = -1; dy <= 1 && !touches; ++dy) {
                    for (int dx = -1; dx <= 1 && !touches; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        touches = nx >= 0 && ny >= 0 && nx < w && ny < h && mask(nx, ny);
                    }
                }
                if (touches) {
                    ring_sum += v(y, x);
                    ++ring_n;
                }
            }
        }
        const double seed = ring_n > 0 ? ring_sum / ring_n : 128.0;
        for (auto [x, y] : hole) v(y, x) = seed;

        int sweeps = 0;
        if (ring_n > 0) {
            for (; sweeps < max_sweeps_; ++sweeps) {
                double max_change = 0;
                for (auto [x, y] : hole) {
                    double sum = 0;
                    int n = 0;
                    if (x > 0) sum += v(y, x - 1), ++n;
                    if (x < w - 1) sum += v(y, x + 1), ++n;
                    if (y > 0) sum += v(y - 1, x), ++n;
                    if (y < h - 1) sum += v(y + 1, x), ++n;
                    const double next = sum / n;
                    max_change = std::max(max_change, std::abs(next - v(y, x)));
                    v(y, x) = next;
                }
                if (max_change < tolerance_) {
                    ++sweeps;
                    break;
                }
            }
        }
        last_sweeps_ = std::max(last_sweeps_, sweeps);

        for (auto [x, y] : hole) {
            out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v(y, x)), 0L, 255L));
        }
    }
    return out;
}

}  // namespace earpipe
