#include <random>

#include <gtest/gtest.h>

#include "earpipe/restoration.hpp"
#include "oracles.hpp"

using namespace earpipe;

namespace {

// Repaints everything, to check that restore composites the background back.
class PaintAll final : public InpainterBackend {
public:
    std::string name() const override { return "paint_all"; }
    Image inpaint(const Image& rgb, const BinaryMask&) override {
        ++calls;
        Image out = rgb;
        std::fill(out.pixels().begin(), out.pixels().end(), 7);
        return out;
    }
    int calls = 0;
};

class Broken final : public InpainterBackend {
public:
    std::string name() const override { return "broken"; }
    Image inpaint(const Image&, const BinaryMask&) override { return Image(2, 2, 3); }
};

BinaryMask rect(int w, int h, int x0, int y0, int x1, int y1) {
    BinaryMask m(w, h);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m.set(x, y);
    return m;
}

}  // namespace

TEST(Normalize, Examples) {
    Image gray(3, 2, 1);
    std::fill(gray.pixels().begin(), gray.pixels().end(), 77);
    const Image rgb = normalize_input(gray);
    ASSERT_EQ(rgb.channels(), 3);
    for (auto p : rgb.pixels()) EXPECT_EQ(p, 77);

    std::mt19937_64 rng(1);
    const Image rgba = oracle::random_image(rng, 4, 3, 4);
    const Image dropped = normalize_input(rgba);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) ASSERT_EQ(dropped.at(x, y, c), rgba.at(x, y, c));

    const Image three = oracle::random_image(rng, 5, 5, 3);
    EXPECT_EQ(normalize_input(three), three);
}

TEST(Conform, Examples) {
    std::mt19937_64 rng(2);
    const auto m = oracle::random_mask(rng, 10, 8, 0.5);
    EXPECT_EQ(conform_mask(m, 10, 8), m);

    // 2x downscale of a solid rectangle aligned to even coordinates.
    EXPECT_EQ(conform_mask(rect(20, 20, 4, 6, 11, 13), 10, 10), rect(10, 10, 2, 3, 5, 6));
    EXPECT_FALSE(conform_mask(BinaryMask(5, 5), 50, 40).any());
}

TEST(Conform, MatchesNearestNeighbourOracle) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const int w = 1 + static_cast<int>(rng() % 30), h = 1 + static_cast<int>(rng() % 30);
        const int tw = 1 + static_cast<int>(rng() % 30), th = 1 + static_cast<int>(rng() % 30);
        const auto m = oracle::random_mask(rng, w, h, 0.4);
        const auto c = conform_mask(m, tw, th);
        ASSERT_EQ(c.width(), tw);
        ASSERT_EQ(c.height(), th);
        for (int y = 0; y < th; ++y) {
            for (int x = 0; x < tw; ++x) {
                // Source pixel whose extent contains the target pixel centre.
                const int sx = std::min(w - 1, static_cast<int>(std::floor((x + 0.5) * w / tw)));
                const int sy = std::min(h - 1, static_cast<int>(std::floor((y + 0.5) * h / th)));
                ASSERT_EQ(c(x, y), m(sx, sy));
            }
        }
    }
}

TEST(Restore, EmptyMaskReturnsNormalizedInput) {
    std::mt19937_64 rng(4);
    PaintAll backend;
    for (int ch : {1, 3, 4}) {
        const Image img = oracle::random_image(rng, 9, 7, ch);
        EXPECT_EQ(restore(img, BinaryMask(9, 7), backend), normalize_input(img));
        EXPECT_EQ(restore(img, BinaryMask(3, 3), backend), normalize_input(img));
    }
    EXPECT_EQ(backend.calls, 0);
}

TEST(Restore, FullMaskTakesMockFill) {
    std::mt19937_64 rng(5);
    BoundaryAverageInpainter mock;
    const Image out = restore(oracle::random_image(rng, 12, 10, 3), BinaryMask::full(12, 10), mock);
    for (auto p : out.pixels()) ASSERT_EQ(p, 128);
}

TEST(Restore, OnlyMaskedPixelsChange) {
    std::mt19937_64 rng(6);
    PaintAll backend;
    const Image img = oracle::random_image(rng, 20, 16, 3);
    const auto hole = rect(20, 16, 5, 4, 12, 9);
    const Image out = restore(img, hole, backend);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x)
            for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(x, y, c), hole(x, y) ? 7 : img.at(x, y, c));
}

TEST(Restore, MaskIsConformedToImage) {
    std::mt19937_64 rng(7);
    PaintAll backend;
    const Image img = oracle::random_image(rng, 20, 20, 1);
    const auto small = rect(10, 10, 0, 0, 4, 4);
    const Image out = restore(img, small, backend);
    EXPECT_EQ(out.at(9, 9, 0), 7);
    EXPECT_EQ(out.at(10, 10, 2), img.at(10, 10, 0));
}

TEST(Restore, BackendErrorsAreRestorationErrors) {
    Broken broken;
    EXPECT_THROW(restore(Image(6, 6, 3), rect(6, 6, 1, 1, 2, 2), broken), RestorationError);
    PaintAll ok;
    EXPECT_THROW(restore(Image(6, 6, 2), rect(6, 6, 1, 1, 2, 2), ok), Error);
}

TEST(BoundaryAverage, ConstantSurroundFillsConstant) {
    Image img(15, 15, 3);
    std::fill(img.pixels().begin(), img.pixels().end(), 100);
    for (int c = 0; c < 3; ++c) img.at(7, 7, c) = 250;
    BoundaryAverageInpainter mock;
    const Image out = restore(img, rect(15, 15, 5, 5, 9, 9), mock);
    for (auto p : out.pixels()) ASSERT_EQ(p, 100);
}

TEST(BoundaryAverage, ReproducesLinearRamp) {
    // A linear ramp is harmonic, so relaxation converges back to it.
    Image img(40, 30, 3);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(40 + 4 * x);
    Image damaged = img;
    const auto hole = rect(40, 30, 12, 8, 27, 21);
    for (int y = 8; y <= 21; ++y)
        for (int x = 12; x <= 27; ++x)
            for (int c = 0; c < 3; ++c) damaged.at(x, y, c) = 255;
    BoundaryAverageInpainter mock(2000, 0.01);
    const Image out = restore(damaged, hole, mock);
    for (int y = 8; y <= 21; ++y)
        for (int x = 12; x <= 27; ++x) ASSERT_NEAR(out.at(x, y, 0), img.at(x, y, 0), 2);
    EXPECT_GT(mock.last_sweeps(), 1);
    EXPECT_LE(mock.last_sweeps(), 2000);
}

TEST(BoundaryAverage, Deterministic) {
    std::mt19937_64 rng(8);
    const Image img = oracle::random_image(rng, 32, 32, 3);
    const auto hole = oracle::random_mask(rng, 32, 32, 0.2);
    BoundaryAverageInpainter a, b;
    EXPECT_EQ(restore(img, hole, a), restore(img, hole, b));
}
