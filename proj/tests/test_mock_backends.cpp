#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "earpipe/alignment.hpp"
#include "earpipe/image_io.hpp"
#include "earpipe/manifest.hpp"
#include "earpipe/mock_backends.hpp"
#include "oracles.hpp"

using namespace earpipe;
namespace fs = std::filesystem;

namespace {

std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Synth, CleanDatasetHasNoAccessories) {
    const auto dir = oracle::scratch_dir("synth_clean");
    const SynthDataset d = synth_dataset(dir, 2, 2, 0.0, 7);
    ASSERT_EQ(d.manifest.records.size(), 4u);
    EXPECT_EQ(d.occluded, 0u);
    EXPECT_TRUE(validate_manifest(d.manifest).empty());
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& r = d.manifest.records[i];
        EXPECT_FALSE(read_mask_png(d.ground_truth_masks[i]).any());
        EXPECT_TRUE(read_detection_dump(*r.annotations).detections.empty());
        const Image img = read_png(d.root / r.path);
        EXPECT_EQ(img.width(), 128);
        EXPECT_EQ(img.channels(), 3);
    }
    EXPECT_EQ(d.manifest.records[0].side, Side::left);
    EXPECT_EQ(d.manifest.records[2].side, Side::right);
    EXPECT_EQ(d.manifest.records[0].subject_id, d.manifest.records[1].subject_id);
    EXPECT_NE(d.manifest.records[1].subject_id, d.manifest.records[2].subject_id);

    const DatasetManifest back = load_manifest(d.manifest_file);
    ASSERT_EQ(back.records.size(), 4u);
    EXPECT_EQ(back.records[3].key, d.manifest.records[3].key);
}

TEST(Synth, OcclusionRateAndGroundTruthAgree) {
    const auto dir = oracle::scratch_dir("synth_occluded");
    const SynthDataset d = synth_dataset(dir, 4, 5, 0.5, 7);
    ASSERT_EQ(d.manifest.records.size(), 20u);
    EXPECT_EQ(d.occluded, 10u);
    std::size_t with_gt = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        const BinaryMask gt = read_mask_png(d.ground_truth_masks[i]);
        const auto dets = read_detection_dump(*d.manifest.records[i].annotations).detections;
        if (!gt.any()) {
            EXPECT_TRUE(dets.empty());
            continue;
        }
        ++with_gt;
        ASSERT_EQ(dets.size(), 1u);
        EXPECT_EQ(dets[0].source, DetectorSource::supervised);
        // Every accessory pixel lies in the reported box.
        const Image img = read_png(d.root / d.manifest.records[i].path);
        for (int y = 0; y < gt.height(); ++y) {
            for (int x = 0; x < gt.width(); ++x) {
                if (!gt(x, y)) continue;
                ASSERT_GE(x + 0.5, dets[0].box.x_min);
                ASSERT_LE(x + 0.5, dets[0].box.x_max);
                ASSERT_GE(y + 0.5, dets[0].box.y_min);
                ASSERT_LE(y + 0.5, dets[0].box.y_max);
                ASSERT_GT(img.at(x, y, 0), 200);
            }
        }
    }
    EXPECT_EQ(with_gt, 10u);
}

TEST(Synth, SameArgumentsSameBytes) {
    const auto a = oracle::scratch_dir("synth_det_a");
    const auto b = oracle::scratch_dir("synth_det_b");
    const SynthDataset da = synth_dataset(a, 3, 3, 0.4, 11);
    const SynthDataset db = synth_dataset(b, 3, 3, 0.4, 11);
    ASSERT_EQ(da.manifest.records.size(), db.manifest.records.size());
    for (std::size_t i = 0; i < da.manifest.records.size(); ++i) {
        const auto& ra = da.manifest.records[i];
        EXPECT_EQ(ra.path, db.manifest.records[i].path);
        EXPECT_EQ(bytes(a / ra.path), bytes(b / ra.path));
        EXPECT_EQ(bytes(*ra.annotations), bytes(*db.manifest.records[i].annotations));
        EXPECT_EQ(bytes(da.ground_truth_masks[i]), bytes(db.ground_truth_masks[i]));
    }

    const auto c = oracle::scratch_dir("synth_det_c");
    const SynthDataset dc = synth_dataset(c, 3, 3, 0.4, 12);
    EXPECT_NE(bytes(a / da.manifest.records[0].path), bytes(c / dc.manifest.records[0].path));
}

TEST(Synth, RejectsBadArguments) {
    const auto dir = oracle::scratch_dir("synth_bad");
    EXPECT_THROW(synth_dataset(dir, 0, 2, 0.0, 1), ConfigError);
    EXPECT_THROW(synth_dataset(dir, 2, 0, 0.0, 1), ConfigError);
    EXPECT_THROW(synth_dataset(dir, 2, 2, 1.5, 1), ConfigError);
    EXPECT_THROW(synth_dataset(dir, 2, 2, -0.1, 1), ConfigError);
}

TEST(Synth, EarsAreElongatedAndSegmentable) {
    const auto dir = oracle::scratch_dir("synth_ears");
    const SynthDataset d = synth_dataset(dir, 2, 3, 0.0, 5);
    MockThresholdEarSegmenter seg;
    for (const auto& r : d.manifest.records) {
        const BinaryMask ear = seg.segment_ear(read_png(d.root / r.path));
        // Semi-axes 40..50 by 22..28 px: area between pi*22*40 and pi*28*50.
        EXPECT_GT(ear.count(), 2500);
        EXPECT_LT(ear.count(), 4600);
        EXPECT_LE(std::abs(moment_axis_angle(ear)), 25.0);
    }
}

TEST(MockSegmenters, EllipseScoresAreHalfOnTheBoundary) {
    const BoundingBox box{0.5, 0.5, 20.5, 10.5};
    const SoftMask s = MockEllipseSegmenter::ellipse_scores(24, 14, box, 1.0);
    EXPECT_FLOAT_EQ(s(5, 20), 0.5f);   // (x, y) = (20, 5): right end of the major axis
    EXPECT_FLOAT_EQ(s(5, 0), 0.5f);
    EXPECT_FLOAT_EQ(s(0, 10), 0.5f);   // top end of the minor axis
    EXPECT_FLOAT_EQ(s(5, 10), 1.0f);
    EXPECT_FLOAT_EQ(s(5, 23), 0.0f);
    for (int y = 0; y < 14; ++y)
        for (int x = 0; x < 24; ++x) ASSERT_TRUE(s(y, x) >= 0.0f && s(y, x) <= 1.0f);
}

TEST(MockSegmenters, ThresholdEarAndMassSide) {
    Image img(40, 20, 3);
    for (int y = 5; y < 15; ++y)
        for (int x = 2; x < 12; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 200;
    const BinaryMask ear = MockThresholdEarSegmenter(60).segment_ear(img);
    EXPECT_EQ(ear.count(), 100);
    EXPECT_TRUE(ear(2, 5));
    EXPECT_FALSE(ear(12, 5));
    EXPECT_EQ(MockMassSideClassifier().classify(img), Side::left);
    EXPECT_EQ(MockMassSideClassifier().classify(Image(40, 20, 3)), Side::unknown);
}

TEST(MockDetectors, FixedBoxScalesWithTheImage) {
    MockFixedBoxDetector det({0.25, 0.5, 0.75, 1.0});
    const auto d = det.detect(Image(40, 20, 3), std::nullopt);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].box, (BoundingBox{10, 10, 30, 20}));
    EXPECT_EQ(d[0].source, DetectorSource::supervised);

    MockFixedBoxDetector zs({0, 0, 1, 1}, DetectorSource::zero_shot);
    const auto z = zs.detect(Image(8, 8, 3), std::string("earring. hearing aid."));
    EXPECT_EQ(z[0].label, "earring");
    EXPECT_DOUBLE_EQ(*z[0].text_alignment, 0.8);
}

TEST(MockDetectors, ReplayIsKeyedByPixels) {
    Image a(8, 8, 3), b(8, 8, 3);
    b.at(0, 0, 0) = 1;
    MockReplayDetector det(DetectorSource::supervised);
    Detection d;
    d.box = {1, 1, 4, 4};
    d.confidence = 1.0;
    d.label = "earring";
    det.add(a, {d});
    EXPECT_EQ(det.detect(a, std::nullopt).size(), 1u);
    EXPECT_TRUE(det.detect(b, std::nullopt).empty());
}
