#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace mspld;

namespace {

BBox at(double x) { return BBox{0, x, 10, x + 10}; }

std::vector<ImageGroundTruth> one_gt(int cls = 0) { return {ImageGroundTruth{0, {Annotation{at(0), cls}}}}; }

// Random images with 0..3 objects on a coarse grid and detections that are
// jittered copies of the objects or stray boxes.
struct Fixture {
    std::vector<ImageDetections> dets;
    std::vector<ImageGroundTruth> gts;
};

Fixture random_fixture(std::mt19937_64& rng, int C) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Fixture f;
    const int images = 1 + static_cast<int>(rng() % 6);
    for (int id = 0; id < images; ++id) {
        ImageGroundTruth g{id, {}};
        ImageDetections d{id, {}};
        const int n = static_cast<int>(rng() % 4);
        for (int k = 0; k < n; ++k) g.objects.push_back(Annotation{at(20.0 * k), static_cast<int>(rng() % C)});
        for (const auto& a : g.objects)
            if (u(rng) < 0.7)
                d.boxes.push_back({BBox{0, a.box.left + 4 * u(rng), 10, a.box.right + 4 * u(rng)},
                                   u(rng) < 0.8 ? a.class_id : static_cast<int>(rng() % C), u(rng)});
        const int stray = static_cast<int>(rng() % 3);
        for (int k = 0; k < stray; ++k) d.boxes.push_back({at(100.0 + 20 * k), static_cast<int>(rng() % C), u(rng)});
        f.dets.push_back(d);
        f.gts.push_back(g);
    }
    return f;
}

}  // namespace

TEST(AveragePrecision, PerfectDetectorScoresOne) {
    const auto gts = one_gt();
    const std::vector<ImageDetections> dets{{0, {{at(0), 0, 0.9}}}};
    const auto ap = average_precision(dets, gts, 1);
    EXPECT_DOUBLE_EQ(*ap.per_class[0], 1.0);
    EXPECT_DOUBLE_EQ(ap.mean, 1.0);
}

TEST(AveragePrecision, NoDetectionsScoreZero) {
    const auto ap = average_precision(std::vector<ImageDetections>{}, one_gt(), 1);
    EXPECT_EQ(*ap.per_class[0], 0.0);
}

TEST(AveragePrecision, TruePositiveRankedFirst) {
    const std::vector<ImageDetections> dets{{0, {{at(0), 0, 0.9}, {at(40), 0, 0.8}, {at(80), 0, 0.7}}}};
    EXPECT_DOUBLE_EQ(*average_precision(dets, one_gt(), 1).per_class[0], 1.0);
}

TEST(AveragePrecision, DuplicateDetectionIsAFalsePositive) {
    const std::vector<ImageDetections> dets{{0, {{at(0), 0, 0.7}, {at(1), 0, 0.9}}}};
    // Ranking: TP (0.9), FP (0.7 duplicate) -> still AP 1.
    EXPECT_DOUBLE_EQ(*average_precision(dets, one_gt(), 1).per_class[0], 1.0);
    // Two objects, duplicate ranked first on one of them.
    const std::vector<ImageGroundTruth> two{{0, {Annotation{at(0), 0}, Annotation{at(40), 0}}}};
    const std::vector<ImageDetections> d2{{0, {{at(0), 0, 0.9}, {at(1), 0, 0.8}, {at(40), 0, 0.7}}}};
    // 11-point: recall 0..0.5 -> precision 1, recall 0.6..1 -> 2/3.
    EXPECT_NEAR(*average_precision(d2, two, 1).per_class[0], (6 * 1.0 + 5 * (2.0 / 3.0)) / 11.0, 1e-12);
}

TEST(AveragePrecision, ClassWithoutGroundTruthIsUndefined) {
    const std::vector<ImageDetections> dets{{0, {{at(0), 0, 0.9}}}};
    const auto ap = average_precision(dets, one_gt(), 2);
    EXPECT_FALSE(ap.per_class[1].has_value());
    EXPECT_DOUBLE_EQ(ap.mean, 1.0);
    EXPECT_FALSE(ap.warnings.empty());
}

TEST(AveragePrecision, RankInvariant) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int C = 1 + static_cast<int>(rng() % 3);
        auto f = random_fixture(rng, C);
        const auto base = average_precision(f.dets, f.gts, C);
        auto moved = f.dets;
        for (auto& d : moved)
            for (auto& b : d.boxes) b.score = 0.1 + 0.5 * std::pow(b.score, 3.0);  // strictly increasing
        const auto again = average_precision(moved, f.gts, C);
        EXPECT_EQ(base.per_class, again.per_class);
    }
}

TEST(AveragePrecision, ElevenPointVersusAllPoints) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const int C = 1 + static_cast<int>(rng() % 3);
        const auto f = random_fixture(rng, C);
        const auto a11 = average_precision(f.dets, f.gts, C, 0.5, ApMode::eleven_point);
        const auto aall = average_precision(f.dets, f.gts, C, 0.5, ApMode::all_points);
        for (int c = 0; c < C; ++c) {
            ASSERT_EQ(a11.per_class[c].has_value(), aall.per_class[c].has_value());
            if (!a11.per_class[c]) continue;
            EXPECT_GE(*a11.per_class[c], 0.0);
            EXPECT_LE(*a11.per_class[c], 1.0);
            EXPECT_LE(*a11.per_class[c], *aall.per_class[c] + 1.0 / 11.0 + 1e-12);
        }
    }
}

TEST(CorLoc, HandValues) {
    const std::vector<ImageDetections> hit{{0, {{at(0), 0, 0.9}}}};
    EXPECT_DOUBLE_EQ(*corloc(hit, one_gt(), 1).per_class[0], 1.0);
    const std::vector<ImageDetections> miss{{0, {{at(40), 0, 0.9}, {at(0), 0, 0.5}}}};
    EXPECT_DOUBLE_EQ(*corloc(miss, one_gt(), 1).per_class[0], 0.0);
    const std::vector<ImageGroundTruth> two{{0, {Annotation{at(0), 0}}}, {1, {Annotation{at(0), 0}}}};
    const std::vector<ImageDetections> half{{0, {{at(0), 0, 0.9}}}, {1, {}}};
    EXPECT_DOUBLE_EQ(*corloc(half, two, 1).per_class[0], 0.5);
}

TEST(Quality, ExactLabelsAreFullyCorrect) {
    const std::vector<PseudoLabelSet> p{{0, {{at(0), 0, 0.9}}}};
    const auto q = pseudo_quality(p, one_gt(), 1);
    EXPECT_EQ(q.overall.img_precision, 1.0);
    EXPECT_EQ(q.overall.img_recall, 1.0);
    EXPECT_EQ(q.overall.ins_precision, 1.0);
    EXPECT_EQ(q.overall.ins_recall, 1.0);
    EXPECT_FALSE(q.overall.precision_undefined);
}

TEST(Quality, EmptySelectionIsFlagged) {
    const auto q = pseudo_quality(std::vector<PseudoLabelSet>{}, one_gt(), 1);
    EXPECT_TRUE(q.overall.precision_undefined);
    EXPECT_EQ(q.overall.img_precision, 1.0);
    EXPECT_EQ(q.overall.ins_precision, 1.0);
    EXPECT_EQ(q.overall.img_recall, 0.0);
    EXPECT_EQ(q.overall.ins_recall, 0.0);
}

TEST(Quality, ThreeOfFourBoxesCorrect) {
    const std::vector<ImageGroundTruth> gts{{0, {Annotation{at(0), 0}, Annotation{at(20), 0}, Annotation{at(40), 1}}}};
    const std::vector<PseudoLabelSet> p{{0, {{at(0), 0, 0.9}, {at(20), 0, 0.8}, {at(40), 1, 0.7}, {at(80), 1, 0.6}}}};
    const auto q = pseudo_quality(p, gts, 2);
    EXPECT_DOUBLE_EQ(q.overall.ins_precision, 0.75);
    EXPECT_DOUBLE_EQ(q.overall.ins_recall, 1.0);
    EXPECT_DOUBLE_EQ(q.per_class[1].ins_precision, 0.5);
}

TEST(Quality, WrongClassMakesTheImageIncorrect) {
    const std::vector<ImageGroundTruth> gts{{0, {Annotation{at(0), 0}}}, {1, {Annotation{at(0), 1}}}};
    const std::vector<PseudoLabelSet> p{{0, {{at(0), 0, 0.9}}}, {1, {{at(0), 0, 0.9}}}};
    const auto q = pseudo_quality(p, gts, 2);
    EXPECT_DOUBLE_EQ(q.overall.img_precision, 0.5);
    EXPECT_DOUBLE_EQ(q.overall.img_recall, 0.5);
}

TEST(Quality, RatesStayInUnitInterval) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int C = 1 + static_cast<int>(rng() % 3);
        const auto f = random_fixture(rng, C);
        std::vector<PseudoLabelSet> p;
        for (const auto& d : f.dets)
            if (rng() % 2) {
                PseudoLabelSet s{d.image_id, {}};
                for (const auto& b : d.boxes) s.boxes.push_back({b.box, b.class_id, b.score});
                p.push_back(s);
            }
        const auto q = pseudo_quality(p, f.gts, C);
        auto check = [](const QualityRates& r) {
            for (double v : {r.img_precision, r.img_recall, r.ins_precision, r.ins_recall}) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
        };
        check(q.overall);
        for (const auto& r : q.per_class) check(r);
    }
}

TEST(MetricsCsv, LayoutAndNan) {
    const std::vector<ImageDetections> dets{{0, {{at(0), 0, 0.9}}}};
    const auto ap = average_precision(dets, one_gt(), 2);
    const auto cl = corloc(dets, one_gt(), 2);
    const auto csv = metrics_csv(ap, cl, std::nullopt);
    EXPECT_EQ(csv,
              "class_id,ap,corloc,img_p,img_r,ins_p,ins_r\n"
              "0,1.000000,1.000000,nan,nan,nan,nan\n"
              "1,nan,nan,nan,nan,nan,nan\n"
              "mean,1.000000,1.000000,nan,nan,nan,nan\n");
}
