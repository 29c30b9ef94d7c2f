#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace mspld;

namespace {

// Output with one row per (box, class, score); other classes score 0.
DetectionOutput fixture(int C, const std::vector<std::tuple<BBox, int, double>>& rows) {
    DetectionOutput o{1, C, {}, {}};
    for (const auto& [box, c, s] : rows) {
        o.boxes.push_back(box);
        for (int k = 0; k < C; ++k) o.scores.push_back(k == c ? s : 0.0);
    }
    return o;
}

BBox at(double x) { return BBox{0, x, 10, x + 10}; }  // disjoint for x 20 apart

CurriculumConfig with_thresholds(int C, double t) {
    CurriculumConfig cfg;
    cfg.class_thresholds.assign(C, t);
    return cfg;
}

// Straightforward reading of the pipeline: NMS first, floor second.
PseudoLabelResult reference_pipeline(const DetectionOutput& f, const CurriculumConfig& cfg) {
    std::vector<ScoredBox> all;
    for (std::size_t i = 0; i < f.boxes.size(); ++i)
        for (int c = 0; c < f.num_classes; ++c) all.push_back({f.boxes[i], c, f.score(i, c)});
    std::vector<ScoredBox> per_class;
    for (const auto& b : nms_per_class(all, cfg.nms_iou))
        if (b.score >= cfg.confidence_floor) per_class.push_back(b);
    const auto survivors = nms(per_class, cfg.nested_nms_iou);
    std::vector<int> count(f.num_classes, 0);
    for (const auto& b : survivors) ++count[b.class_id];
    int classes = 0;
    for (int n : count) {
        if (n >= cfg.max_boxes_per_class) return Discarded{f.image_id, DiscardReason::too_many_boxes};
        classes += n > 0;
    }
    if (classes >= cfg.max_classes) return Discarded{f.image_id, DiscardReason::too_many_classes};
    PseudoLabelSet out{f.image_id, {}};
    for (int c = 0; c < f.num_classes; ++c)
        for (const auto& b : survivors)
            if (b.class_id == c && (cfg.class_thresholds.empty() || b.score >= cfg.class_thresholds[c]))
                out.boxes.push_back({b.box, b.class_id, b.score});
    if (out.boxes.empty()) return Discarded{f.image_id, DiscardReason::nothing_reliable};
    return out;
}

}  // namespace

TEST(PseudoLabels, AllBelowFloorIsDiscarded) {
    const auto f = fixture(2, {{at(0), 0, 0.19}, {at(20), 1, 0.1}});
    const auto r = generate_pseudo_labels(f, CurriculumConfig{});
    ASSERT_TRUE(is_discarded(r));
    EXPECT_EQ(std::get<Discarded>(r).reason, DiscardReason::nothing_reliable);
}

TEST(PseudoLabels, FourBoxesOfOneClassIsDiscarded) {
    const auto f = fixture(2, {{at(0), 0, 0.9}, {at(20), 0, 0.8}, {at(40), 0, 0.7}, {at(60), 0, 0.6}});
    const auto r = generate_pseudo_labels(f, with_thresholds(2, 0.5));
    ASSERT_TRUE(is_discarded(r));
    EXPECT_EQ(std::get<Discarded>(r).reason, DiscardReason::too_many_boxes);
    // Three boxes are fine.
    const auto g = fixture(2, {{at(0), 0, 0.9}, {at(20), 0, 0.8}, {at(40), 0, 0.7}});
    EXPECT_FALSE(is_discarded(generate_pseudo_labels(g, with_thresholds(2, 0.5))));
}

TEST(PseudoLabels, FourClassesIsDiscarded) {
    const auto f = fixture(5, {{at(0), 0, 0.9}, {at(20), 1, 0.8}, {at(40), 2, 0.7}, {at(60), 3, 0.6}});
    const auto r = generate_pseudo_labels(f, with_thresholds(5, 0.5));
    ASSERT_TRUE(is_discarded(r));
    EXPECT_EQ(std::get<Discarded>(r).reason, DiscardReason::too_many_classes);
}

TEST(PseudoLabels, CleanSingleObjectGivesOneBox) {
    const auto f = fixture(3, {{at(0), 1, 0.9}, {at(40), 2, 0.05}});
    const auto r = generate_pseudo_labels(f, with_thresholds(3, 0.5));
    ASSERT_FALSE(is_discarded(r));
    const auto& set = std::get<PseudoLabelSet>(r);
    ASSERT_EQ(set.boxes.size(), 1u);
    EXPECT_EQ(set.boxes[0], (PseudoBox{at(0), 1, 0.9}));
}

TEST(PseudoLabels, ClassThresholdRemovesWeakBoxes) {
    const auto f = fixture(2, {{at(0), 0, 0.9}, {at(40), 1, 0.4}});
    CurriculumConfig cfg;
    cfg.class_thresholds = {0.5, 0.5};
    const auto& set = std::get<PseudoLabelSet>(generate_pseudo_labels(f, cfg));
    ASSERT_EQ(set.boxes.size(), 1u);
    EXPECT_EQ(set.boxes[0].class_id, 0);
    cfg.class_thresholds = {0.95, 0.5};
    EXPECT_TRUE(is_discarded(generate_pseudo_labels(f, cfg)));
}

TEST(PseudoLabels, MatchesReferencePipelineOnRandomOutputs) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 400; ++trial) {
        const int C = 2 + static_cast<int>(rng() % 4);
        DetectionOutput f{trial, C, {}, {}};
        const int n = static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            f.boxes.push_back(fixtures::random_int_box(rng, 60));
            for (int c = 0; c < C; ++c) f.scores.push_back(u(rng) * u(rng));
        }
        CurriculumConfig cfg;
        if (trial % 2) cfg.class_thresholds.assign(C, 0.3 + 0.4 * u(rng));
        const auto got = generate_pseudo_labels(f, cfg);
        const auto want = reference_pipeline(f, cfg);
        ASSERT_EQ(got.index(), want.index());
        if (const auto* set = std::get_if<PseudoLabelSet>(&got)) {
            EXPECT_EQ(*set, std::get<PseudoLabelSet>(want));
            std::vector<int> count(C, 0);
            for (const auto& b : set->boxes) {
                EXPECT_GE(b.score, cfg.confidence_floor);
                if (!cfg.class_thresholds.empty()) {
                    EXPECT_GE(b.score, cfg.class_thresholds[b.class_id]);
                }
                ++count[b.class_id];
            }
            int classes = 0;
            for (int k : count) {
                EXPECT_LT(k, cfg.max_boxes_per_class);
                classes += k > 0;
            }
            EXPECT_LT(classes, cfg.max_classes);
            EXPECT_EQ(generate_pseudo_labels(f, cfg), got);
        } else {
            EXPECT_EQ(std::get<Discarded>(got).reason, std::get<Discarded>(want).reason);
        }
    }
}

TEST(Calibration, QuantileOfSurvivorScores) {
    // Class 0 survivors: 0.3, 0.5, 0.7 in separate images -> 0.8 quantile = 0.62.
    std::vector<DetectionOutput> outs{fixture(2, {{at(0), 0, 0.3}}), fixture(2, {{at(0), 0, 0.5}}),
                                      fixture(2, {{at(0), 0, 0.7}})};
    const auto thr = calibrate_class_thresholds(outs, CurriculumConfig{}, 2);
    EXPECT_NEAR(thr[0], 0.62, 1e-12);
    EXPECT_EQ(thr[1], 0.2);  // no survivors: the floor
}

TEST(Loss, HandValues) {
    EXPECT_TRUE(std::isinf(class_loss_from_scores({})));
    const std::vector<double> one{1.0};
    EXPECT_EQ(class_loss_from_scores(one), 0.0);
    const std::vector<double> halves{0.5, 0.5};
    EXPECT_NEAR(class_loss_from_scores(halves), 0.6931471805599453, 1e-12);
    const std::vector<double> zero{0.0};
    EXPECT_NEAR(class_loss_from_scores(zero), -std::log(kLossEpsilon), 1e-9);
}

TEST(Loss, NonIncreasingInScores) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> s(1 + rng() % 4);
        for (auto& v : s) v = u(rng);
        auto higher = s;
        const auto k = rng() % s.size();
        higher[k] = std::min(1.0, higher[k] + u(rng));
        EXPECT_LE(class_loss_from_scores(higher), class_loss_from_scores(s));
    }
}

TEST(Loss, AbsentClassIsInfiniteForAModel) {
    const auto d = fixtures::small_dataset();
    std::vector<ProposalSet> props;
    std::vector<TrainItem> items;
    for (int id : d.labeled_ids) props.push_back(generate_proposals(d.image(id), ProposalConfig{}, 1));
    for (std::size_t k = 0; k < d.labeled_ids.size(); ++k)
        items.push_back(TrainItem{&d.image(d.labeled_ids[k]), &props[k], d.image(d.labeled_ids[k]).objects});
    const auto m = train(make_detector(0, DetectorSpec{}, d.num_classes), items);
    const auto& img = d.image(d.unlabeled_ids.front());
    PseudoLabelSet set{img.image_id, {{img.objects.front().box, 0, 0.9}}};
    EXPECT_TRUE(std::isinf(image_class_loss(m, img, set, 1)));
    const double l = image_class_loss(m, img, set, 0);
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_GE(l, 0.0);
}
