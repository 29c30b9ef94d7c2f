#pragma once

/// @file curriculum.hpp
/// Pseudo-label generation from fused detections plus the box-level and
/// image-level prior-knowledge filters, and the per-image class loss.
///
/// The pseudo-label pipeline runs in a fixed order:
///   1. per-class NMS at `nms_iou`
///   2. drop boxes scoring below `confidence_floor`
///   3. cross-class NMS at `nested_nms_iou` (nested/duplicate boxes)
///   4. discard the image if one class keeps >= `max_boxes_per_class` boxes
///      or >= `max_classes` distinct classes remain
///   5. drop boxes below their class-specific threshold
///   6. discard the image if nothing is left

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mspld/detector.hpp"
#include "mspld/error.hpp"
#include "mspld/geometry.hpp"

namespace mspld {

struct CurriculumConfig {
    double confidence_floor = 0.2;
    /// One threshold per class; empty means "not calibrated yet" (no stage-5 filtering).
    std::vector<double> class_thresholds;
    double threshold_quantile = 0.8;
    double nms_iou = 0.3;
    double nested_nms_iou = 0.7;
    int max_boxes_per_class = 4;
    int max_classes = 4;

    void validate() const {
        auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!unit(confidence_floor) || !unit(threshold_quantile) || !unit(nms_iou) || !unit(nested_nms_iou))
            throw InvalidArgument("curriculum thresholds must lie in [0,1]");
        for (double t : class_thresholds)
            if (!unit(t)) throw InvalidArgument("class thresholds must lie in [0,1]");
        if (max_boxes_per_class < 1 || max_classes < 1) throw InvalidArgument("curriculum max counts must be >= 1");
    }
};

struct PseudoBox {
    BBox box;
    int class_id = 0;
    double score = 0.0;

    friend bool operator==(const PseudoBox&, const PseudoBox&) = default;
};

struct PseudoLabelSet {
    int image_id = 0;
    std::vector<PseudoBox> boxes;

    bool has_class(int c) const {
        return std::any_of(boxes.begin(), boxes.end(), [c](const PseudoBox& b) { return b.class_id == c; });
    }
    std::vector<Annotation> annotations() const {
        std::vector<Annotation> out;
        for (const auto& b : boxes) out.push_back(Annotation{b.box, b.class_id});
        return out;
    }

    friend bool operator==(const PseudoLabelSet&, const PseudoLabelSet&) = default;
};

enum class DiscardReason { too_many_boxes, too_many_classes, nothing_reliable };

inline std::string to_string(DiscardReason r) {
    switch (r) {
        case DiscardReason::too_many_boxes: return "too_many_boxes";
        case DiscardReason::too_many_classes: return "too_many_classes";
        case DiscardReason::nothing_reliable: return "nothing_reliable";
    }
    return "?";
}

struct Discarded {
    int image_id = 0;
    DiscardReason reason = DiscardReason::nothing_reliable;

    friend bool operator==(const Discarded&, const Discarded&) = default;
};

using PseudoLabelResult = std::variant<PseudoLabelSet, Discarded>;

inline bool is_discarded(const PseudoLabelResult& r) { return std::holds_alternative<Discarded>(r); }

namespace detail {

/// Stages 1-4. Returns the surviving boxes (class-grouped, descending score)
/// or the reason the image is dropped.
inline std::variant<std::vector<ScoredBox>, DiscardReason> filter_boxes(const DetectionOutput& fused,
                                                                        const CurriculumConfig& cfg) {
    // Boxes below the floor can never suppress anything above it, so dropping
    // them before NMS gives the same survivors as NMS-then-floor.
    std::vector<ScoredBox> candidates;
    for (std::size_t i = 0; i < fused.boxes.size(); ++i)
        for (int c = 0; c < fused.num_classes; ++c)
            if (fused.score(i, c) >= cfg.confidence_floor)
                candidates.push_back(ScoredBox{fused.boxes[i], c, fused.score(i, c)});

    auto per_class = nms_per_class(candidates, cfg.nms_iou);
    auto survivors = nms(per_class, cfg.nested_nms_iou);

    std::vector<int> per_class_count(fused.num_classes, 0);
    for (const auto& b : survivors) ++per_class_count[b.class_id];
    int distinct = 0;
    for (int n : per_class_count) {
        if (n >= cfg.max_boxes_per_class) return DiscardReason::too_many_boxes;
        distinct += n > 0;
    }
    if (distinct >= cfg.max_classes) return DiscardReason::too_many_classes;
    return survivors;
}

/// Linear-interpolated quantile of unsorted values (q in [0,1]).
inline double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

inline PseudoLabelResult generate_pseudo_labels(const DetectionOutput& fused, const CurriculumConfig& cfg) {
    auto filtered = detail::filter_boxes(fused, cfg);
    if (auto* reason = std::get_if<DiscardReason>(&filtered)) return Discarded{fused.image_id, *reason};

    PseudoLabelSet set;
    set.image_id = fused.image_id;
    for (const auto& b : std::get<std::vector<ScoredBox>>(filtered)) {
        const double thr = cfg.class_thresholds.empty() ? 0.0 : cfg.class_thresholds.at(b.class_id);
        if (b.score >= thr) set.boxes.push_back(PseudoBox{b.box, b.class_id, b.score});
    }
    if (set.boxes.empty()) return Discarded{fused.image_id, DiscardReason::nothing_reliable};
    std::stable_sort(set.boxes.begin(), set.boxes.end(),
                     [](const PseudoBox& a, const PseudoBox& b) { return a.class_id < b.class_id; });
    return set;
}

/// Per-class thresholds: the `threshold_quantile` of the scores of boxes that
/// survive stages 1-4 across `fused`. Classes with no surviving box fall back
/// to the confidence floor.
inline std::vector<double> calibrate_class_thresholds(std::span<const DetectionOutput> fused,
                                                      const CurriculumConfig& cfg, int num_classes) {
    std::vector<std::vector<double>> scores(num_classes);
    for (const auto& out : fused) {
        auto filtered = detail::filter_boxes(out, cfg);
        if (auto* boxes = std::get_if<std::vector<ScoredBox>>(&filtered))
            for (const auto& b : *boxes) scores[b.class_id].push_back(b.score);
    }
    std::vector<double> thr(num_classes, cfg.confidence_floor);
    for (int c = 0; c < num_classes; ++c)
        if (!scores[c].empty()) thr[c] = std::max(cfg.confidence_floor, detail::quantile(scores[c], cfg.threshold_quantile));
    return thr;
}

constexpr double kLossEpsilon = 1e-6;

/// Mean of -log(score) over the given box scores; +inf when there are none.
inline double class_loss_from_scores(std::span<const double> scores) {
    if (scores.empty()) return std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double s : scores) sum += -std::log(std::clamp(s, kLossEpsilon, 1.0));
    return sum / static_cast<double>(scores.size());
}

/// Loss of `model` on the pseudo boxes of class `c` in one image; +inf when
/// the pseudo set carries no box of class `c`.
inline double image_class_loss(const DetectorModel& model, const ImageRecord& img, const PseudoLabelSet& pseudo,
                               int c) {
    std::vector<double> scores;
    for (const auto& b : pseudo.boxes)
        if (b.class_id == c) scores.push_back(score_descriptor(model, box_descriptor(img, b.box))[c]);
    return class_loss_from_scores(scores);
}

}  // namespace mspld
