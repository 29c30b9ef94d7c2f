#pragma once

/// @file geometry.hpp
/// Axis-aligned boxes, intersection-over-union and greedy non-maximum suppression.
///
/// Coordinates are real-valued pixels in (up, left, bottom, right) order, i.e.
/// the upper-left corner followed by the bottom-right corner. Areas use the
/// continuous convention: area = (bottom - up) * (right - left), with no +1.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace mspld {

struct BBox {
    double up = 0.0;
    double left = 0.0;
    double bottom = 0.0;
    double right = 0.0;

    double height() const noexcept { return bottom - up; }
    double width() const noexcept { return right - left; }
    double area() const noexcept { return std::max(0.0, height()) * std::max(0.0, width()); }
    bool valid() const noexcept { return up <= bottom && left <= right; }
    bool degenerate() const noexcept { return !(area() > 0.0); }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct ScoredBox {
    BBox box;
    int class_id = 0;
    double score = 0.0;

    friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

inline double intersection_area(const BBox& a, const BBox& b) noexcept {
    const double h = std::min(a.bottom, b.bottom) - std::max(a.up, b.up);
    const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
    if (h <= 0.0 || w <= 0.0) return 0.0;
    return h * w;
}

/// IoU in [0,1]. Zero when the boxes are disjoint or either one has zero area.
inline double iou(const BBox& a, const BBox& b) noexcept {
    if (a.degenerate() || b.degenerate()) return 0.0;
    const double inter = intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

/// Clips `b` to the image rectangle [0,height] x [0,width].
inline BBox clip(const BBox& b, double height, double width) noexcept {
    BBox r{std::clamp(b.up, 0.0, height), std::clamp(b.left, 0.0, width),
           std::clamp(b.bottom, 0.0, height), std::clamp(b.right, 0.0, width)};
    if (r.bottom < r.up) r.bottom = r.up;
    if (r.right < r.left) r.right = r.left;
    return r;
}

/// Stable descending-score order of `boxes`: ties keep the lower input index first.
inline std::vector<std::size_t> order_by_score(std::span<const ScoredBox> boxes) {
    std::vector<std::size_t> idx(boxes.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return boxes[a].score > boxes[b].score;
    });
    return idx;
}

/// Greedy NMS. A box is suppressed when its IoU with an already kept box is
/// >= `iou_threshold`, so every surviving pair has IoU strictly below it.
/// The caller is responsible for grouping by class when that matters.
inline std::vector<ScoredBox> nms(std::span<const ScoredBox> boxes, double iou_threshold) {
    std::vector<ScoredBox> kept;
    for (std::size_t i : order_by_score(boxes)) {
        const auto& cand = boxes[i];
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredBox& k) {
            return iou(k.box, cand.box) >= iou_threshold;
        });
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

/// Per-class NMS over a mixed list; output is grouped by ascending class and
/// descending score within each class.
inline std::vector<ScoredBox> nms_per_class(std::span<const ScoredBox> boxes, double iou_threshold) {
    int max_class = -1;
    for (const auto& b : boxes) max_class = std::max(max_class, b.class_id);
    std::vector<ScoredBox> out;
    for (int c = 0; c <= max_class; ++c) {
        std::vector<ScoredBox> group;
        for (const auto& b : boxes)
            if (b.class_id == c) group.push_back(b);
        auto kept = nms(group, iou_threshold);
        out.insert(out.end(), kept.begin(), kept.end());
    }
    return out;
}

}  // namespace mspld
