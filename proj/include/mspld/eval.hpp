#pragma once

/// @file eval.hpp
/// VOC-style detection metrics: per-class average precision (11-point or
/// all-points interpolation), CorLoc, and pseudo-label quality.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mspld/curriculum.hpp"
#include "mspld/data_model.hpp"
#include "mspld/geometry.hpp"

namespace mspld {

enum class ApMode { eleven_point, all_points };

struct ImageDetections {
    int image_id = 0;
    std::vector<ScoredBox> boxes;
};

struct ImageGroundTruth {
    int image_id = 0;
    std::vector<Annotation> objects;
};

/// Per-class values; nullopt where the metric is undefined (no ground truth).
struct ClassMetric {
    std::vector<std::optional<double>> per_class;
    double mean = 0.0;  // over defined classes only; 0 when none is defined
    std::vector<std::string> warnings;
};

namespace detail {

inline double mean_defined(const std::vector<std::optional<double>>& v) {
    double s = 0.0;
    int n = 0;
    for (const auto& x : v)
        if (x) {
            s += *x;
            ++n;
        }
    return n > 0 ? s / n : 0.0;
}

inline std::map<int, const ImageGroundTruth*> index_gts(std::span<const ImageGroundTruth> gts) {
    std::map<int, const ImageGroundTruth*> out;
    for (const auto& g : gts) out[g.image_id] = &g;
    return out;
}

}  // namespace detail

/// AP from a ranked TP/FP sequence with `npos` positives.
inline double ap_from_ranking(const std::vector<bool>& is_tp, int npos, ApMode mode) {
    if (npos <= 0) return 0.0;
    std::vector<double> rec, prec;
    int tp = 0, fp = 0;
    for (bool t : is_tp) {
        t ? ++tp : ++fp;
        rec.push_back(static_cast<double>(tp) / npos);
        prec.push_back(static_cast<double>(tp) / (tp + fp));
    }
    if (mode == ApMode::eleven_point) {
        double ap = 0.0;
        for (int k = 0; k <= 10; ++k) {
            const double t = k / 10.0;
            double p = 0.0;
            for (std::size_t n = 0; n < rec.size(); ++n)
                if (rec[n] >= t) p = std::max(p, prec[n]);
            ap += p;
        }
        return ap / 11.0;
    }
    std::vector<double> mrec{0.0}, mpre{0.0};
    mrec.insert(mrec.end(), rec.begin(), rec.end());
    mpre.insert(mpre.end(), prec.begin(), prec.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
    double ap = 0.0;
    for (std::size_t i = 1; i < mrec.size(); ++i) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    return ap;
}

/// Greedy VOC matching per class: detections in descending score order
/// (ties keep input order); a detection is a true positive when its best-IoU
/// ground truth of the same class reaches `iou_thresh` and is still unmatched.
inline ClassMetric average_precision(std::span<const ImageDetections> dets, std::span<const ImageGroundTruth> gts,
                                     int num_classes, double iou_thresh = 0.5, ApMode mode = ApMode::eleven_point) {
    ClassMetric out;
    out.per_class.assign(num_classes, std::nullopt);
    const auto gt_index = detail::index_gts(gts);

    for (int c = 0; c < num_classes; ++c) {
        int npos = 0;
        for (const auto& g : gts)
            for (const auto& a : g.objects) npos += a.class_id == c;

        struct Entry {
            int image_id;
            BBox box;
            double score;
        };
        std::vector<Entry> entries;
        for (const auto& d : dets)
            for (const auto& b : d.boxes)
                if (b.class_id == c) entries.push_back(Entry{d.image_id, b.box, b.score});
        std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });

        if (npos == 0) {
            out.warnings.push_back("class " + std::to_string(c) + " has no ground truth; AP undefined");
            continue;
        }
        std::map<int, std::vector<bool>> used;
        std::vector<bool> is_tp;
        for (const auto& e : entries) {
            bool tp = false;
            auto it = gt_index.find(e.image_id);
            if (it != gt_index.end()) {
                const auto& objs = it->second->objects;
                auto& flags = used[e.image_id];
                flags.resize(objs.size(), false);
                double best = -1.0;
                int best_k = -1;
                for (std::size_t k = 0; k < objs.size(); ++k) {
                    if (objs[k].class_id != c) continue;
                    const double o = iou(e.box, objs[k].box);
                    if (o > best) {
                        best = o;
                        best_k = static_cast<int>(k);
                    }
                }
                if (best_k >= 0 && best >= iou_thresh && !flags[best_k]) {
                    flags[best_k] = true;
                    tp = true;
                }
            }
            is_tp.push_back(tp);
        }
        out.per_class[c] = ap_from_ranking(is_tp, npos, mode);
    }
    out.mean = detail::mean_defined(out.per_class);
    return out;
}

/// For every image containing class c, the image is correctly localized
/// when its top-scored class-c detection overlaps some class-c ground truth
/// at IoU >= iou_thresh. Images without a class-c detection count as misses.
inline ClassMetric corloc(std::span<const ImageDetections> dets, std::span<const ImageGroundTruth> gts, int num_classes,
                          double iou_thresh = 0.5) {
    ClassMetric out;
    out.per_class.assign(num_classes, std::nullopt);
    std::map<int, const ImageDetections*> det_index;
    for (const auto& d : dets) det_index[d.image_id] = &d;

    for (int c = 0; c < num_classes; ++c) {
        int containing = 0, correct = 0;
        for (const auto& g : gts) {
            const bool has = std::any_of(g.objects.begin(), g.objects.end(), [c](const Annotation& a) { return a.class_id == c; });
            if (!has) continue;
            ++containing;
            auto it = det_index.find(g.image_id);
            if (it == det_index.end()) continue;
            const ScoredBox* top = nullptr;
            for (const auto& b : it->second->boxes)
                if (b.class_id == c && (top == nullptr || b.score > top->score)) top = &b;
            if (top == nullptr) continue;
            const bool hit = std::any_of(g.objects.begin(), g.objects.end(), [&](const Annotation& a) {
                return a.class_id == c && iou(a.box, top->box) >= iou_thresh;
            });
            correct += hit;
        }
        if (containing == 0) {
            out.warnings.push_back("class " + std::to_string(c) + " appears in no image; CorLoc undefined");
            continue;
        }
        out.per_class[c] = static_cast<double>(correct) / containing;
    }
    out.mean = detail::mean_defined(out.per_class);
    return out;
}

struct QualityRates {
    double img_precision = 1.0;
    double img_recall = 0.0;
    double ins_precision = 1.0;
    double ins_recall = 0.0;
    int images_selected = 0;  // support of img_precision
    int boxes_generated = 0;  // support of ins_precision
    /// Precision with zero support is reported as 1.0 and flagged here.
    bool precision_undefined = true;
};

struct QualityReport {
    QualityRates overall;
    std::vector<QualityRates> per_class;
};

/// Quality of selected pseudo labels against the hidden ground truth of the
/// unlabeled pool `gts`.
///   image level:    a selected image is correct when every pseudo class it
///                   carries is present in its ground truth; recall is over
///                   pool images containing any target class.
///   instance level: a pseudo box is correct when it overlaps a same-class
///                   ground truth at IoU >= 0.5; recall is over all ground
///                   truth boxes of the pool.
/// Per-class rates restrict both sides to class c.
inline QualityReport pseudo_quality(std::span<const PseudoLabelSet> pseudo, std::span<const ImageGroundTruth> gts,
                                    int num_classes, double iou_thresh = 0.5) {
    const auto gt_index = detail::index_gts(gts);
    static const ImageGroundTruth kEmpty{};
    auto gt_of = [&](int id) -> const ImageGroundTruth& {
        auto it = gt_index.find(id);
        return it == gt_index.end() ? kEmpty : *it->second;
    };

    // class -1 stands for "all classes".
    auto rates_for = [&](int cls) {
        QualityRates r;
        auto in_scope = [cls](int c) { return cls < 0 || c == cls; };
        int img_correct = 0, img_total = 0, img_relevant = 0;
        int box_correct = 0, box_total = 0, gt_total = 0, gt_found = 0;

        for (const auto& g : gts) {
            if (std::any_of(g.objects.begin(), g.objects.end(), [&](const Annotation& a) { return in_scope(a.class_id); }))
                ++img_relevant;
            for (const auto& a : g.objects) gt_total += in_scope(a.class_id);
        }
        std::map<int, std::vector<bool>> found;
        for (const auto& set : pseudo) {
            const auto& g = gt_of(set.image_id);
            const bool carries = std::any_of(set.boxes.begin(), set.boxes.end(), [&](const PseudoBox& b) { return in_scope(b.class_id); });
            if (!carries) continue;
            ++img_total;
            bool all_present = true;
            for (const auto& b : set.boxes) {
                if (!in_scope(b.class_id)) continue;
                const bool present = std::any_of(g.objects.begin(), g.objects.end(), [&](const Annotation& a) { return a.class_id == b.class_id; });
                all_present = all_present && present;
            }
            img_correct += all_present;

            auto& flags = found[set.image_id];
            flags.resize(g.objects.size(), false);
            for (const auto& b : set.boxes) {
                if (!in_scope(b.class_id)) continue;
                ++box_total;
                bool ok = false;
                for (std::size_t k = 0; k < g.objects.size(); ++k) {
                    if (g.objects[k].class_id != b.class_id || iou(g.objects[k].box, b.box) < iou_thresh) continue;
                    ok = true;
                    flags[k] = true;
                }
                box_correct += ok;
            }
        }
        for (const auto& [id, flags] : found) {
            const auto& g = gt_of(id);
            for (std::size_t k = 0; k < flags.size(); ++k) gt_found += flags[k] && in_scope(g.objects[k].class_id);
        }

        r.images_selected = img_total;
        r.boxes_generated = box_total;
        r.precision_undefined = img_total == 0;
        r.img_precision = img_total > 0 ? static_cast<double>(img_correct) / img_total : 1.0;
        r.ins_precision = box_total > 0 ? static_cast<double>(box_correct) / box_total : 1.0;
        r.img_recall = img_relevant > 0 ? static_cast<double>(img_correct) / img_relevant : 0.0;
        r.ins_recall = gt_total > 0 ? static_cast<double>(gt_found) / gt_total : 0.0;
        return r;
    };

    QualityReport report;
    report.overall = rates_for(-1);
    for (int c = 0; c < num_classes; ++c) report.per_class.push_back(rates_for(c));
    return report;
}

inline std::vector<ImageGroundTruth> ground_truth_for(const DatasetSplit& d, std::span<const int> ids) {
    std::vector<ImageGroundTruth> out;
    for (int id : ids) out.push_back(ImageGroundTruth{id, d.image(id).objects});
    return out;
}

namespace detail {

inline std::string csv_number(std::optional<double> v) {
    if (!v) return "nan";
    std::ostringstream ss;
    ss.imbue(std::locale::classic());
    ss << std::fixed << std::setprecision(6) << *v;
    return ss.str();
}

}  // namespace detail

/// Per-class table: class_id,ap,corloc,img_p,img_r,ins_p,ins_r, then a "mean" row.
inline std::string metrics_csv(const ClassMetric& ap, const ClassMetric& cl, const std::optional<QualityReport>& quality) {
    std::ostringstream out;
    out << "class_id,ap,corloc,img_p,img_r,ins_p,ins_r\n";
    const std::size_t C = ap.per_class.size();
    auto q = [&](std::size_t c, double QualityRates::*field) -> std::optional<double> {
        if (!quality) return std::nullopt;
        return quality->per_class[c].*field;
    };
    for (std::size_t c = 0; c < C; ++c) {
        out << c << ',' << detail::csv_number(ap.per_class[c]) << ',' << detail::csv_number(cl.per_class[c]) << ','
            << detail::csv_number(q(c, &QualityRates::img_precision)) << ','
            << detail::csv_number(q(c, &QualityRates::img_recall)) << ','
            << detail::csv_number(q(c, &QualityRates::ins_precision)) << ','
            << detail::csv_number(q(c, &QualityRates::ins_recall)) << '\n';
    }
    auto overall = [&](double QualityRates::*field) -> std::optional<double> {
        if (!quality) return std::nullopt;
        return quality->overall.*field;
    };
    out << "mean," << detail::csv_number(ap.mean) << ',' << detail::csv_number(cl.mean) << ','
        << detail::csv_number(overall(&QualityRates::img_precision)) << ','
        << detail::csv_number(overall(&QualityRates::img_recall)) << ','
        << detail::csv_number(overall(&QualityRates::ins_precision)) << ','
        << detail::csv_number(overall(&QualityRates::ins_recall)) << '\n';
    return out.str();
}

}  // namespace mspld
