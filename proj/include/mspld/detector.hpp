#pragma once

/// @file detector.hpp
/// The detector contract and three lightweight families standing in for
/// CNN detectors:
///   - prototype: nearest class/background prototype, softmax over -distance^2
///   - linear:    softmax regression over classes and background, fixed full-batch gradient passes
///   - histogram: naive-Bayes scorer over quantized standardized features
///
/// Every model sees a subset ("view") of the feature channels. A box is
/// described by the coverage-weighted mean of the grid cells inside it and by
/// its contrast with a surrounding ring; see `box_descriptor`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspld/data_model.hpp"
#include "mspld/error.hpp"
#include "mspld/geometry.hpp"
#include "mspld/rng.hpp"

namespace mspld {

enum class Family { prototype, linear, histogram };

inline std::string to_string(Family f) {
    switch (f) {
        case Family::prototype: return "prototype";
        case Family::linear: return "linear";
        case Family::histogram: return "histogram";
    }
    return "?";
}

inline Family family_from_string(const std::string& s) {
    if (s == "prototype") return Family::prototype;
    if (s == "linear") return Family::linear;
    if (s == "histogram") return Family::histogram;
    throw InvalidArgument("unknown detector family '" + s + "'");
}

struct DetectorSpec {
    Family family = Family::prototype;
    std::vector<int> view;  // feature channels seen by the model; empty = all
    double negative_iou = 0.3;  // proposals below this overlap with every annotation are background
    double positive_iou = 0.7;  // proposals this close to an annotation add positives
    int negatives_per_image = 32;
    int background_prototypes = 4;
    int linear_epochs = 150;
    double linear_rate = 0.5;
    double linear_l2 = 1e-3;
    int histogram_bins = 8;
    std::uint64_t seed = 0;

    friend bool operator==(const DetectorSpec&, const DetectorSpec&) = default;
};

/// Descriptor of one box over all D channels: [inner mean (D), ring mean (D)].
using Descriptor = std::vector<double>;

namespace detail {

/// Overlap length of [a0,a1) and [b0,b1).
inline double overlap_1d(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

/// Coverage-weighted channel sums of `box` over the grid; returns total weight.
inline double pooled_sum(const FeatureGrid& g, const BBox& box, std::vector<double>& acc) {
    acc.assign(g.dim, 0.0);
    const double cs = g.cell_size;
    const int r0 = std::max(0, static_cast<int>(std::floor(box.up / cs)));
    const int r1 = std::min(g.rows - 1, static_cast<int>(std::floor(box.bottom / cs)));
    const int c0 = std::max(0, static_cast<int>(std::floor(box.left / cs)));
    const int c1 = std::min(g.cols - 1, static_cast<int>(std::floor(box.right / cs)));
    double total = 0.0;
    for (int r = r0; r <= r1; ++r) {
        const double wy = overlap_1d(r * cs, (r + 1) * cs, box.up, box.bottom) / cs;
        if (wy <= 0.0) continue;
        for (int c = c0; c <= c1; ++c) {
            const double w = wy * overlap_1d(c * cs, (c + 1) * cs, box.left, box.right) / cs;
            if (w <= 0.0) continue;
            total += w;
            for (int d = 0; d < g.dim; ++d) acc[d] += w * g.at(r, c, d);
        }
    }
    return total;
}

}  // namespace detail

inline Descriptor box_descriptor(const ImageRecord& img, const BBox& box) {
    const auto& g = img.feature_grid;
    const int D = g.dim;
    Descriptor out(2 * static_cast<std::size_t>(D), 0.0);

    std::vector<double> inner, outer;
    const double w_in = detail::pooled_sum(g, box, inner);
    const double pad_y = std::max(g.cell_size, 0.25 * box.height());
    const double pad_x = std::max(g.cell_size, 0.25 * box.width());
    const BBox grown = clip(BBox{box.up - pad_y, box.left - pad_x, box.bottom + pad_y, box.right + pad_x},
                            img.height, img.width);
    const double w_out = detail::pooled_sum(g, grown, outer);
    const double w_ring = w_out - w_in;
    for (int d = 0; d < D; ++d) {
        const double in_mean = w_in > 0.0 ? inner[d] / w_in : 0.0;
        out[d] = in_mean;
        out[D + d] = w_ring > 1e-9 ? (outer[d] - inner[d]) / w_ring : in_mean;
    }
    return out;
}

/// Row-major n x (2D) descriptors for a list of boxes of one image.
struct DescriptorMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

inline DescriptorMatrix describe(const ImageRecord& img, std::span<const BBox> boxes) {
    DescriptorMatrix m;
    m.rows = boxes.size();
    m.cols = 2 * static_cast<std::size_t>(img.feature_grid.dim);
    m.data.reserve(m.rows * m.cols);
    for (const auto& b : boxes) {
        const auto d = box_descriptor(img, b);
        m.data.insert(m.data.end(), d.begin(), d.end());
    }
    return m;
}

struct DetectorModel {
    int model_id = 0;
    DetectorSpec spec;
    int num_classes = 0;
    bool trained = false;
    // Per-feature standardization learned from the training samples.
    std::vector<double> mean;
    std::vector<double> scale;
    // prototype: C prototypes; linear: C weight rows (bias last);
    // histogram: C+1 rows of flattened (feature x bin) log-probabilities, background last.
    std::vector<std::vector<double>> class_params;
    // prototype: k-means background prototypes; linear: the background weight row.
    std::vector<std::vector<double>> background_params;
    double temperature = 1.0;

    friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};

/// Scores of every proposal for every class, all in [0,1].
struct DetectionOutput {
    int image_id = 0;
    int num_classes = 0;
    std::vector<BBox> boxes;    // refined boxes, one per proposal
    std::vector<double> scores;  // boxes.size() x num_classes, row-major

    double score(std::size_t proposal, int c) const { return scores[proposal * num_classes + c]; }

    friend bool operator==(const DetectionOutput&, const DetectionOutput&) = default;
};

/// One pool entry for training: an image, its proposals, and the boxes to
/// treat as ground truth (real annotations or pseudo labels).
struct TrainItem {
    const ImageRecord* image = nullptr;
    const ProposalSet* proposals = nullptr;
    std::vector<Annotation> annotations;
};

namespace detail {

/// Projects a full descriptor onto a model's view: [inner[view], inner[view]-ring[view]].
inline std::vector<double> view_features(const DetectorSpec& spec, std::span<const double> desc) {
    const std::size_t D = desc.size() / 2;
    std::vector<double> f;
    auto push = [&](std::size_t ch) {
        if (ch >= D) throw InvalidArgument("view channel " + std::to_string(ch) + " out of range");
        f.push_back(desc[ch]);
    };
    if (spec.view.empty()) {
        for (std::size_t ch = 0; ch < D; ++ch) push(ch);
        for (std::size_t ch = 0; ch < D; ++ch) f.push_back(desc[ch] - desc[D + ch]);
    } else {
        for (int ch : spec.view) push(static_cast<std::size_t>(ch));
        for (int ch : spec.view) f.push_back(desc[ch] - desc[D + ch]);
    }
    return f;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
    for (auto& v : p) v /= z;
    return p;
}

constexpr double kHistogramRange = 2.5;

inline int histogram_bin(double standardized, int bins) {
    const double t = (standardized + kHistogramRange) / (2.0 * kHistogramRange);
    return std::clamp(static_cast<int>(std::floor(t * bins)), 0, bins - 1);
}

/// Deterministic Lloyd iterations seeded with evenly spaced samples.
inline std::vector<std::vector<double>> kmeans(const std::vector<std::vector<double>>& xs, int k, int iters) {
    k = std::min<int>(k, static_cast<int>(xs.size()));
    std::vector<std::vector<double>> centers;
    for (int i = 0; i < k; ++i) centers.push_back(xs[(xs.size() * i) / k]);
    std::vector<int> assign(xs.size(), 0);
    for (int it = 0; it < iters; ++it) {
        for (std::size_t n = 0; n < xs.size(); ++n) {
            double best = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = squared_distance(xs[n], centers[c]);
                if (d < best) {
                    best = d;
                    assign[n] = c;
                }
            }
        }
        std::vector<std::vector<double>> sum(k, std::vector<double>(xs.front().size(), 0.0));
        std::vector<int> cnt(k, 0);
        for (std::size_t n = 0; n < xs.size(); ++n) {
            ++cnt[assign[n]];
            for (std::size_t f = 0; f < xs[n].size(); ++f) sum[assign[n]][f] += xs[n][f];
        }
        for (int c = 0; c < k; ++c)
            if (cnt[c] > 0)
                for (std::size_t f = 0; f < sum[c].size(); ++f) centers[c][f] = sum[c][f] / cnt[c];
    }
    return centers;
}

struct Samples {
    std::vector<std::vector<double>> x;
    std::vector<int> y;  // class id, or -1 for background
};

inline Samples collect_samples(const DetectorSpec& spec, std::span<const TrainItem> pool) {
    Samples s;
    for (const auto& item : pool) {
        const auto& img = *item.image;
        for (const auto& a : item.annotations) {
            s.x.push_back(view_features(spec, box_descriptor(img, a.box)));
            s.y.push_back(a.class_id);
        }
        std::vector<std::size_t> negatives;
        for (std::size_t p = 0; p < item.proposals->proposals.size(); ++p) {
            const auto& box = item.proposals->proposals[p];
            if (box.degenerate()) continue;
            double best = 0.0;
            int best_class = -1;
            for (const auto& a : item.annotations) {
                const double o = iou(box, a.box);
                if (o > best) {
                    best = o;
                    best_class = a.class_id;
                }
            }
            if (best >= spec.positive_iou && best_class >= 0) {
                s.x.push_back(view_features(spec, box_descriptor(img, box)));
                s.y.push_back(best_class);
            } else if (best < spec.negative_iou) {
                negatives.push_back(p);
            }
        }
        auto rng = make_rng(spec.seed, static_cast<std::uint64_t>(img.image_id));
        std::shuffle(negatives.begin(), negatives.end(), rng);
        negatives.resize(std::min<std::size_t>(negatives.size(), static_cast<std::size_t>(spec.negatives_per_image)));
        std::sort(negatives.begin(), negatives.end());
        for (std::size_t p : negatives) {
            s.x.push_back(view_features(spec, box_descriptor(img, item.proposals->proposals[p])));
            s.y.push_back(-1);
        }
    }
    return s;
}

inline void fit_standardizer(DetectorModel& m, const Samples& s) {
    const std::size_t F = s.x.front().size();
    m.mean.assign(F, 0.0);
    m.scale.assign(F, 0.0);
    for (const auto& x : s.x)
        for (std::size_t f = 0; f < F; ++f) m.mean[f] += x[f];
    for (auto& v : m.mean) v /= static_cast<double>(s.x.size());
    for (const auto& x : s.x)
        for (std::size_t f = 0; f < F; ++f) m.scale[f] += (x[f] - m.mean[f]) * (x[f] - m.mean[f]);
    for (auto& v : m.scale) v = std::max(std::sqrt(v / static_cast<double>(s.x.size())), 1e-6);
}

inline std::vector<double> standardize(const DetectorModel& m, std::vector<double> x) {
    for (std::size_t f = 0; f < x.size(); ++f) x[f] = (x[f] - m.mean[f]) / m.scale[f];
    return x;
}

inline void train_prototype(DetectorModel& m, const Samples& s) {
    const int C = m.num_classes;
    const std::size_t F = s.x.front().size();
    m.class_params.assign(C, std::vector<double>(F, 0.0));
    std::vector<int> count(C, 0);
    std::vector<std::vector<double>> background;
    for (std::size_t n = 0; n < s.x.size(); ++n) {
        if (s.y[n] < 0) {
            background.push_back(s.x[n]);
            continue;
        }
        ++count[s.y[n]];
        for (std::size_t f = 0; f < F; ++f) m.class_params[s.y[n]][f] += s.x[n][f];
    }
    for (int c = 0; c < C; ++c)
        for (auto& v : m.class_params[c]) v /= count[c];
    m.background_params = background.empty() ? std::vector<std::vector<double>>{}
                                             : kmeans(background, m.spec.background_prototypes, 10);

    // Temperature: mean squared distance of samples to their own prototype.
    double spread = 0.0;
    std::size_t n_spread = 0;
    for (std::size_t n = 0; n < s.x.size(); ++n) {
        if (s.y[n] < 0) continue;
        spread += squared_distance(s.x[n], m.class_params[s.y[n]]);
        ++n_spread;
    }
    m.temperature = std::max(spread / static_cast<double>(std::max<std::size_t>(n_spread, 1)), 1e-3);
}

/// Multinomial logistic regression over C classes plus background, full-batch
/// gradient descent from zero weights. Rows 0..C-1 live in class_params, the
/// background row in background_params[0]; the last entry of a row is its bias.
inline void train_linear(DetectorModel& m, const Samples& s) {
    const int C = m.num_classes;
    const std::size_t F = s.x.front().size();
    const double N = static_cast<double>(s.x.size());
    std::vector<std::vector<double>> w(C + 1, std::vector<double>(F + 1, 0.0));
    std::vector<std::vector<double>> grad(C + 1, std::vector<double>(F + 1, 0.0));
    std::vector<double> logits(C + 1);
    for (int epoch = 0; epoch < m.spec.linear_epochs; ++epoch) {
        for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t n = 0; n < s.x.size(); ++n) {
            for (int r = 0; r <= C; ++r) {
                double z = w[r][F];
                for (std::size_t f = 0; f < F; ++f) z += w[r][f] * s.x[n][f];
                logits[r] = z;
            }
            const auto p = softmax(logits);
            const int target = s.y[n] < 0 ? C : s.y[n];
            for (int r = 0; r <= C; ++r) {
                const double err = p[r] - (r == target ? 1.0 : 0.0);
                for (std::size_t f = 0; f < F; ++f) grad[r][f] += err * s.x[n][f];
                grad[r][F] += err;
            }
        }
        for (int r = 0; r <= C; ++r)
            for (std::size_t f = 0; f <= F; ++f) {
                const double reg = f < F ? m.spec.linear_l2 * w[r][f] : 0.0;
                w[r][f] -= m.spec.linear_rate * (grad[r][f] / N + reg);
            }
    }
    m.background_params = {w[C]};
    w.pop_back();
    m.class_params = std::move(w);
}

inline void train_histogram(DetectorModel& m, const Samples& s) {
    const int C = m.num_classes;
    const int B = m.spec.histogram_bins;
    const std::size_t F = s.x.front().size();
    std::vector<std::vector<double>> counts(C + 1, std::vector<double>(F * B, 1.0));  // Laplace prior
    std::vector<double> totals(C + 1, static_cast<double>(B));
    for (std::size_t n = 0; n < s.x.size(); ++n) {
        const int row = s.y[n] < 0 ? C : s.y[n];
        totals[row] += 1.0;
        for (std::size_t f = 0; f < F; ++f) counts[row][f * B + histogram_bin(s.x[n][f], B)] += 1.0;
    }
    for (int r = 0; r <= C; ++r)
        for (auto& v : counts[r]) v = std::log(v / totals[r]);
    m.class_params = std::move(counts);
    // Naive Bayes over correlated features is overconfident; temper the log-odds.
    m.temperature = std::sqrt(static_cast<double>(F));
}

}  // namespace detail

inline DetectorModel make_detector(int model_id, const DetectorSpec& spec, int num_classes) {
    if (num_classes < 1) throw InvalidArgument("num_classes must be >= 1");
    DetectorModel m;
    m.model_id = model_id;
    m.spec = spec;
    m.num_classes = num_classes;
    return m;
}

/// Fits a fresh state on `pool`. Deterministic in (pool order, spec.seed).
inline DetectorModel train(const DetectorModel& model, std::span<const TrainItem> pool) {
    DetectorModel m = model;
    const auto samples = detail::collect_samples(m.spec, pool);
    std::vector<int> positives(m.num_classes, 0);
    for (int y : samples.y)
        if (y >= 0) {
            if (y >= m.num_classes) throw TrainingError("annotation class out of range");
            ++positives[y];
        }
    for (int c = 0; c < m.num_classes; ++c)
        if (positives[c] == 0)
            throw TrainingError("model " + std::to_string(m.model_id) + " (" + to_string(m.spec.family) +
                                "): class " + std::to_string(c) + " has no positive examples in the pool");

    detail::fit_standardizer(m, samples);
    detail::Samples z = samples;
    for (auto& x : z.x) x = detail::standardize(m, std::move(x));
    m.class_params.clear();
    m.background_params.clear();
    m.temperature = 1.0;
    switch (m.spec.family) {
        case Family::prototype: detail::train_prototype(m, z); break;
        case Family::linear: detail::train_linear(m, z); break;
        case Family::histogram: detail::train_histogram(m, z); break;
    }
    m.trained = true;
    return m;
}

/// Class scores in [0,1] for one full descriptor.
inline std::vector<double> score_descriptor(const DetectorModel& m, std::span<const double> desc) {
    if (!m.trained) throw InvalidArgument("model " + std::to_string(m.model_id) + " is not trained");
    const auto x = detail::standardize(m, detail::view_features(m.spec, desc));
    const int C = m.num_classes;
    std::vector<double> out(C);
    switch (m.spec.family) {
        case Family::prototype: {
            std::vector<double> logits;
            for (const auto& p : m.class_params) logits.push_back(-detail::squared_distance(x, p) / m.temperature);
            for (const auto& p : m.background_params)
                logits.push_back(-detail::squared_distance(x, p) / m.temperature);
            const auto prob = detail::softmax(logits);
            std::copy_n(prob.begin(), C, out.begin());
            break;
        }
        case Family::linear: {
            const std::size_t F = x.size();
            std::vector<double> logits;
            auto affine = [&](const std::vector<double>& w) {
                double z = w[F];
                for (std::size_t f = 0; f < F; ++f) z += w[f] * x[f];
                return z;
            };
            for (const auto& w : m.class_params) logits.push_back(affine(w));
            logits.push_back(affine(m.background_params.front()));
            const auto prob = detail::softmax(logits);
            std::copy_n(prob.begin(), C, out.begin());
            break;
        }
        case Family::histogram: {
            const int B = m.spec.histogram_bins;
            std::vector<double> logits(C + 1, 0.0);
            for (int r = 0; r <= C; ++r)
                for (std::size_t f = 0; f < x.size(); ++f)
                    logits[r] += m.class_params[r][f * B + detail::histogram_bin(x[f], B)];
            for (auto& l : logits) l /= m.temperature;
            const auto prob = detail::softmax(logits);
            std::copy_n(prob.begin(), C, out.begin());
            break;
        }
    }
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

/// Scores precomputed descriptors of `boxes` (one descriptor row per box).
inline DetectionOutput score_descriptors(const DetectorModel& m, int image_id, std::span<const BBox> boxes,
                                         const DescriptorMatrix& desc) {
    if (desc.rows != boxes.size()) throw InvalidArgument("descriptor rows do not match box count");
    DetectionOutput out;
    out.image_id = image_id;
    out.num_classes = m.num_classes;
    out.boxes.assign(boxes.begin(), boxes.end());
    out.scores.reserve(boxes.size() * m.num_classes);
    for (std::size_t i = 0; i < desc.rows; ++i) {
        const auto s = score_descriptor(m, desc.row(i));
        out.scores.insert(out.scores.end(), s.begin(), s.end());
    }
    return out;
}

inline DetectionOutput score(const DetectorModel& m, const ImageRecord& img, const ProposalSet& proposals) {
    if (!m.trained) throw InvalidArgument("model " + std::to_string(m.model_id) + " is not trained");
    return score_descriptors(m, img.image_id, proposals.proposals, describe(img, proposals.proposals));
}

namespace detail {

/// Mean that does not depend on argument order: values are summed in sorted
/// order, and identical values are returned unchanged.
inline double order_free_mean(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    if (values.front() == values.back()) return values.front();
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

}  // namespace detail

/// Element-wise mean of score matrices and refined box coordinates.
inline DetectionOutput fuse(std::span<const DetectionOutput> outputs) {
    if (outputs.empty()) throw InvalidArgument("fuse needs at least one detection output");
    const auto& first = outputs.front();
    for (const auto& o : outputs)
        if (o.image_id != first.image_id || o.num_classes != first.num_classes ||
            o.boxes.size() != first.boxes.size() || o.scores.size() != first.scores.size())
            throw InvalidArgument("fuse: detection outputs have mismatched dimensions");
    if (outputs.size() == 1) return first;

    DetectionOutput out = first;
    std::vector<double> vals(outputs.size());
    for (std::size_t k = 0; k < out.scores.size(); ++k) {
        for (std::size_t j = 0; j < outputs.size(); ++j) vals[j] = outputs[j].scores[k];
        out.scores[k] = std::clamp(detail::order_free_mean(vals), 0.0, 1.0);
    }
    for (std::size_t b = 0; b < out.boxes.size(); ++b) {
        for (double BBox::*coord : {&BBox::up, &BBox::left, &BBox::bottom, &BBox::right}) {
            for (std::size_t j = 0; j < outputs.size(); ++j) vals[j] = outputs[j].boxes[b].*coord;
            out.boxes[b].*coord = detail::order_free_mean(vals);
        }
    }
    return out;
}

inline std::vector<ScoredBox> to_scored_boxes(const DetectionOutput& out) {
    std::vector<ScoredBox> v;
    v.reserve(out.scores.size());
    for (std::size_t i = 0; i < out.boxes.size(); ++i)
        for (int c = 0; c < out.num_classes; ++c) v.push_back(ScoredBox{out.boxes[i], c, out.score(i, c)});
    return v;
}

// ---------------------------------------------------------------------------
// JSON state

inline json to_json(const DetectorSpec& s) {
    return json{{"family", to_string(s.family)},
                {"view", s.view},
                {"negative_iou", s.negative_iou},
                {"positive_iou", s.positive_iou},
                {"negatives_per_image", s.negatives_per_image},
                {"background_prototypes", s.background_prototypes},
                {"linear_epochs", s.linear_epochs},
                {"linear_rate", s.linear_rate},
                {"linear_l2", s.linear_l2},
                {"histogram_bins", s.histogram_bins},
                {"seed", s.seed}};
}

inline DetectorSpec detector_spec_from_json(const json& j) {
    DetectorSpec s;
    s.family = family_from_string(j.at("family").get<std::string>());
    s.view = j.value("view", s.view);
    s.negative_iou = j.value("negative_iou", s.negative_iou);
    s.positive_iou = j.value("positive_iou", s.positive_iou);
    s.negatives_per_image = j.value("negatives_per_image", s.negatives_per_image);
    s.background_prototypes = j.value("background_prototypes", s.background_prototypes);
    s.linear_epochs = j.value("linear_epochs", s.linear_epochs);
    s.linear_rate = j.value("linear_rate", s.linear_rate);
    s.linear_l2 = j.value("linear_l2", s.linear_l2);
    s.histogram_bins = j.value("histogram_bins", s.histogram_bins);
    s.seed = j.value("seed", s.seed);
    return s;
}

inline json to_json(const DetectorModel& m) {
    return json{{"model_id", m.model_id},
                {"spec", to_json(m.spec)},
                {"num_classes", m.num_classes},
                {"trained", m.trained},
                {"mean", m.mean},
                {"scale", m.scale},
                {"class_params", m.class_params},
                {"background_params", m.background_params},
                {"temperature", m.temperature}};
}

inline DetectorModel detector_from_json(const json& j) {
    try {
        DetectorModel m;
        m.model_id = j.at("model_id").get<int>();
        m.spec = detector_spec_from_json(j.at("spec"));
        m.num_classes = j.at("num_classes").get<int>();
        m.trained = j.at("trained").get<bool>();
        m.mean = j.at("mean").get<std::vector<double>>();
        m.scale = j.at("scale").get<std::vector<double>>();
        m.class_params = j.at("class_params").get<std::vector<std::vector<double>>>();
        m.background_params = j.at("background_params").get<std::vector<std::vector<double>>>();
        m.temperature = j.at("temperature").get<double>();
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("detector state: ") + e.what());
    }
}

}  // namespace mspld
