#pragma once

/// @file engine.hpp
/// The alternating optimization loop.
///
///   train every model on the labeled set; V_j = 0
///   for each iteration:
///     for each model j (ascending id):
///       fuse current detections on the unlabeled pool (all models, or only
///         model j when running a single model)
///       build pseudo labels; images the curriculum discards sit out this
///         iteration
///       L_j[i][c] = loss of model j on image i's class-c pseudo boxes
///       V_j = closed-form update given the other models' V
///       re-apply the image-level filter to V_j
///       retrain model j on labeled + selected pseudo-labeled images
///     grow the per-class selection targets
///
/// Stops after `max_iterations`, when no selection changed over a whole
/// iteration, or once the targets cover the whole unlabeled pool.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspld/curriculum.hpp"
#include "mspld/data_model.hpp"
#include "mspld/detector.hpp"
#include "mspld/error.hpp"
#include "mspld/eval.hpp"
#include "mspld/parallel.hpp"
#include "mspld/selector.hpp"

namespace mspld {

enum class RunMode { spl_single, spl_ensemble, mspld };

inline std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::spl_single: return "spl_single";
        case RunMode::spl_ensemble: return "spl_ensemble";
        case RunMode::mspld: return "mspld";
    }
    return "?";
}

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "spl_single") return RunMode::spl_single;
    if (s == "spl_ensemble") return RunMode::spl_ensemble;
    if (s == "mspld") return RunMode::mspld;
    throw InvalidArgument("unknown mode '" + s + "' (expected spl_single, spl_ensemble or mspld)");
}

struct RunConfig {
    std::vector<DetectorSpec> models;
    int initial_labels_per_class = 3;  // k
    int initial_pace = -1;             // R_1; -1 means "use k"
    int max_iterations = 6;
    CurriculumConfig curriculum;
    ProposalConfig proposals;
    double test_nms_iou = 0.3;
    double test_min_score = 0.01;
    std::uint64_t seed = 1;  // label sampling, proposals, detector negatives
    RunMode mode = RunMode::mspld;
    int workers = 1;

    int num_models() const { return static_cast<int>(models.size()); }

    void validate() const {
        if (models.empty()) throw InvalidArgument("run config needs at least one model");
        if (mode == RunMode::mspld && models.size() < 2) throw InvalidArgument("mspld mode requires m >= 2");
        if (initial_labels_per_class < 0) throw InvalidArgument("k must be non-negative");
        if (max_iterations < 0) throw InvalidArgument("max_iterations must be non-negative");
        curriculum.validate();
    }
};

struct ModelTrace {
    int model_id = 0;
    int selected_images = 0;
    int pseudo_boxes = 0;
    std::vector<int> selected_per_class;
    QualityRates quality;
    double test_map = 0.0;
    double corloc = 0.0;
};

struct ObjectiveStep {
    int model_id = 0;
    double before = 0.0;
    double after = 0.0;
};

struct IterationTrace {
    int iteration = 0;
    std::vector<int> targets;  // R[c] used in this iteration
    std::vector<ModelTrace> models;
    int discarded_images = 0;  // by the curriculum at the last model step
    double test_map = 0.0;     // fused over all models
    double corloc = 0.0;
    double objective = 0.0;  // after the last v-update
    std::vector<ObjectiveStep> objective_steps;
};

struct Evaluation {
    ClassMetric ap;
    ClassMetric corloc;
};

struct RunResult {
    RunMode mode = RunMode::mspld;
    std::vector<IterationTrace> traces;
    std::vector<DetectorModel> models;
    Evaluation initial;  // fused, right after supervised initialization
    Evaluation final;    // fused, after the last iteration
    std::vector<double> final_model_map;
    QualityReport final_quality;
    std::vector<PseudoLabelSet> final_pseudo;  // union of selected images, lowest model id wins
    std::vector<double> class_thresholds;
    std::string stop_reason;
};

/// Everything needed to continue a run at an iteration boundary.
struct RunState {
    int next_iteration = 1;
    std::vector<DetectorModel> models;
    std::vector<SelectionMatrix> selections;
    std::vector<std::vector<double>> lambdas;
    LossTensor losses;
    PaceState pace;
    std::vector<double> class_thresholds;
    std::vector<std::vector<PseudoLabelSet>> pseudo;  // per model, selected images only
    std::vector<IterationTrace> traces;
    Evaluation initial;
};

using CheckpointFn = std::function<void(const RunState&)>;

namespace detail {

/// Per-image proposals and descriptors, computed once per run.
struct ImageCache {
    const ImageRecord* image = nullptr;
    ProposalSet proposals;
    DescriptorMatrix descriptors;
};

inline std::vector<ImageCache> build_cache(const DatasetSplit& d, std::span<const int> ids, const RunConfig& cfg) {
    std::vector<ImageCache> out(ids.size());
    parallel_for(ids.size(), cfg.workers, [&](std::size_t k) {
        const auto& img = d.image(ids[k]);
        out[k].image = &img;
        out[k].proposals = generate_proposals(img, cfg.proposals, cfg.seed);
        out[k].descriptors = describe(img, out[k].proposals.proposals);
    });
    return out;
}

inline std::vector<DetectionOutput> score_all(const DetectorModel& m, const std::vector<ImageCache>& cache, int workers) {
    std::vector<DetectionOutput> out(cache.size());
    parallel_for(cache.size(), workers, [&](std::size_t k) {
        out[k] = score_descriptors(m, cache[k].image->image_id, cache[k].proposals.proposals, cache[k].descriptors);
    });
    return out;
}

/// Fused outputs of the given per-model output lists, one per image.
inline std::vector<DetectionOutput> fuse_all(const std::vector<const std::vector<DetectionOutput>*>& per_model) {
    const std::size_t n = per_model.front()->size();
    std::vector<DetectionOutput> out(n);
    std::vector<DetectionOutput> parts(per_model.size());
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < per_model.size(); ++j) parts[j] = (*per_model[j])[k];
        out[k] = fuse(parts);
    }
    return out;
}

inline ImageDetections final_detections(const DetectionOutput& out, const RunConfig& cfg) {
    std::vector<ScoredBox> boxes;
    for (std::size_t i = 0; i < out.boxes.size(); ++i)
        for (int c = 0; c < out.num_classes; ++c)
            if (out.score(i, c) >= cfg.test_min_score) boxes.push_back(ScoredBox{out.boxes[i], c, out.score(i, c)});
    return ImageDetections{out.image_id, nms_per_class(boxes, cfg.test_nms_iou)};
}

inline std::vector<ImageDetections> detections_of(const std::vector<DetectionOutput>& outs, const RunConfig& cfg) {
    std::vector<ImageDetections> dets(outs.size());
    parallel_for(outs.size(), cfg.workers, [&](std::size_t k) { dets[k] = final_detections(outs[k], cfg); });
    return dets;
}

/// Top-1 detection per class per image, which is all CorLoc looks at.
inline std::vector<ImageDetections> top_detections_of(const std::vector<DetectionOutput>& outs) {
    std::vector<ImageDetections> dets;
    for (const auto& o : outs) {
        ImageDetections d{o.image_id, {}};
        for (int c = 0; c < o.num_classes; ++c) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < o.boxes.size(); ++i)
                if (o.score(i, c) > o.score(best, c)) best = i;
            if (!o.boxes.empty()) d.boxes.push_back(ScoredBox{o.boxes[best], c, o.score(best, c)});
        }
        dets.push_back(std::move(d));
    }
    return dets;
}

struct ModelOutputs {
    std::vector<DetectionOutput> train;  // labeled + unlabeled, in `train_ids` order
    std::vector<DetectionOutput> test;
};

/// Scores cached images and keeps the result per model.
class Workspace {
public:
    Workspace(const DatasetSplit& d, const RunConfig& cfg) : data_(d), cfg_(cfg) {
        std::merge(d.labeled_ids.begin(), d.labeled_ids.end(), d.unlabeled_ids.begin(), d.unlabeled_ids.end(),
                   std::back_inserter(train_ids_));
        train_ = build_cache(d, train_ids_, cfg);
        test_ = build_cache(d, d.test_ids, cfg);
        for (std::size_t k = 0; k < train_ids_.size(); ++k)
            if (std::binary_search(d.unlabeled_ids.begin(), d.unlabeled_ids.end(), train_ids_[k]))
                unlabeled_pos_.push_back(k);
        train_gt_ = ground_truth_for(d, train_ids_);
        test_gt_ = ground_truth_for(d, d.test_ids);
        unlabeled_gt_ = ground_truth_for(d, d.unlabeled_ids);
    }

    const DatasetSplit& data() const { return data_; }
    const RunConfig& config() const { return cfg_; }
    int num_unlabeled() const { return static_cast<int>(unlabeled_pos_.size()); }
    const ImageCache& unlabeled(int i) const { return train_[unlabeled_pos_[i]]; }
    const std::vector<ImageGroundTruth>& unlabeled_gt() const { return unlabeled_gt_; }

    ModelOutputs score(const DetectorModel& m) const {
        return ModelOutputs{score_all(m, train_, cfg_.workers), score_all(m, test_, cfg_.workers)};
    }

    std::vector<DetectionOutput> unlabeled_outputs(const ModelOutputs& o) const {
        std::vector<DetectionOutput> out;
        for (auto k : unlabeled_pos_) out.push_back(o.train[k]);
        return out;
    }

    /// Training pool: every labeled image with its annotations, plus the
    /// given pseudo-labeled unlabeled images.
    std::vector<TrainItem> pool(std::span<const PseudoLabelSet> pseudo) const {
        std::vector<TrainItem> items;
        for (std::size_t k = 0; k < train_ids_.size(); ++k) {
            if (!std::binary_search(data_.labeled_ids.begin(), data_.labeled_ids.end(), train_ids_[k])) continue;
            items.push_back(TrainItem{train_[k].image, &train_[k].proposals, train_[k].image->objects});
        }
        for (const auto& p : pseudo) {
            const auto it = std::lower_bound(train_ids_.begin(), train_ids_.end(), p.image_id);
            const auto k = static_cast<std::size_t>(it - train_ids_.begin());
            items.push_back(TrainItem{train_[k].image, &train_[k].proposals, p.annotations()});
        }
        return items;
    }

    Evaluation evaluate(const std::vector<const ModelOutputs*>& outputs) const {
        std::vector<const std::vector<DetectionOutput>*> test, train;
        for (const auto* o : outputs) {
            test.push_back(&o->test);
            train.push_back(&o->train);
        }
        const int C = data_.num_classes;
        const auto test_dets = detections_of(fuse_all(test), cfg_);
        const auto train_top = top_detections_of(fuse_all(train));
        return Evaluation{average_precision(test_dets, test_gt_, C), corloc(train_top, train_gt_, C)};
    }

private:
    const DatasetSplit& data_;
    const RunConfig& cfg_;
    std::vector<int> train_ids_;
    std::vector<ImageCache> train_;
    std::vector<ImageCache> test_;
    std::vector<std::size_t> unlabeled_pos_;
    std::vector<ImageGroundTruth> train_gt_;
    std::vector<ImageGroundTruth> test_gt_;
    std::vector<ImageGroundTruth> unlabeled_gt_;
};

inline std::vector<DetectorModel> initial_models(const RunConfig& cfg, int num_classes) {
    std::vector<DetectorModel> models;
    for (int j = 0; j < cfg.num_models(); ++j) {
        auto spec = cfg.models[j];
        spec.seed = mix_seed(cfg.seed ^ mix_seed(spec.seed + static_cast<std::uint64_t>(j)));
        models.push_back(make_detector(j, spec, num_classes));
    }
    return models;
}

inline std::vector<PseudoLabelSet> union_pseudo(const std::vector<std::vector<PseudoLabelSet>>& per_model) {
    std::vector<PseudoLabelSet> out;
    for (const auto& sets : per_model)
        for (const auto& s : sets)
            if (std::none_of(out.begin(), out.end(), [&](const PseudoLabelSet& o) { return o.image_id == s.image_id; }))
                out.push_back(s);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    return out;
}

}  // namespace detail

/// Runs the loop for `cfg.models` jointly (mspld) or for model 0 alone
/// (spl_single). The dataset must already have its labeled set.
/// `resume` continues from a checkpoint; `checkpoint` is called after every
/// completed iteration.
inline RunResult run(const RunConfig& cfg_in, const DatasetSplit& data, const std::optional<RunState>& resume = std::nullopt,
                     const CheckpointFn& checkpoint = {}) {
    RunConfig cfg = cfg_in;
    if (cfg.mode == RunMode::spl_ensemble)
        throw InvalidArgument("spl_ensemble is run through run_ensemble_baseline");
    if (cfg.mode == RunMode::spl_single) cfg.models.resize(std::min<std::size_t>(cfg.models.size(), 1));
    cfg.validate();
    if (data.labeled_ids.empty()) throw InvalidArgument("dataset has no labeled images; sample initial labels first");

    const int C = data.num_classes;
    const int m = cfg.num_models();
    detail::Workspace ws(data, cfg);
    const int u = ws.num_unlabeled();

    RunState st;
    if (resume) {
        st = *resume;
    } else {
        st.models = detail::initial_models(cfg, C);
        const auto pool = ws.pool({});
        for (auto& model : st.models) model = train(model, pool);
        for (int j = 0; j < m; ++j) {
            st.selections.emplace_back(j, u, C);
            st.lambdas.emplace_back(C, 0.0);
        }
        st.losses = LossTensor(m, u, C);
        st.pace = initial_pace(C, cfg.initial_pace >= 0 ? cfg.initial_pace : cfg.initial_labels_per_class, m);
        st.class_thresholds = cfg.curriculum.class_thresholds;
        st.pseudo.assign(m, {});
    }

    std::vector<detail::ModelOutputs> outputs;
    for (const auto& model : st.models) outputs.push_back(ws.score(model));
    auto all_outputs = [&] {
        std::vector<const detail::ModelOutputs*> v;
        for (const auto& o : outputs) v.push_back(&o);
        return v;
    };
    if (!resume) st.initial = ws.evaluate(all_outputs());

    RunResult result;
    result.mode = cfg.mode;
    std::string stop_reason = cfg.max_iterations == 0 ? "max_iterations" : "";

    for (int iter = st.next_iteration; iter <= cfg.max_iterations; ++iter) {
        const auto previous = st.selections;
        IterationTrace trace;
        trace.iteration = iter;
        trace.targets = st.pace.targets;

        for (int j = 0; j < m; ++j) {
            // Fused detections over the unlabeled pool from the current models.
            std::vector<std::vector<DetectionOutput>> pool_out;
            for (const auto& o : outputs) pool_out.push_back(ws.unlabeled_outputs(o));
            std::vector<const std::vector<DetectionOutput>*> refs;
            for (const auto& p : pool_out) refs.push_back(&p);
            const auto fused = u > 0 ? detail::fuse_all(refs) : std::vector<DetectionOutput>{};

            CurriculumConfig cur = cfg.curriculum;
            if (st.class_thresholds.empty() && u > 0)
                st.class_thresholds = calibrate_class_thresholds(fused, cur, C);
            cur.class_thresholds = st.class_thresholds;

            std::vector<PseudoLabelResult> pseudo(u);
            parallel_for(static_cast<std::size_t>(u), cfg.workers,
                         [&](std::size_t i) { pseudo[i] = generate_pseudo_labels(fused[i], cur); });

            parallel_for(static_cast<std::size_t>(u), cfg.workers, [&](std::size_t i) {
                const auto* set = std::get_if<PseudoLabelSet>(&pseudo[i]);
                for (int c = 0; c < C; ++c)
                    st.losses.at(j, static_cast<int>(i), c) =
                        set ? image_class_loss(st.models[j], *ws.unlabeled(static_cast<int>(i)).image, *set, c)
                            : std::numeric_limits<double>::infinity();
            });

            std::vector<SelectionMatrix> others;
            for (int k = 0; k < m; ++k)
                if (k != j) others.push_back(st.selections[k]);
            auto update = update_v(j, st.losses, st.pace, others);

            auto lambdas = st.lambdas;
            lambdas[j] = update.lambda;
            // The previous V_j may select entries whose loss just became infinite;
            // such a state is not comparable, so "before" starts from the empty block.
            auto before_sel = st.selections;
            bool comparable = true;
            for (int i = 0; i < u && comparable; ++i)
                for (int c = 0; c < C; ++c)
                    if (before_sel[j].at(i, c) && !std::isfinite(st.losses.at(j, i, c))) comparable = false;
            if (!comparable) before_sel[j] = SelectionMatrix(j, u, C);
            const double before = objective(st.losses, before_sel, lambdas, st.pace.gamma);

            // Image-level prior: discarded images never stay selected.
            for (int i = 0; i < u; ++i)
                if (is_discarded(pseudo[i]))
                    for (int c = 0; c < C; ++c) update.selection.at(i, c) = 0;

            st.selections[j] = update.selection;
            st.lambdas = lambdas;
            const double after = objective(st.losses, st.selections, st.lambdas, st.pace.gamma);
            trace.objective_steps.push_back(ObjectiveStep{j, before, after});

            st.pseudo[j].clear();
            for (int i = 0; i < u; ++i)
                if (st.selections[j].row_sum(i) > 0) st.pseudo[j].push_back(std::get<PseudoLabelSet>(pseudo[i]));

            st.models[j] = train(st.models[j], ws.pool(st.pseudo[j]));
            outputs[j] = ws.score(st.models[j]);

            trace.discarded_images = static_cast<int>(std::count_if(pseudo.begin(), pseudo.end(), is_discarded));
        }

        for (int j = 0; j < m; ++j) {
            ModelTrace mt;
            mt.model_id = j;
            mt.selected_images = st.selections[j].selected();
            for (int c = 0; c < C; ++c) mt.selected_per_class.push_back(st.selections[j].column_sum(c));
            for (const auto& p : st.pseudo[j]) mt.pseudo_boxes += static_cast<int>(p.boxes.size());
            mt.quality = pseudo_quality(st.pseudo[j], ws.unlabeled_gt(), C).overall;
            const auto eval = ws.evaluate({&outputs[j]});
            mt.test_map = eval.ap.mean;
            mt.corloc = eval.corloc.mean;
            trace.models.push_back(std::move(mt));
        }
        const auto fused_eval = ws.evaluate(all_outputs());
        trace.test_map = fused_eval.ap.mean;
        trace.corloc = fused_eval.corloc.mean;
        trace.objective = trace.objective_steps.empty() ? 0.0 : trace.objective_steps.back().after;
        st.traces.push_back(trace);

        st.pace = advance_pace(st.pace);
        st.next_iteration = iter + 1;
        if (checkpoint) checkpoint(st);

        if (st.selections == previous) {
            stop_reason = "converged";
            break;
        }
        const bool exhausted = std::all_of(st.pace.targets.begin(), st.pace.targets.end(), [&](int r) { return r >= u; });
        if (exhausted) {
            stop_reason = "pool_exhausted";
            break;
        }
        if (iter == cfg.max_iterations) stop_reason = "max_iterations";
    }
    if (stop_reason.empty()) stop_reason = "max_iterations";

    result.traces = st.traces;
    result.models = st.models;
    result.initial = st.initial;
    result.final = ws.evaluate(all_outputs());
    for (const auto& o : outputs) result.final_model_map.push_back(ws.evaluate({&o}).ap.mean);
    result.final_pseudo = detail::union_pseudo(st.pseudo);
    result.final_quality = pseudo_quality(result.final_pseudo, ws.unlabeled_gt(), C);
    result.class_thresholds = st.class_thresholds;
    result.stop_reason = stop_reason;
    return result;
}

struct EnsembleResult {
    std::vector<RunResult> members;  // one spl_single run per model spec
    RunResult fused;                 // traces/metrics of the test-time fusion
};

/// Independent single-model runs (no coupling), fused only at test time.
inline EnsembleResult run_ensemble_baseline(const RunConfig& cfg_in, const DatasetSplit& data) {
    cfg_in.curriculum.validate();
    if (cfg_in.models.empty()) throw InvalidArgument("run config needs at least one model");
    EnsembleResult out;
    for (std::size_t j = 0; j < cfg_in.models.size(); ++j) {
        RunConfig single = cfg_in;
        single.mode = RunMode::spl_single;
        single.models = {cfg_in.models[j]};
        // Keep each member's detector seed identical to its mspld counterpart.
        single.models[0].seed = cfg_in.models[j].seed + j;
        out.members.push_back(run(single, data));
        out.members.back().models.front().model_id = static_cast<int>(j);
    }

    RunConfig joint = cfg_in;
    detail::Workspace ws(data, joint);
    std::vector<detail::ModelOutputs> outputs;
    for (const auto& r : out.members) outputs.push_back(ws.score(r.models.front()));
    std::vector<const detail::ModelOutputs*> refs;
    for (const auto& o : outputs) refs.push_back(&o);

    auto& fused = out.fused;
    fused.mode = RunMode::spl_ensemble;
    fused.final = ws.evaluate(refs);
    for (const auto& r : out.members) fused.final_model_map.push_back(r.final.ap.mean);
    for (const auto& r : out.members) fused.models.push_back(r.models.front());
    std::vector<std::vector<PseudoLabelSet>> per_member;
    for (const auto& r : out.members) per_member.push_back(r.final_pseudo);
    fused.final_pseudo = detail::union_pseudo(per_member);
    fused.final_quality = pseudo_quality(fused.final_pseudo, ground_truth_for(data, data.unlabeled_ids), data.num_classes);
    fused.stop_reason = "members_finished";

    std::size_t longest = 0;
    for (const auto& r : out.members) longest = std::max(longest, r.traces.size());
    for (std::size_t t = 0; t < longest; ++t) {
        IterationTrace trace;
        trace.iteration = static_cast<int>(t) + 1;
        for (std::size_t j = 0; j < out.members.size(); ++j) {
            const auto& tr = out.members[j].traces;
            if (tr.empty()) continue;
            auto mt = tr[std::min(t, tr.size() - 1)].models.front();
            mt.model_id = static_cast<int>(j);
            trace.models.push_back(mt);
            if (trace.targets.empty()) trace.targets = tr[std::min(t, tr.size() - 1)].targets;
        }
        trace.test_map = fused.final.ap.mean;  // members are only fused after training
        trace.corloc = fused.final.corloc.mean;
        fused.traces.push_back(trace);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization of traces and checkpoints

namespace detail {

inline json double_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double double_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>(); }

}  // namespace detail

inline json to_json(const QualityRates& q) {
    return json{{"img_precision", q.img_precision}, {"img_recall", q.img_recall},     {"ins_precision", q.ins_precision},
                {"ins_recall", q.ins_recall},       {"images_selected", q.images_selected}, {"boxes_generated", q.boxes_generated},
                {"precision_undefined", q.precision_undefined}};
}

inline QualityRates quality_from_json(const json& j) {
    QualityRates q;
    q.img_precision = j.at("img_precision").get<double>();
    q.img_recall = j.at("img_recall").get<double>();
    q.ins_precision = j.at("ins_precision").get<double>();
    q.ins_recall = j.at("ins_recall").get<double>();
    q.images_selected = j.at("images_selected").get<int>();
    q.boxes_generated = j.at("boxes_generated").get<int>();
    q.precision_undefined = j.at("precision_undefined").get<bool>();
    return q;
}

inline json to_json(const IterationTrace& t) {
    json models = json::array();
    for (const auto& m : t.models)
        models.push_back({{"model_id", m.model_id},
                          {"selected_images", m.selected_images},
                          {"selected_per_class", m.selected_per_class},
                          {"pseudo_boxes", m.pseudo_boxes},
                          {"quality", to_json(m.quality)},
                          {"test_map", m.test_map},
                          {"corloc", m.corloc}});
    json steps = json::array();
    for (const auto& s : t.objective_steps) steps.push_back({{"model_id", s.model_id}, {"before", s.before}, {"after", s.after}});
    return json{{"iteration", t.iteration}, {"targets", t.targets},   {"models", std::move(models)},
                {"discarded_images", t.discarded_images}, {"test_map", t.test_map}, {"corloc", t.corloc},
                {"objective", t.objective}, {"objective_steps", std::move(steps)}};
}

inline IterationTrace trace_from_json(const json& j) {
    IterationTrace t;
    t.iteration = j.at("iteration").get<int>();
    t.targets = j.at("targets").get<std::vector<int>>();
    for (const auto& m : j.at("models")) {
        ModelTrace mt;
        mt.model_id = m.at("model_id").get<int>();
        mt.selected_images = m.at("selected_images").get<int>();
        mt.selected_per_class = m.at("selected_per_class").get<std::vector<int>>();
        mt.pseudo_boxes = m.at("pseudo_boxes").get<int>();
        mt.quality = quality_from_json(m.at("quality"));
        mt.test_map = m.at("test_map").get<double>();
        mt.corloc = m.at("corloc").get<double>();
        t.models.push_back(mt);
    }
    t.discarded_images = j.at("discarded_images").get<int>();
    t.test_map = j.at("test_map").get<double>();
    t.corloc = j.at("corloc").get<double>();
    t.objective = j.at("objective").get<double>();
    for (const auto& s : j.at("objective_steps"))
        t.objective_steps.push_back(ObjectiveStep{s.at("model_id").get<int>(), s.at("before").get<double>(), s.at("after").get<double>()});
    return t;
}

inline json to_json(const ClassMetric& m) {
    json per = json::array();
    for (const auto& v : m.per_class) per.push_back(v ? json(*v) : json(nullptr));
    return json{{"per_class", std::move(per)}, {"mean", m.mean}};
}

inline ClassMetric class_metric_from_json(const json& j) {
    ClassMetric m;
    for (const auto& v : j.at("per_class")) m.per_class.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    m.mean = j.at("mean").get<double>();
    return m;
}

inline json to_json(const PseudoLabelSet& p) {
    json boxes = json::array();
    for (const auto& b : p.boxes) boxes.push_back({{"box", box_to_json(b.box)}, {"class_id", b.class_id}, {"score", b.score}});
    return json{{"image_id", p.image_id}, {"boxes", std::move(boxes)}};
}

inline PseudoLabelSet pseudo_from_json(const json& j) {
    PseudoLabelSet p;
    p.image_id = j.at("image_id").get<int>();
    for (const auto& b : j.at("boxes"))
        p.boxes.push_back(PseudoBox{box_from_json(b.at("box")), b.at("class_id").get<int>(), b.at("score").get<double>()});
    return p;
}

inline json to_json(const RunState& s) {
    json models = json::array();
    for (const auto& m : s.models) models.push_back(to_json(m));
    json selections = json::array();
    for (const auto& v : s.selections)
        selections.push_back({{"model_id", v.model_id}, {"num_images", v.num_images}, {"num_classes", v.num_classes}, {"v", v.v}});
    json losses = json::array();
    for (double v : s.losses.data) losses.push_back(detail::double_or_null(v));
    json pseudo = json::array();
    for (const auto& sets : s.pseudo) {
        json per = json::array();
        for (const auto& p : sets) per.push_back(to_json(p));
        pseudo.push_back(std::move(per));
    }
    json traces = json::array();
    for (const auto& t : s.traces) traces.push_back(to_json(t));
    return json{{"next_iteration", s.next_iteration},
                {"models", std::move(models)},
                {"selections", std::move(selections)},
                {"lambdas", s.lambdas},
                {"losses", {{"num_models", s.losses.num_models}, {"num_images", s.losses.num_images},
                            {"num_classes", s.losses.num_classes}, {"data", std::move(losses)}}},
                {"pace", {{"iteration", s.pace.iteration}, {"targets", s.pace.targets}, {"gamma", s.pace.gamma}}},
                {"class_thresholds", s.class_thresholds},
                {"pseudo", std::move(pseudo)},
                {"traces", std::move(traces)},
                {"initial", {{"ap", to_json(s.initial.ap)}, {"corloc", to_json(s.initial.corloc)}}}};
}

inline RunState run_state_from_json(const json& j) {
    try {
        RunState s;
        s.next_iteration = j.at("next_iteration").get<int>();
        for (const auto& m : j.at("models")) s.models.push_back(detector_from_json(m));
        for (const auto& v : j.at("selections")) {
            SelectionMatrix sm(v.at("model_id").get<int>(), v.at("num_images").get<int>(), v.at("num_classes").get<int>());
            sm.v = v.at("v").get<std::vector<std::uint8_t>>();
            s.selections.push_back(std::move(sm));
        }
        s.lambdas = j.at("lambdas").get<std::vector<std::vector<double>>>();
        const auto& l = j.at("losses");
        s.losses = LossTensor(l.at("num_models").get<int>(), l.at("num_images").get<int>(), l.at("num_classes").get<int>());
        const auto& data = l.at("data");
        if (data.size() != s.losses.data.size()) throw ParseError("checkpoint loss tensor has the wrong size");
        for (std::size_t k = 0; k < data.size(); ++k) s.losses.data[k] = detail::double_from(data[k]);
        const auto& p = j.at("pace");
        s.pace.iteration = p.at("iteration").get<int>();
        s.pace.targets = p.at("targets").get<std::vector<int>>();
        s.pace.gamma = p.at("gamma").get<GammaMatrix>();
        s.class_thresholds = j.at("class_thresholds").get<std::vector<double>>();
        for (const auto& per : j.at("pseudo")) {
            std::vector<PseudoLabelSet> sets;
            for (const auto& q : per) sets.push_back(pseudo_from_json(q));
            s.pseudo.push_back(std::move(sets));
        }
        for (const auto& t : j.at("traces")) s.traces.push_back(trace_from_json(t));
        s.initial.ap = class_metric_from_json(j.at("initial").at("ap"));
        s.initial.corloc = class_metric_from_json(j.at("initial").at("corloc"));
        return s;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace mspld
