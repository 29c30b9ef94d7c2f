#pragma once

/// @file config.hpp
/// One JSON file drives data generation, runs and comparisons:
///
///   {
///     "scene":      { SceneSpec fields },
///     "data_seed":  7,
///     "proposals":  { ProposalConfig fields },
///     "curriculum": { CurriculumConfig fields },
///     "models":     [ { "family": "prototype", "view": [0, 1, 2], ... }, ... ],
///     "run":        { "k": 3, "initial_pace": -1, "max_iterations": 6, "seed": 1,
///                     "mode": "mspld", "test_nms_iou": 0.3, "test_min_score": 0.01 },
///     "seeds":      [1, 2, 3]
///   }
///
/// Every section and field is optional; unknown keys are rejected so typos
/// do not silently fall back to defaults.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspld/curriculum.hpp"
#include "mspld/data_model.hpp"
#include "mspld/detector.hpp"
#include "mspld/engine.hpp"
#include "mspld/error.hpp"

namespace mspld {

struct ExperimentConfig {
    SceneSpec scene;
    std::uint64_t data_seed = 7;
    RunConfig run;
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw ParseError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline SceneSpec scene_from_json(const json& j) {
    detail::check_keys(j,
                       {"num_images", "num_test_images", "num_classes", "image_height", "image_width", "cell_size",
                        "feature_dim", "max_objects", "object_min_size", "object_max_size", "max_overlap",
                        "signature_scale", "feature_noise", "instance_noise", "max_clutter", "distractor_fraction",
                        "signature_seed", "class_signatures"},
                       "scene");
    SceneSpec s;
    detail::read(j, "num_images", s.num_images);
    detail::read(j, "num_test_images", s.num_test_images);
    detail::read(j, "num_classes", s.num_classes);
    detail::read(j, "image_height", s.image_height);
    detail::read(j, "image_width", s.image_width);
    detail::read(j, "cell_size", s.cell_size);
    detail::read(j, "feature_dim", s.feature_dim);
    detail::read(j, "max_objects", s.max_objects);
    detail::read(j, "object_min_size", s.object_min_size);
    detail::read(j, "object_max_size", s.object_max_size);
    detail::read(j, "max_overlap", s.max_overlap);
    detail::read(j, "signature_scale", s.signature_scale);
    detail::read(j, "feature_noise", s.feature_noise);
    detail::read(j, "instance_noise", s.instance_noise);
    detail::read(j, "max_clutter", s.max_clutter);
    detail::read(j, "distractor_fraction", s.distractor_fraction);
    detail::read(j, "signature_seed", s.signature_seed);
    detail::read(j, "class_signatures", s.class_signatures);
    return s;
}

inline json to_json(const SceneSpec& s) {
    json j{{"num_images", s.num_images},           {"num_test_images", s.num_test_images},
           {"num_classes", s.num_classes},         {"image_height", s.image_height},
           {"image_width", s.image_width},         {"cell_size", s.cell_size},
           {"feature_dim", s.feature_dim},         {"max_objects", s.max_objects},
           {"object_min_size", s.object_min_size}, {"object_max_size", s.object_max_size},
           {"max_overlap", s.max_overlap},         {"signature_scale", s.signature_scale},
           {"feature_noise", s.feature_noise},     {"instance_noise", s.instance_noise},
           {"max_clutter", s.max_clutter},         {"distractor_fraction", s.distractor_fraction},
           {"signature_seed", s.signature_seed}};
    if (!s.class_signatures.empty()) j["class_signatures"] = s.class_signatures;
    return j;
}

inline ProposalConfig proposals_from_json(const json& j) {
    detail::check_keys(j, {"proposals_per_image", "jitter", "random_fraction", "min_size", "max_size"}, "proposals");
    ProposalConfig p;
    detail::read(j, "proposals_per_image", p.proposals_per_image);
    detail::read(j, "jitter", p.jitter);
    detail::read(j, "random_fraction", p.random_fraction);
    detail::read(j, "min_size", p.min_size);
    detail::read(j, "max_size", p.max_size);
    return p;
}

inline json to_json(const ProposalConfig& p) {
    return json{{"proposals_per_image", p.proposals_per_image}, {"jitter", p.jitter}, {"random_fraction", p.random_fraction},
                {"min_size", p.min_size}, {"max_size", p.max_size}};
}

inline CurriculumConfig curriculum_from_json(const json& j) {
    detail::check_keys(j,
                       {"confidence_floor", "class_thresholds", "threshold_quantile", "nms_iou", "nested_nms_iou",
                        "max_boxes_per_class", "max_classes"},
                       "curriculum");
    CurriculumConfig c;
    detail::read(j, "confidence_floor", c.confidence_floor);
    detail::read(j, "class_thresholds", c.class_thresholds);
    detail::read(j, "threshold_quantile", c.threshold_quantile);
    detail::read(j, "nms_iou", c.nms_iou);
    detail::read(j, "nested_nms_iou", c.nested_nms_iou);
    detail::read(j, "max_boxes_per_class", c.max_boxes_per_class);
    detail::read(j, "max_classes", c.max_classes);
    return c;
}

inline json to_json(const CurriculumConfig& c) {
    return json{{"confidence_floor", c.confidence_floor},   {"class_thresholds", c.class_thresholds},
                {"threshold_quantile", c.threshold_quantile}, {"nms_iou", c.nms_iou},
                {"nested_nms_iou", c.nested_nms_iou},       {"max_boxes_per_class", c.max_boxes_per_class},
                {"max_classes", c.max_classes}};
}

inline ExperimentConfig experiment_from_json(const json& j) {
    try {
        detail::check_keys(j, {"scene", "data_seed", "proposals", "curriculum", "models", "run", "seeds"}, "config");
        ExperimentConfig e;
        if (j.contains("scene")) e.scene = scene_from_json(j.at("scene"));
        detail::read(j, "data_seed", e.data_seed);
        if (j.contains("proposals")) e.run.proposals = proposals_from_json(j.at("proposals"));
        if (j.contains("curriculum")) e.run.curriculum = curriculum_from_json(j.at("curriculum"));
        if (j.contains("models")) {
            for (const auto& m : j.at("models")) {
                detail::check_keys(m,
                                   {"family", "view", "negative_iou", "positive_iou", "negatives_per_image",
                                    "background_prototypes", "linear_epochs", "linear_rate", "linear_l2",
                                    "histogram_bins", "seed"},
                                   "models[]");
                e.run.models.push_back(detector_spec_from_json(m));
            }
        } else {
            e.run.models = {DetectorSpec{}};
        }
        if (j.contains("run")) {
            const auto& r = j.at("run");
            detail::check_keys(r, {"k", "initial_pace", "max_iterations", "seed", "mode", "test_nms_iou", "test_min_score", "workers"},
                               "run");
            detail::read(r, "k", e.run.initial_labels_per_class);
            detail::read(r, "initial_pace", e.run.initial_pace);
            detail::read(r, "max_iterations", e.run.max_iterations);
            detail::read(r, "seed", e.run.seed);
            if (r.contains("mode")) e.run.mode = run_mode_from_string(r.at("mode").get<std::string>());
            detail::read(r, "test_nms_iou", e.run.test_nms_iou);
            detail::read(r, "test_min_score", e.run.test_min_score);
            detail::read(r, "workers", e.run.workers);
        }
        detail::read(j, "seeds", e.seeds);
        e.run.curriculum.validate();
        return e;
    } catch (const json::exception& ex) {
        throw ParseError(std::string("config: ") + ex.what());
    } catch (const InvalidArgument& ex) {
        throw ParseError(std::string("config: ") + ex.what());
    }
}

inline json to_json(const ExperimentConfig& e) {
    json models = json::array();
    for (const auto& m : e.run.models) models.push_back(to_json(m));
    return json{{"scene", to_json(e.scene)},
                {"data_seed", e.data_seed},
                {"proposals", to_json(e.run.proposals)},
                {"curriculum", to_json(e.run.curriculum)},
                {"models", std::move(models)},
                {"run",
                 {{"k", e.run.initial_labels_per_class},
                  {"initial_pace", e.run.initial_pace},
                  {"max_iterations", e.run.max_iterations},
                  {"seed", e.run.seed},
                  {"mode", to_string(e.run.mode)},
                  {"test_nms_iou", e.run.test_nms_iou},
                  {"test_min_score", e.run.test_min_score},
                  {"workers", e.run.workers}}},
                {"seeds", e.seeds}};
}

inline ExperimentConfig load_experiment(const std::string& path) {
    return experiment_from_json(parse_json_text(read_text_file(path), path));
}

}  // namespace mspld
