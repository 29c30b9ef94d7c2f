#pragma once

/// @file cli.hpp
/// The commands behind the `mspld` executable. Each writes plain files into
/// an output location and returns what it wrote, so tests can drive them
/// without a subprocess.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspld/config.hpp"
#include "mspld/engine.hpp"
#include "mspld/eval.hpp"
#include "mspld/oracle.hpp"

namespace mspld::cli {

namespace fs = std::filesystem;

inline std::string fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

inline std::string fixed(double v, int digits = 4) {
    std::ostringstream ss;
    ss.imbue(std::locale::classic());
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

/// Dataset from a file, or generated from the config's scene.
inline DatasetSplit obtain_dataset(const ExperimentConfig& cfg, const std::optional<std::string>& data_path,
                                   std::uint64_t data_seed) {
    return data_path ? load_dataset(*data_path) : generate_synthetic_dataset(cfg.scene, data_seed);
}

/// A dataset without a labeled set gets k labels per class from `seed`.
inline DatasetSplit with_labels(const DatasetSplit& d, int k, std::uint64_t seed) {
    return d.labeled_ids.empty() ? sample_initial_labels(d, k, seed) : d;
}

inline DatasetSplit cmd_gen_data(const ExperimentConfig& cfg, const std::string& out_path, std::uint64_t seed) {
    auto d = generate_synthetic_dataset(cfg.scene, seed);
    if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
    save_dataset(d, out_path);
    return d;
}

// ---------------------------------------------------------------------------
// run

inline json detections_to_json(const std::vector<ImageDetections>& dets) {
    json out = json::array();
    for (const auto& d : dets) {
        json boxes = json::array();
        for (const auto& b : d.boxes) boxes.push_back({{"box", box_to_json(b.box)}, {"class_id", b.class_id}, {"score", b.score}});
        out.push_back({{"image_id", d.image_id}, {"boxes", std::move(boxes)}});
    }
    return json{{"detections", std::move(out)}};
}

inline std::vector<ImageDetections> detections_from_json(const json& j) {
    try {
        std::vector<ImageDetections> out;
        for (const auto& d : j.at("detections")) {
            ImageDetections det{d.at("image_id").get<int>(), {}};
            for (const auto& b : d.at("boxes"))
                det.boxes.push_back(ScoredBox{box_from_json(b.at("box")), b.at("class_id").get<int>(), b.at("score").get<double>()});
            out.push_back(std::move(det));
        }
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("detections: ") + e.what());
    }
}

/// Final test-split detections of the fused models, as the run evaluates them.
inline std::vector<ImageDetections> fused_test_detections(const RunConfig& cfg, const DatasetSplit& data,
                                                          const std::vector<DetectorModel>& models) {
    if (data.test_ids.empty()) return {};
    detail::Workspace ws(data, cfg);
    std::vector<detail::ModelOutputs> scored;
    for (const auto& m : models) scored.push_back(ws.score(m));
    std::vector<const std::vector<DetectionOutput>*> test;
    for (const auto& s : scored) test.push_back(&s.test);
    return detail::detections_of(detail::fuse_all(test), cfg);
}

inline json final_metrics_json(const RunResult& r) {
    json per_model = json::array();
    for (double v : r.final_model_map) per_model.push_back(v);
    return json{{"mode", to_string(r.mode)},
                {"stop_reason", r.stop_reason},
                {"iterations", r.traces.size()},
                {"initial", {{"map", r.initial.ap.mean}, {"corloc", r.initial.corloc.mean}}},
                {"final", {{"map", r.final.ap.mean}, {"corloc", r.final.corloc.mean}}},
                {"ap", to_json(r.final.ap)},
                {"corloc", to_json(r.final.corloc)},
                {"model_map", std::move(per_model)},
                {"pseudo_quality", to_json(r.final_quality.overall)},
                {"pseudo_images", r.final_pseudo.size()},
                {"class_thresholds", r.class_thresholds}};
}

struct RunOutput {
    RunResult result;
    fs::path dir;
};

/// Runs one experiment and writes the run directory:
///   config.json, dataset_hash.txt, trace.jsonl, metrics.csv, final_metrics.json,
///   detections.json (fused test detections) and checkpoints/iter_<k>.json.
inline RunOutput cmd_run(const ExperimentConfig& cfg, const DatasetSplit& dataset, const std::string& out_dir,
                         const std::optional<std::string>& resume_path = std::nullopt) {
    const fs::path dir(out_dir);
    fs::create_directories(dir / "checkpoints");
    const auto data = with_labels(dataset, cfg.run.initial_labels_per_class, cfg.run.seed);

    write_text_file((dir / "config.json").string(), to_json(cfg).dump(2) + "\n");
    write_text_file((dir / "dataset_hash.txt").string(), "fnv1a64 " + fnv1a64(to_json(data).dump()) + "\n");

    RunResult result;
    if (cfg.run.mode == RunMode::spl_ensemble) {
        result = run_ensemble_baseline(cfg.run, data).fused;
    } else {
        std::optional<RunState> resume;
        if (resume_path) resume = run_state_from_json(parse_json_text(read_text_file(*resume_path), *resume_path));
        result = run(cfg.run, data, resume, [&](const RunState& s) {
            const auto name = "iter_" + std::to_string(s.next_iteration - 1) + ".json";
            write_text_file((dir / "checkpoints" / name).string(), to_json(s).dump() + "\n");
        });
    }

    std::string trace;
    for (const auto& t : result.traces) trace += to_json(t).dump() + "\n";
    write_text_file((dir / "trace.jsonl").string(), trace);
    write_text_file((dir / "metrics.csv").string(), metrics_csv(result.final.ap, result.final.corloc, result.final_quality));
    write_text_file((dir / "final_metrics.json").string(), final_metrics_json(result).dump(2) + "\n");
    RunConfig eval_cfg = cfg.run;
    if (eval_cfg.mode == RunMode::spl_single) eval_cfg.models.resize(1);
    write_text_file((dir / "detections.json").string(),
                    detections_to_json(fused_test_detections(eval_cfg, data, result.models)).dump() + "\n");
    return RunOutput{std::move(result), dir};
}

// ---------------------------------------------------------------------------
// compare

struct CompareRow {
    std::string method;
    std::vector<double> map;  // one per seed
    std::vector<double> corloc;
};

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation; 0 for fewer than two values.
inline double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct CompareTable {
    std::vector<std::uint64_t> seeds;
    std::vector<CompareRow> rows;  // spl_single per model, then spl_ensemble, then mspld

    const CompareRow& row(const std::string& method) const {
        for (const auto& r : rows)
            if (r.method == method) return r;
        throw InvalidArgument("no row named " + method);
    }
    double best_single_map() const {
        double best = -1.0;
        for (const auto& r : rows)
            if (r.method.rfind("spl_single", 0) == 0) best = std::max(best, mean_of(r.map));
        return best;
    }

    std::string csv() const {
        std::ostringstream out;
        out << "method,map_mean,map_std,corloc_mean,corloc_std";
        for (auto s : seeds) out << ",map_seed_" << s;
        out << '\n';
        for (const auto& r : rows) {
            out << r.method << ',' << fixed(mean_of(r.map), 6) << ',' << fixed(std_of(r.map), 6) << ','
                << fixed(mean_of(r.corloc), 6) << ',' << fixed(std_of(r.corloc), 6);
            for (double v : r.map) out << ',' << fixed(v, 6);
            out << '\n';
        }
        return out.str();
    }

    std::string text() const {
        std::ostringstream out;
        out << std::left << std::setw(30) << "method" << std::setw(20) << "mAP (%)" << "CorLoc (%)\n";
        for (const auto& r : rows)
            out << std::setw(30) << r.method << std::setw(20)
                << (fixed(100 * mean_of(r.map), 1) + " +- " + fixed(100 * std_of(r.map), 1))
                << fixed(100 * mean_of(r.corloc), 1) << " +- " << fixed(100 * std_of(r.corloc), 1) << '\n';
        return out.str();
    }
};

/// Per seed s: dataset seed data_seed + s (unless a dataset file is given),
/// labels and run seed s. Ensemble members double as the single-model rows.
inline CompareTable cmd_compare(const ExperimentConfig& cfg, const std::optional<std::string>& data_path,
                                const std::string& out_dir) {
    if (cfg.run.models.size() < 2) throw InvalidArgument("compare needs at least two models");
    CompareTable table;
    table.seeds = cfg.seeds;
    const int m = cfg.run.num_models();
    for (int j = 0; j < m; ++j)
        table.rows.push_back({"spl_single[" + std::to_string(j) + ":" + to_string(cfg.run.models[j].family) + "]", {}, {}});
    table.rows.push_back({"spl_ensemble", {}, {}});
    table.rows.push_back({"mspld", {}, {}});

    std::optional<DatasetSplit> shared;
    if (data_path) shared = load_dataset(*data_path);
    for (auto seed : cfg.seeds) {
        const auto raw = shared ? *shared : generate_synthetic_dataset(cfg.scene, cfg.data_seed + seed);
        RunConfig rc = cfg.run;
        rc.seed = seed;
        const auto data = with_labels(raw, rc.initial_labels_per_class, seed);

        const auto ens = run_ensemble_baseline(rc, data);
        for (int j = 0; j < m; ++j) {
            table.rows[j].map.push_back(ens.members[j].final.ap.mean);
            table.rows[j].corloc.push_back(ens.members[j].final.corloc.mean);
        }
        table.rows[m].map.push_back(ens.fused.final.ap.mean);
        table.rows[m].corloc.push_back(ens.fused.final.corloc.mean);
        rc.mode = RunMode::mspld;
        const auto joint = run(rc, data);
        table.rows[m + 1].map.push_back(joint.final.ap.mean);
        table.rows[m + 1].corloc.push_back(joint.final.corloc.mean);
    }

    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "config.json").string(), to_json(cfg).dump(2) + "\n");
    write_text_file((fs::path(out_dir) / "compare.csv").string(), table.csv());
    write_text_file((fs::path(out_dir) / "compare.txt").string(), table.text());
    return table;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOutput {
    ClassMetric ap;
    ClassMetric corloc;
};

/// mAP and CorLoc of a detections file against the dataset's ground truth of
/// the images it covers. CorLoc uses each image's top detection per class.
inline EvalOutput cmd_eval(const std::string& dets_path, const DatasetSplit& data) {
    const auto dets = detections_from_json(parse_json_text(read_text_file(dets_path), dets_path));
    std::vector<int> ids;
    for (const auto& d : dets) ids.push_back(d.image_id);
    const auto gts = ground_truth_for(data, ids);
    return EvalOutput{average_precision(dets, gts, data.num_classes), corloc(dets, gts, data.num_classes)};
}

}  // namespace mspld::cli
