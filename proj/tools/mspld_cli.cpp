// mspld: dataset generation, runs, baseline comparison, oracle check, evaluation.
//
// Failures print one JSON object {"error": {"kind", "message"}} on stderr and
// exit with 2 (usage or parse), 3 (invalid argument), 4 (training) or 1.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mspld/cli.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << mspld::json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace mspld;

    CLI::App app{"Multi-model self-paced pseudo-labeling for few-example detection"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, mode, dets_path, resume_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> max_iters, workers;
    int instances = 200;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset from a config");
    gen->add_option("--config", config_path, "Experiment config (JSON)")->required();
    gen->add_option("--out", out_path, "Dataset file to write")->required();
    gen->add_option("--seed", seed, "Dataset seed (default: the config's data_seed)");

    auto* run_cmd = app.add_subcommand("run", "Run one experiment into a run directory");
    run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run_cmd->add_option("--data", data_path, "Dataset file (default: generate from the config)");
    run_cmd->add_option("--out", out_path, "Run directory")->required();
    run_cmd->add_option("--seed", seed, "Run seed: initial labels, proposals, detectors");
    run_cmd->add_option("--mode", mode, "spl_single | spl_ensemble | mspld")
        ->check(CLI::IsMember({"spl_single", "spl_ensemble", "mspld"}));
    run_cmd->add_option("--max-iters", max_iters, "Iteration cap");
    run_cmd->add_option("--workers", workers, "Worker threads (default: MSPLD_WORKERS or the config)");
    run_cmd->add_option("--resume", resume_path, "Continue from a checkpoint file");

    auto* cmp = app.add_subcommand("compare", "Single models, ensemble and mspld over the config's seeds");
    cmp->add_option("--config", config_path, "Experiment config (JSON)")->required();
    cmp->add_option("--data", data_path, "Dataset file shared by every seed");
    cmp->add_option("--out", out_path, "Output directory")->required();
    cmp->add_option("--max-iters", max_iters, "Iteration cap");
    cmp->add_option("--workers", workers, "Worker threads");

    auto* oracle = app.add_subcommand("oracle-check", "Compare the closed-form selection with exhaustive search");
    oracle->add_option("--instances,-n", instances, "Number of random instances")->check(CLI::NonNegativeNumber);
    oracle->add_option("--seed", seed, "Instance seed (default 1)");

    auto* ev = app.add_subcommand("eval", "mAP and CorLoc of a detections file");
    ev->add_option("--dets", dets_path, "Detections JSON")->required();
    ev->add_option("--data", data_path, "Dataset file")->required();
    ev->add_option("--out", out_path, "Directory for metrics.csv and metrics.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        auto load_config = [&] {
            auto cfg = load_experiment(config_path);
            if (max_iters) cfg.run.max_iterations = *max_iters;
            if (workers) {
                cfg.run.workers = *workers;
            } else if (std::getenv("MSPLD_WORKERS")) {
                cfg.run.workers = default_workers();
            }
            if (!mode.empty()) cfg.run.mode = run_mode_from_string(mode);
            return cfg;
        };
        auto data_arg = [&]() -> std::optional<std::string> {
            return data_path.empty() ? std::nullopt : std::optional<std::string>(data_path);
        };

        if (*gen) {
            const auto cfg = load_config();
            const auto d = cli::cmd_gen_data(cfg, out_path, seed.value_or(cfg.data_seed));
            std::cout << "wrote " << out_path << " (" << d.images.size() << " images, fnv1a64 "
                      << cli::fnv1a64(to_json(d).dump()) << ")\n";
        } else if (*run_cmd) {
            auto cfg = load_config();
            if (seed) cfg.run.seed = *seed;
            const auto data = cli::obtain_dataset(cfg, data_arg(), cfg.data_seed);
            std::optional<std::string> resume;
            if (!resume_path.empty()) resume = resume_path;
            const auto out = cli::cmd_run(cfg, data, out_path, resume);
            const auto& r = out.result;
            std::cout << to_string(r.mode) << ": " << r.traces.size() << " iterations (" << r.stop_reason << "), mAP "
                      << cli::fixed(100 * r.initial.ap.mean, 1) << " -> " << cli::fixed(100 * r.final.ap.mean, 1)
                      << ", CorLoc " << cli::fixed(100 * r.final.corloc.mean, 1) << "\n";
        } else if (*cmp) {
            const auto cfg = load_config();
            const auto table = cli::cmd_compare(cfg, data_arg(), out_path);
            std::cout << table.text();
        } else if (*oracle) {
            const auto report = oracle_check(instances, seed.value_or(1));
            std::cout << report.exact << "/" << report.instances << " exact\n";
            for (int t : report.mismatches) std::cout << "mismatch at instance " << t << "\n";
            if (!report.mismatches.empty()) return 1;
        } else if (*ev) {
            const auto data = load_dataset(data_path);
            const auto res = cli::cmd_eval(dets_path, data);
            const auto csv = metrics_csv(res.ap, res.corloc, std::nullopt);
            std::cout << csv;
            if (!out_path.empty()) {
                std::filesystem::create_directories(out_path);
                write_text_file((std::filesystem::path(out_path) / "metrics.csv").string(), csv);
                write_text_file((std::filesystem::path(out_path) / "metrics.json").string(),
                                json{{"ap", to_json(res.ap)}, {"corloc", to_json(res.corloc)}}.dump(2) + "\n");
            }
        }
    } catch (const ParseError& e) {
        return fail(e.kind(), e.what(), 2);
    } catch (const InvalidArgument& e) {
        return fail(e.kind(), e.what(), 3);
    } catch (const TrainingError& e) {
        return fail(e.kind(), e.what(), 4);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return 0;
}
