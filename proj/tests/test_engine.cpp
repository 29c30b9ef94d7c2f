#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"

using namespace mspld;

namespace {

RunConfig small_config(int iterations = 3) {
    RunConfig cfg;
    cfg.models = fixtures::three_views();
    cfg.max_iterations = iterations;
    return cfg;
}

std::string traces_text(const std::vector<IterationTrace>& traces) {
    std::string out;
    for (const auto& t : traces) out += to_json(t).dump() + "\n";
    return out;
}

}  // namespace

TEST(Engine, EmptyPoolStopsAfterOneIteration) {
    auto d = fixtures::small_dataset();
    d.labeled_ids.insert(d.labeled_ids.end(), d.unlabeled_ids.begin(), d.unlabeled_ids.end());
    std::sort(d.labeled_ids.begin(), d.labeled_ids.end());
    d.unlabeled_ids.clear();
    const auto r = run(small_config(), d);
    ASSERT_EQ(r.traces.size(), 1u);
    for (const auto& mt : r.traces[0].models) EXPECT_EQ(mt.selected_images, 0);
    EXPECT_TRUE(r.final_pseudo.empty());
    EXPECT_EQ(r.final.ap.mean, r.initial.ap.mean);
}

TEST(Engine, ZeroIterationsKeepsTheSupervisedModels) {
    const auto d = fixtures::small_dataset();
    const auto r = run(small_config(0), d);
    EXPECT_TRUE(r.traces.empty());
    EXPECT_EQ(r.stop_reason, "max_iterations");
    EXPECT_EQ(r.final.ap.mean, r.initial.ap.mean);
}

TEST(Engine, RunsAreDeterministic) {
    const auto d = fixtures::small_dataset();
    const auto a = run(small_config(), d);
    const auto b = run(small_config(), d);
    EXPECT_EQ(traces_text(a.traces), traces_text(b.traces));
    EXPECT_EQ(a.models, b.models);
    EXPECT_EQ(a.final_pseudo, b.final_pseudo);
}

TEST(Engine, WorkerCountDoesNotChangeResults) {
    const auto d = fixtures::small_dataset();
    auto cfg = small_config(2);
    const auto a = run(cfg, d);
    cfg.workers = 3;
    const auto b = run(cfg, d);
    EXPECT_EQ(traces_text(a.traces), traces_text(b.traces));
}

TEST(Engine, ResumeFromCheckpointMatchesUninterruptedRun) {
    const auto d = fixtures::small_dataset();
    std::vector<std::string> checkpoints;
    const auto full = run(small_config(4), d, std::nullopt,
                          [&](const RunState& s) { checkpoints.push_back(to_json(s).dump()); });
    ASSERT_GE(checkpoints.size(), 2u);
    const auto state = run_state_from_json(json::parse(checkpoints[1]));
    EXPECT_EQ(state.next_iteration, 3);
    const auto resumed = run(small_config(4), d, state);
    EXPECT_EQ(traces_text(resumed.traces), traces_text(full.traces));
    EXPECT_EQ(resumed.models, full.models);
    EXPECT_EQ(resumed.stop_reason, full.stop_reason);
}

TEST(Engine, TraceInvariants) {
    const auto d = fixtures::small_dataset(9, 60, 20);
    std::vector<RunState> states;
    const auto r = run(small_config(4), d, std::nullopt, [&](const RunState& s) { states.push_back(s); });
    ASSERT_FALSE(r.traces.empty());
    EXPECT_LE(r.traces.size(), 4u);
    int previous_iteration = 0;
    for (const auto& t : r.traces) {
        EXPECT_EQ(t.iteration, previous_iteration + 1);
        previous_iteration = t.iteration;
        ASSERT_EQ(t.models.size(), 3u);
        for (const auto& mt : t.models)
            for (int c = 0; c < d.num_classes; ++c) EXPECT_LE(mt.selected_per_class[c], t.targets[c]);
        ASSERT_EQ(t.objective_steps.size(), 3u);
        for (const auto& s : t.objective_steps) EXPECT_LE(s.after, s.before);
    }
    // Selections only ever point at finite losses, i.e. images that passed the curriculum.
    for (const auto& s : states)
        for (int j = 0; j < 3; ++j) {
            const auto& V = s.selections[j];
            for (int i = 0; i < V.num_images; ++i)
                for (int c = 0; c < V.num_classes; ++c) {
                    if (V.at(i, c)) {
                        EXPECT_TRUE(std::isfinite(s.losses.at(j, i, c)));
                    }
                }
            std::set<int> ids;
            for (const auto& p : s.pseudo[j]) {
                EXPECT_FALSE(p.boxes.empty());
                ids.insert(p.image_id);
            }
            EXPECT_EQ(static_cast<int>(ids.size()), V.selected());
        }
}

TEST(Engine, SingleModeUsesTheFirstModel) {
    const auto d = fixtures::small_dataset();
    auto cfg = small_config(2);
    cfg.mode = RunMode::spl_single;
    const auto r = run(cfg, d);
    ASSERT_EQ(r.models.size(), 1u);
    EXPECT_EQ(r.models[0].spec.family, Family::prototype);
    for (const auto& t : r.traces) EXPECT_TRUE(t.objective_steps.size() == 1u);
}

TEST(Engine, EnsembleMembersAreIndependentSingleRuns) {
    const auto d = fixtures::small_dataset();
    auto cfg = small_config(2);
    const auto e = run_ensemble_baseline(cfg, d);
    ASSERT_EQ(e.members.size(), 3u);
    cfg.mode = RunMode::spl_single;
    const auto first = run(cfg, d);
    EXPECT_EQ(e.members[0].final.ap.mean, first.final.ap.mean);
    EXPECT_EQ(e.fused.final_model_map.size(), 3u);
    EXPECT_EQ(e.fused.mode, RunMode::spl_ensemble);
}

TEST(Engine, ConfigErrors) {
    const auto d = fixtures::small_dataset();
    auto cfg = small_config();
    cfg.models.resize(1);
    EXPECT_THROW(run(cfg, d), InvalidArgument);
    cfg = small_config();
    cfg.mode = RunMode::spl_ensemble;
    EXPECT_THROW(run(cfg, d), InvalidArgument);
    auto unlabeled = d;
    unlabeled.unlabeled_ids.insert(unlabeled.unlabeled_ids.end(), unlabeled.labeled_ids.begin(), unlabeled.labeled_ids.end());
    std::sort(unlabeled.unlabeled_ids.begin(), unlabeled.unlabeled_ids.end());
    unlabeled.labeled_ids.clear();
    EXPECT_THROW(run(small_config(), unlabeled), InvalidArgument);
}

TEST(Engine, MissingClassInLabeledSetIsATrainingError) {
    auto d = fixtures::small_dataset();
    std::vector<int> keep, moved;
    for (int id : d.labeled_ids) (d.image(id).contains_class(2) ? moved : keep).push_back(id);
    d.labeled_ids = keep;
    d.unlabeled_ids.insert(d.unlabeled_ids.end(), moved.begin(), moved.end());
    std::sort(d.unlabeled_ids.begin(), d.unlabeled_ids.end());
    EXPECT_THROW(run(small_config(), d), TrainingError);
}

TEST(Engine, RunModeNames) {
    for (auto m : {RunMode::spl_single, RunMode::spl_ensemble, RunMode::mspld})
        EXPECT_EQ(run_mode_from_string(to_string(m)), m);
    EXPECT_THROW(run_mode_from_string("joint"), InvalidArgument);
}
