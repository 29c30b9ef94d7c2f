#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "test_support.hpp"

using namespace mspld;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "mspld_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Outcome invoke(const std::string& args) {
    const char* exe = std::getenv("MSPLD_CLI");
    if (exe == nullptr) throw std::runtime_error("MSPLD_CLI is not set");
    const auto dir = fs::temp_directory_path() / "mspld_cli_tests";
    fs::create_directories(dir);
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(exe) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return Outcome{WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text_file(out.string()), read_text_file(err.string())};
}

std::string config(const std::string& name) { return std::string(MSPLD_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(Cli, OracleCheckIsExact) {
    const auto r = invoke("oracle-check -n 200 --seed 1");
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "200/200 exact\n");
}

TEST(Cli, GenDataWritesALoadableDataset) {
    const auto dir = scratch("gen");
    const auto path = (dir / "data.json").string();
    const auto r = invoke("gen-data --config " + config("smoke.json") + " --out " + path + " --seed 3");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto d = load_dataset(path);
    EXPECT_EQ(d.images.size(), 72u);
    EXPECT_TRUE(d.labeled_ids.empty());
    const auto again = invoke("gen-data --config " + config("smoke.json") + " --out " + path + " --seed 3");
    EXPECT_EQ(again.out, r.out);
}

TEST(Cli, ZeroIterationsIsSupervisedOnly) {
    const auto dir = scratch("zero");
    const auto r = invoke("run --config " + config("smoke.json") + " --out " + dir.string() + " --max-iters 0");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_text_file((dir / "trace.jsonl").string()), "");
    const auto metrics = json::parse(read_text_file((dir / "final_metrics.json").string()));
    EXPECT_EQ(metrics["pseudo_images"], 0);
    EXPECT_EQ(metrics["initial"]["map"], metrics["final"]["map"]);
}

TEST(Cli, RunIsByteIdenticalAndEvalAgrees) {
    const auto a = scratch("run_a"), b = scratch("run_b");
    const std::string args = "run --config " + config("smoke.json") + " --seed 2 --out ";
    ASSERT_EQ(invoke(args + a.string()).code, 0);
    ASSERT_EQ(invoke(args + b.string() + " --workers 2").code, 0);
    for (const char* f : {"trace.jsonl", "metrics.csv", "dataset_hash.txt", "final_metrics.json"})
        EXPECT_EQ(read_text_file((a / f).string()), read_text_file((b / f).string())) << f;
    EXPECT_TRUE(fs::exists(a / "checkpoints" / "iter_1.json"));

    // The saved detections reproduce the run's final mAP.
    const auto data_dir = scratch("run_data");
    ASSERT_EQ(invoke("gen-data --config " + config("smoke.json") + " --out " + (data_dir / "d.json").string()).code, 0);
    const auto e = invoke("eval --dets " + (a / "detections.json").string() + " --data " + (data_dir / "d.json").string() +
                       " --out " + data_dir.string());
    ASSERT_EQ(e.code, 0) << e.err;
    const auto metrics = json::parse(read_text_file((a / "final_metrics.json").string()));
    const auto evaluated = json::parse(read_text_file((data_dir / "metrics.json").string()));
    EXPECT_DOUBLE_EQ(evaluated["ap"]["mean"].get<double>(), metrics["final"]["map"].get<double>());
}

TEST(Cli, ResumeReproducesTheTrace) {
    const auto full = scratch("resume_full"), part = scratch("resume_part");
    const std::string args = "run --config " + config("smoke.json") + " --out ";
    ASSERT_EQ(invoke(args + full.string()).code, 0);
    const auto ckpt = (full / "checkpoints" / "iter_1.json").string();
    const auto r = invoke(args + part.string() + " --resume " + ckpt);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_text_file((full / "trace.jsonl").string()), read_text_file((part / "trace.jsonl").string()));
}

TEST(Cli, CompareWritesATable) {
    const auto dir = scratch("compare");
    const auto r = invoke("compare --config " + config("smoke.json") + " --out " + dir.string() + " --max-iters 1");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = read_text_file((dir / "compare.csv").string());
    for (const char* row : {"spl_single[0:prototype]", "spl_single[2:histogram]", "spl_ensemble", "mspld"})
        EXPECT_NE(csv.find(row), std::string::npos) << row;
    EXPECT_NE(r.out.find("+-"), std::string::npos);
}

TEST(Cli, ErrorsAreJsonWithNonzeroStatus) {
    const auto dir = scratch("errors");
    write_text_file((dir / "bad.json").string(), "{\"scene\": {\"num_image\": 3}}");
    auto r = invoke("run --config " + (dir / "bad.json").string() + " --out " + dir.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"]["kind"], "parse_error");

    r = invoke("run --config " + (dir / "missing.json").string() + " --out " + dir.string());
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(json::parse(r.err)["error"]["kind"], "invalid_argument");

    r = invoke("frobnicate");
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"]["kind"], "usage");

    r = invoke("run --config " + config("smoke.json") + " --out " + dir.string() + " --mode joint");
    EXPECT_EQ(r.code, 2);
}
