#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <set>

#include "mannprune/checkpoint.hpp"
#include "mannprune/commands.hpp"

using namespace mannprune;

namespace {

const char* kTinyConfig = R"({
  "seed": 3,
  "data": {"seconds_per_clip": 2.0, "gaits": ["walk"]},
  "network": {"h_size": 8, "n_experts": 2, "g_hidden": 4},
  "train": {"epochs": 2, "restart_period": 2},
  "eval": {"rollout_frames": 20}
})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("mannprune_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = write_config("tiny.json", json::parse(kTinyConfig));
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path write_config(const std::string& name, const json& j) {
    const auto p = root_ / name;
    write_json(p, j);
    return p;
  }

  // Runs the CLI binary; stderr goes to root_/stderr.txt.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + MANNPRUNE_CLI + " " + args + " > " + (root_ / "stdout.txt").string() + " 2> " +
                            (root_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_text() { return read_text(root_ / "stderr.txt"); }
  std::string cfg() { return "--config " + config_.string(); }
  fs::path dir(const std::string& name) { return root_ / name; }

  fs::path root_, config_;
};

std::vector<std::pair<std::string, std::string>> tree(const fs::path& d) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(d))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), d).string(), read_text(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_F(Cli, GenDataWritesManifestSchemaAndClips) {
  ASSERT_EQ(run("gen-data " + cfg() + " --out " + dir("d").string()), 0) << stderr_text();
  EXPECT_TRUE(fs::exists(dir("d") / "schema.json"));
  const auto manifest = read_json(dir("d") / "manifest.json");
  ASSERT_EQ(manifest["clips"].size(), 1u);
  EXPECT_EQ(manifest["clips"][0]["frames"].get<std::size_t>(), 120u);
  EXPECT_EQ(manifest["total_pairs"].get<std::size_t>(), 119u);
  EXPECT_TRUE(fs::exists(dir("d") / manifest["clips"][0]["file"].get<std::string>()));
  const auto ds = load_dataset(dir("d"));
  EXPECT_EQ(ds.pair_count(), 119u);
}

TEST_F(Cli, GenDataIsByteIdenticalForSameSeed) {
  ASSERT_EQ(run("gen-data " + cfg() + " --out " + dir("a").string()), 0);
  ASSERT_EQ(run("gen-data " + cfg() + " --out " + dir("b").string()), 0);
  ASSERT_EQ(run("gen-data " + cfg() + " --seed 4 --out " + dir("c").string()), 0);
  EXPECT_EQ(tree(dir("a")), tree(dir("b")));
  EXPECT_NE(tree(dir("a")), tree(dir("c")));
}

TEST_F(Cli, TrainZeroEpochsStoresInitialization) {
  auto j = json::parse(kTinyConfig);
  j["train"]["epochs"] = 0;
  const auto c = write_config("zero.json", j);
  ASSERT_EQ(run("train --config " + c.string() + " --out " + dir("t").string()), 0) << stderr_text();
  const auto ck = load_checkpoint((dir("t") / "checkpoint.bin").string());
  const auto rc = run_config_from_json(j);
  const auto data = dataset_for(rc, std::nullopt);
  Rng rng = Rng::derive(rc.seed, 0x494e4954ULL);
  auto expected = init_network<float>(rc.network_config(*data.schema), rng);
  attach_normalization(expected, data);
  EXPECT_EQ(ck.net, expected);
  ASSERT_TRUE(ck.train);
  EXPECT_EQ(ck.train->epochs_done, 0u);
  EXPECT_EQ(ck.seed, 3u);
}

TEST_F(Cli, TrainIsDeterministicAndResumable) {
  ASSERT_EQ(run("train " + cfg() + " --out " + dir("a").string()), 0) << stderr_text();
  ASSERT_EQ(run("train " + cfg() + " --out " + dir("b").string()), 0);
  const auto a = read_bytes((dir("a") / "checkpoint.bin").string());
  EXPECT_EQ(a, read_bytes((dir("b") / "checkpoint.bin").string()));
  EXPECT_EQ(read_text(dir("a") / "train_report.json"), read_text(dir("b") / "train_report.json"));

  auto half = json::parse(kTinyConfig);
  half["train"]["epochs"] = 1;
  const auto hc = write_config("half.json", half);
  ASSERT_EQ(run("train --config " + hc.string() + " --out " + dir("h").string()), 0);
  ASSERT_EQ(run("train " + cfg() + " --resume " + (dir("h") / "checkpoint.bin").string() + " --out " + dir("r").string()),
            0)
      << stderr_text();
  EXPECT_EQ(a, read_bytes((dir("r") / "checkpoint.bin").string()));
  // Resume refuses a mismatched seed.
  EXPECT_NE(run("train " + cfg() + " --seed 9 --resume " + (dir("h") / "checkpoint.bin").string() + " --out " +
                dir("bad").string()),
            0);
}

TEST_F(Cli, PrunedTrainingReachesTarget) {
  auto j = json::parse(kTinyConfig);
  j["prune"] = {{"target_sparsity", 0.9}, {"mask_update_interval", 1}};
  const auto c = write_config("prune.json", j);
  ASSERT_EQ(run("train --config " + c.string() + " --out " + dir("p").string()), 0) << stderr_text();
  const auto ck = load_checkpoint((dir("p") / "checkpoint.bin").string());
  ASSERT_TRUE(ck.prune);
  EXPECT_NEAR(ck.prune->sparsity, 0.9, 1.0 / static_cast<double>(ck.prune->total_prunable));
  const auto report = read_json(dir("p") / "prune_report.json");
  EXPECT_EQ(report["global_sparsity"].get<double>(), ck.prune->sparsity);
  EXPECT_EQ(report["target_sparsity"].get<double>(), 0.9);
}

TEST_F(Cli, SweepSingleValueGivesOneRow) {
  ASSERT_EQ(run("sweep " + cfg() + " --sparsity 0.5 --out " + dir("s").string()), 0) << stderr_text();
  const auto csv = read_text(dir("s") / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("0.5,", csv.find('\n') + 1), csv.find('\n') + 1);
  const auto sweep = read_json(dir("s") / "sweep.json");
  EXPECT_EQ(sweep["rows"][0]["status"], "ok");
}

TEST_F(Cli, InvalidConfigFailsWithoutOutput) {
  const auto bad = write_config("bad.json", json{{"network", {{"h_size", 0}}}});
  EXPECT_EQ(run("train --config " + bad.string() + " --out " + dir("x").string()), 1);
  EXPECT_FALSE(fs::exists(dir("x")));
  EXPECT_NE(stderr_text().find("h_size"), std::string::npos) << stderr_text();
  const auto unknown = write_config("unknown.json", json{{"netwrok", json::object()}});
  EXPECT_EQ(run("gen-data --config " + unknown.string() + " --out " + dir("y").string()), 1);
  EXPECT_FALSE(fs::exists(dir("y")));
  EXPECT_EQ(run("sweep " + cfg() + " --sparsity 1.2 --out " + dir("z").string()), 1);
  EXPECT_FALSE(fs::exists(dir("z")));
  EXPECT_NE(run("eval " + cfg()), 0);  // --checkpoint is required
  EXPECT_NE(run("fly"), 0);
}

TEST_F(Cli, AnalysisCommandsProduceArtifacts) {
  ASSERT_EQ(run("train " + cfg() + " --out " + dir("t").string()), 0) << stderr_text();
  auto pj = json::parse(kTinyConfig);
  pj["prune"] = {{"target_sparsity", 0.8}};
  const auto pc = write_config("prune.json", pj);
  ASSERT_EQ(run("train --config " + pc.string() + " --out " + dir("p").string()), 0);
  const std::string ck = " --checkpoint " + (dir("t") / "checkpoint.bin").string();

  ASSERT_EQ(run("eval " + cfg() + ck + " --threshold-cm 3 --out " + dir("e").string()), 0) << stderr_text();
  const auto sk = read_json(dir("e") / "skating.json");
  EXPECT_EQ(sk["threshold_cm"].get<double>(), 3.0);
  EXPECT_EQ(sk["gaits"].size(), 2u);
  EXPECT_TRUE(fs::exists(dir("e") / "cost.csv"));

  ASSERT_EQ(run("ablate " + cfg() + ck + " --out " + dir("a").string()), 0) << stderr_text();
  EXPECT_EQ(read_json(dir("a") / "ablation.json")["experts"].size(), 2u);

  ASSERT_EQ(run("trace " + cfg() + ck + " --against " + (dir("p") / "checkpoint.bin").string() + " --out " +
                dir("tr").string()),
            0)
      << stderr_text();
  const auto tj = read_json(dir("tr") / "trace.json");
  EXPECT_EQ(tj["comparisons"].size(), 2u);
  EXPECT_EQ(tj["comparisons"][0]["model_b"], "sparse");

  ASSERT_EQ(run("bench " + cfg() + ck + " --sparsity 0,0.9 --reps 100 --out " + dir("b").string()), 0) << stderr_text();
  EXPECT_EQ(read_json(dir("b") / "bench.json")["rows"].size(), 2u);

  ASSERT_EQ(run("export " + cfg() + " --checkpoint " + (dir("p") / "checkpoint.bin").string() + " --out " +
                dir("x").string()),
            0)
      << stderr_text();
  EXPECT_TRUE(fs::exists(dir("x") / "model.json"));
  EXPECT_TRUE(fs::exists(dir("x") / "tensors" / "expert1.W2.csv"));
  EXPECT_TRUE(fs::exists(dir("x") / "prune_report.json"));
}

TEST_F(Cli, LogLevelFromEnvironment) {
  ASSERT_EQ(run("gen-data " + cfg() + " --out " + dir("q").string(), "MANNPRUNE_LOG=info"), 0);
  EXPECT_NE(stderr_text().find("[info]"), std::string::npos);
  ASSERT_EQ(run("gen-data " + cfg() + " --out " + dir("q").string(), "MANNPRUNE_LOG=quiet"), 0);
  EXPECT_EQ(stderr_text(), "");
  const auto bad = write_config("bad.json", json{{"seed", "x"}});
  EXPECT_EQ(run("gen-data --config " + bad.string(), "MANNPRUNE_LOG=quiet"), 1);
  EXPECT_EQ(stderr_text(), "");
}

TEST_F(Cli, FullSuiteManifestCountsPairs) {
  auto j = json::parse(kTinyConfig);
  j["data"].erase("gaits");
  j["data"]["seconds_per_clip"] = 1.0;
  const auto c = write_config("suite.json", j);
  ASSERT_EQ(run("gen-data --config " + c.string() + " --out " + dir("d").string()), 0) << stderr_text();
  const auto manifest = read_json(dir("d") / "manifest.json");
  std::set<std::string> gaits;
  std::size_t total = 0;
  for (const auto& clip : manifest["clips"]) {
    gaits.insert(clip["gait"].get<std::string>());
    const auto frames = clip["frames"].get<std::size_t>();
    EXPECT_EQ(frames, 60u);
    EXPECT_EQ(clip["train_pairs"].get<std::size_t>() + clip["val_pairs"].get<std::size_t>(), frames - 1);
    total += frames - 1;
  }
  for (const char* g : {"walk", "trot", "gallop", "turn"}) EXPECT_EQ(gaits.count(g), 1u) << g;
  EXPECT_EQ(manifest["total_pairs"].get<std::size_t>(), total);
}

TEST_F(Cli, NinePointSweepRowsAndCost) {
  auto j = json::parse(kTinyConfig);
  j["train"]["epochs"] = 1;
  j["prune"] = {{"include_biases", true}};
  const auto c = write_config("sweep.json", j);
  ASSERT_EQ(run("sweep --config " + c.string() + " --sparsity 0.1..0.9 --out " + dir("s").string()), 0)
      << stderr_text();
  const auto csv = read_text(dir("s") / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  const auto rows = read_json(dir("s") / "sweep.json")["rows"];
  ASSERT_EQ(rows.size(), 9u);
  const auto rc = run_config_from_json(j);
  const auto schema = build_schema(rc.data.layout());
  const double dense_mb = cost_at_sparsity(rc.network_config(schema), 0.0, *rc.prune).size_megabits;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double s = static_cast<double>(i + 1) / 10.0;
    EXPECT_EQ(rows[i]["sparsity"].get<double>(), s);
    ASSERT_EQ(rows[i]["status"], "ok");
    EXPECT_NEAR(rows[i]["cost"]["size_Mb"].get<double>() / dense_mb, 1.0 - s, 0.03 * (1.0 - s)) << s;
  }
}

TEST_F(Cli, DeskDefaultTrainingLowersValidationLoss) {
  const auto c = write_config("desk.json", json::object());
  ASSERT_EQ(run("train --config " + c.string() + " --out " + dir("t").string()), 0) << stderr_text();
  const auto epochs = read_json(dir("t") / "train_report.json")["epochs"];
  ASSERT_GE(epochs.size(), 2u);
  EXPECT_LT(epochs.back()["val_loss"].get<double>(), epochs.front()["val_loss"].get<double>());
}
