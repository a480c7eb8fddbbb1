#include <gtest/gtest.h>

#include "mmf/mmf.hpp"
#include "support/cli_runner.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {

const char* kTinySynthetic = R"({
  "data": {"synthetic": {"superclass_count": 2, "subclasses_per_superclass": 2, "samples_per_subclass": 10,
                         "dim": 4, "superclass_separation": 10.0, "subclass_separation": 3.0,
                         "noise_scale": 0.5, "seed": 3}}
})";

struct Workspace {
  fs::path root;
  fs::path gen;

  explicit Workspace(const std::string& name) : root(cli::fresh_dir(name)), gen(root / "gen") {
    cli::write(root / "synthetic.json", kTinySynthetic);
    const auto r = cli::run({"gen-synthetic", "--config", (root / "synthetic.json").string(), "--out", gen.string()}, root);
    EXPECT_EQ(r.exit_code, 0) << r.err;
  }

  std::string features() const { return (gen / "features.csv").string(); }
  std::string planted() const { return (gen / "planted_structure.json").string(); }
};

std::string train_config(const std::string& features, const std::vector<std::string>& structures, double lambda,
                         int epochs, bool split) {
  mmf::Json j;
  j["data"]["features"] = features;
  if (split) j["split"] = {{"fraction", 0.8}, {"seed", 1}};
  j["structures"] = structures;
  j["model"] = {{"stage_dims", {16, 16}}, {"lambda_total", lambda}, {"epochs", epochs}, {"learning_rate", 0.1}};
  return j.dump(2);
}

}  // namespace

TEST(Cli, GenSyntheticRoundTripsAndIsSeeded) {
  Workspace ws("cli_gen");
  const auto h = mmf::load_structure_file(ws.planted());
  const auto table = mmf::load_feature_table(ws.features(), h.subclass_names());
  EXPECT_EQ(table.count(), 40);
  const auto first = cli::snapshot(ws.gen);
  const auto r = cli::run({"gen-synthetic", "--config", (ws.root / "synthetic.json").string(), "--out", ws.gen.string()},
                          ws.root);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(cli::snapshot(ws.gen), first);
  const auto other = ws.root / "other";
  cli::run({"gen-synthetic", "--config", (ws.root / "synthetic.json").string(), "--seed", "4", "--out", other.string()},
           ws.root);
  EXPECT_NE(cli::slurp(other / "features.csv"), first.at("features.csv"));
}

TEST(Cli, InvalidSpecWritesNothing) {
  const auto root = cli::fresh_dir("cli_invalid");
  cli::write(root / "synthetic.json", kTinySynthetic);
  const auto out = root / "never";
  const auto r = cli::run({"gen-synthetic", "--config", (root / "synthetic.json").string(),
                           "--data.synthetic.samples_per_subclass", "0", "--out", out.string()},
                          root);
  EXPECT_NE(r.exit_code, 0);
  EXPECT_FALSE(r.err.empty());
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, BuildStructureRecoversPlanted) {
  Workspace ws("cli_build");
  const auto out = ws.root / "built";
  const std::vector<std::string> args{"build-structure", "--features", ws.features(), "--subclasses", ws.planted(),
                                      "--k", "2", "--out", out.string(), "--dump-affinity"};
  ASSERT_EQ(cli::run(args, ws.root).exit_code, 0);
  const auto built = mmf::load_structure_file((out / "H_A_k2.json").string());
  const auto planted = mmf::load_structure_file(ws.planted());
  std::vector<int> a, b;
  for (int i = 0; i < planted.subclass_count(); ++i) {
    a.push_back(planted.superclass_of(i));
    b.push_back(built.superclass_of(i));
  }
  EXPECT_TRUE(oracle::same_partition(a, b));
  EXPECT_TRUE(fs::exists(out / "H_A_k2_affinity.csv"));

  const auto first = cli::snapshot(out);
  ASSERT_EQ(cli::run(args, ws.root).exit_code, 0);
  EXPECT_EQ(cli::snapshot(out), first);
}

TEST(Cli, KAboveSubclassCountNamesTheBound) {
  Workspace ws("cli_kbound");
  const auto r = cli::run({"build-structure", "--features", ws.features(), "--subclasses", ws.planted(), "--k", "5",
                           "--out", (ws.root / "built").string()},
                          ws.root);
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("[1, 4]"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrorsExitNonZero) {
  const auto root = cli::fresh_dir("cli_usage");
  EXPECT_NE(cli::run({}, root).exit_code, 0);
  EXPECT_NE(cli::run({"frobnicate"}, root).exit_code, 0);
  EXPECT_NE(cli::run({"train"}, root).exit_code, 0);
  EXPECT_NE(cli::run({"train", "--config", (root / "absent.json").string()}, root).exit_code, 0);
}

TEST(Cli, MissingStructureFileIsCleanError) {
  Workspace ws("cli_missing");
  cli::write(ws.root / "train.json", train_config(ws.features(), {ws.planted(), (ws.root / "nope.json").string()}, 0.2, 2, true));
  const auto r = cli::run({"train", "--config", (ws.root / "train.json").string(), "--out", (ws.root / "run").string()},
                          ws.root);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("nope.json"), std::string::npos) << r.err;
}

TEST(Cli, DivergedTrainingExitsNonZero) {
  Workspace ws("cli_diverge");
  cli::write(ws.root / "train.json", train_config(ws.features(), {ws.planted()}, 0.2, 5, true));
  const auto r = cli::run({"train", "--config", (ws.root / "train.json").string(), "--model.learning_rate", "1e308",
                           "--out", (ws.root / "run").string()},
                          ws.root);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("DivergedLoss"), std::string::npos) << r.err;
}

TEST(Cli, TrainTwoStructuresAndEvaluate) {
  Workspace ws("cli_train");
  ASSERT_EQ(cli::run({"build-structure", "--features", ws.features(), "--subclasses", ws.planted(), "--k", "2", "--out",
                      ws.gen.string()},
                     ws.root)
                .exit_code,
            0);
  const auto visual = (ws.gen / "H_A_k2.json").string();
  cli::write(ws.root / "train.json", train_config(ws.features(), {ws.planted(), visual}, 0.15, 4, true));
  const auto run_dir = ws.root / "run";
  const std::vector<std::string> args{"train", "--config", (ws.root / "train.json").string(), "--out", run_dir.string()};
  ASSERT_EQ(cli::run(args, ws.root).exit_code, 0);
  const auto history = cli::slurp(run_dir / "history.csv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "epoch,total,l_ccb,l_H_planted,l_H_A_k2,train_accuracy");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 5);

  const auto first = cli::snapshot(run_dir);
  ASSERT_EQ(cli::run(args, ws.root).exit_code, 0);
  EXPECT_EQ(cli::snapshot(run_dir), first);

  const auto eval_dir = ws.root / "eval";
  ASSERT_EQ(cli::run({"evaluate", "--checkpoint", (run_dir / "model.ckpt").string(), "--features",
                      (run_dir / "test_features.csv").string(), "--structure", ws.planted(), "--structure", visual,
                      "--out", eval_dir.string(), "--csv"},
                     ws.root)
                .exit_code,
            0);
  const auto report = mmf::Json::parse(cli::slurp(eval_dir / "report.json"));
  EXPECT_EQ(report["per_structure"].size(), 2u);
  EXPECT_NEAR(report["f_ha"].get<double>(), 1.0 - report["tie_a"].get<double>() / 6.0, 1e-12);
  EXPECT_TRUE(fs::exists(eval_dir / "report.csv"));
}

TEST(Cli, OverridesAndSeedFlag) {
  Workspace ws("cli_override");
  cli::write(ws.root / "train.json", train_config(ws.features(), {ws.planted()}, 0.2, 2, true));
  const auto a = ws.root / "a";
  const auto b = ws.root / "b";
  ASSERT_EQ(cli::run({"train", "--config", (ws.root / "train.json").string(), "--model.epochs", "3", "--out", a.string()},
                     ws.root)
                .exit_code,
            0);
  EXPECT_EQ(mmf::Json::parse(cli::slurp(a / "config.json"))["model"]["epochs"], 3);
  ASSERT_EQ(cli::run({"train", "--config", (ws.root / "train.json").string(), "--seed", "9", "--out", b.string()},
                     ws.root)
                .exit_code,
            0);
  EXPECT_EQ(mmf::load_checkpoint((b / "model.ckpt").string()).config.seed, 9u);
  EXPECT_NE(cli::run({"train", "--config", (ws.root / "train.json").string(), "--model.lambda_total", "1.5", "--out",
                      b.string()},
                     ws.root)
                .exit_code,
            0);
}

TEST(Cli, MemorizedTrainingSetScoresPerfectly) {
  const auto root = cli::fresh_dir("cli_memorize");
  cli::write(root / "synthetic.json", R"({"data": {"synthetic": {"superclass_count": 2, "subclasses_per_superclass": 2,
    "samples_per_subclass": 5, "dim": 4, "superclass_separation": 3.0, "subclass_separation": 1.5,
    "noise_scale": 0.2, "seed": 5}}})");
  const auto gen = root / "gen";
  ASSERT_EQ(cli::run({"gen-synthetic", "--config", (root / "synthetic.json").string(), "--out", gen.string()}, root).exit_code, 0);
  const auto planted = (gen / "planted_structure.json").string();
  cli::write(root / "train.json", train_config((gen / "features.csv").string(), {planted}, 0.2, 300, false));
  const auto run_dir = root / "run";
  ASSERT_EQ(cli::run({"train", "--config", (root / "train.json").string(), "--out", run_dir.string()}, root).exit_code, 0);
  const auto eval_dir = root / "eval";
  ASSERT_EQ(cli::run({"evaluate", "--checkpoint", (run_dir / "model.ckpt").string(), "--features",
                      (gen / "features.csv").string(), "--structure", planted, "--out", eval_dir.string()},
                     root)
                .exit_code,
            0);
  const auto report = mmf::Json::parse(cli::slurp(eval_dir / "report.json"));
  EXPECT_EQ(report["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(report["tie_a"].get<double>(), 0.0);
}

TEST(Cli, SweepCountsAndBest) {
  Workspace ws("cli_sweep");
  cli::write(ws.root / "base.json", train_config(ws.features(), {ws.planted()}, 0.2, 2, true));
  const auto out = ws.root / "sweep";
  const std::vector<std::string> args{"sweep", "--config", (ws.root / "base.json").string(), "--axis", "lambda",
                                      "--values", "0.1,0.2,0.4,0.8", "--seeds", "1,2,3", "--out", out.string()};
  ASSERT_EQ(cli::run(args, ws.root).exit_code, 0);
  const auto csv = cli::slurp(out / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 12 + 4);
  const auto best = mmf::Json::parse(cli::slurp(out / "best.json"));
  double top = -1.0, arg = 0.0;
  for (const auto& m : best["means"])
    if (m["mean_accuracy"].get<double>() > top) {
      top = m["mean_accuracy"].get<double>();
      arg = m["value"].get<double>();
    }
  EXPECT_EQ(best["best_value"].get<double>(), arg);

  const auto first = cli::snapshot(out);
  ASSERT_EQ(cli::run(args, ws.root).exit_code, 0);
  EXPECT_EQ(cli::snapshot(out), first);

  const auto stage_out = ws.root / "stage";
  ASSERT_EQ(cli::run({"sweep", "--config", (ws.root / "base.json").string(), "--axis", "attach_stage", "--values", "0,1",
                      "--seeds", "1", "--out", stage_out.string()},
                     ws.root)
                .exit_code,
            0);
  const auto stage_csv = cli::slurp(stage_out / "sweep.csv");
  EXPECT_EQ(stage_csv.substr(0, 6), "stage,");
  EXPECT_NE(stage_csv.find("\n0,1,"), std::string::npos);
  EXPECT_NE(stage_csv.find("\n1,1,"), std::string::npos);
}
