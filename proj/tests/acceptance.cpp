// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// when every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmf/mmf.hpp"
#include "support/cli_runner.hpp"
#include "support/oracles.hpp"

using namespace mmf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct MetricCase {
  std::vector<LabelStructure> structures;
  PredictionBatch batch;
};

MetricCase random_metric_case(Rng& rng) {
  MetricCase c;
  const int classes = 1 + static_cast<int>(rng.below(10));
  const int m = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < m; ++k) c.structures.push_back(oracle::random_structure(rng, classes, "R" + std::to_string(k)));
  const int n = 1 + static_cast<int>(rng.below(50));
  for (int i = 0; i < n; ++i) {
    c.batch.truth.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
    c.batch.predicted.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
  }
  return c;
}

Outcome metric_identities() {
  Rng rng(101);
  double worst_f = 0.0, worst_tie = 0.0;
  for (int trial = 0; trial < 100000; ++trial) {
    const auto c = random_metric_case(rng);
    const auto r = evaluate(StructureSet(c.structures), c.batch);
    worst_f = std::max(worst_f, std::abs(r.f_ha - (1.0 - r.tie_a / 6.0)));
    worst_tie = std::max(worst_tie, std::abs(r.tie_a - 2.0 * r.lca_a));
  }
  const std::pair<double, double> pairs[] = {{0.9015, 84.97}, {0.7114, 88.14}, {0.4979, 91.70}, {0.4274, 92.88}};
  double worst_pair = 0.0;
  for (auto [tie, f] : pairs) worst_pair = std::max(worst_pair, std::abs(100.0 * (1.0 - tie / 6.0) - f));
  return {worst_f <= 1e-12 && worst_tie <= 1e-12 && worst_pair <= 0.005,
          "max|f-(1-tie/6)|=" + fmt("%.3g", worst_f) + " max|tie-2lca|=" + fmt("%.3g", worst_tie) +
              " max pair gap=" + fmt("%.4f", worst_pair)};
}

Outcome metric_oracle() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = random_metric_case(rng);
    const auto r = evaluate(StructureSet(c.structures), c.batch);
    const auto ref = oracle::brute_force_metrics(c.structures, c.batch.predicted, c.batch.truth);
    for (double d : {r.accuracy - ref.accuracy, r.p_ha - ref.p_ha, r.r_ha - ref.r_ha, r.f_ha - ref.f_ha,
                     r.tie_a - ref.tie_a, r.lca_a - ref.lca_a})
      worst = std::max(worst, std::abs(d));
    for (std::size_t m = 0; m < c.structures.size(); ++m) {
      worst = std::max(worst, std::abs(r.per_structure[m].p_h - ref.p[m]));
      worst = std::max(worst, std::abs(r.per_structure[m].r_h - ref.r[m]));
      worst = std::max(worst, std::abs(r.per_structure[m].tie - ref.tie[m]));
      worst = std::max(worst, std::abs(r.per_structure[m].lca - ref.lca[m]));
    }
  }
  return {worst <= 1e-12, "max deviation " + fmt("%.3g", worst) + " over 1000 cases"};
}

ClassStats stats_1d(std::vector<double> means, std::vector<double> variance) {
  ClassStats s;
  s.means.resize(static_cast<Eigen::Index>(means.size()), 1);
  for (std::size_t i = 0; i < means.size(); ++i) s.means(static_cast<Eigen::Index>(i), 0) = means[i];
  s.variance = std::move(variance);
  s.counts.assign(means.size(), 2);
  return s;
}

Outcome hand_values() {
  double worst = 0.0;
  auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  check(class_distance(stats_1d({3, 3}, {0, 0}), 0, 1), 0.0);
  check(class_distance(stats_1d({0, 2}, {0, 0}), 0, 1), 2.0);
  check(class_distance(stats_1d({0, 2}, {1, 1}), 0, 1), std::sqrt(6.0));
  // two samples per class: {-1, 1} and {1, 3}
  FeatureTable t;
  t.features.resize(4, 1);
  t.features << -1, 1, 1, 3;
  t.labels = {0, 0, 1, 1};
  t.subclass_names = {"A", "B"};
  check(class_distance(class_statistics(t), 0, 1), std::sqrt(6.0));
  check(affinity_matrix(stats_1d({0, 2}, {0, 0})).values(0, 1), std::exp(-2.0));
  const auto a = affinity_matrix(stats_1d({0, 2}, {1, 1}));
  check(a.values(0, 1), std::exp(-std::sqrt(6.0)));
  check(a.values(1, 0), std::exp(-std::sqrt(6.0)));
  check(a.values(0, 0), 0.0);
  check(affinity_matrix(stats_1d({0, 2}, {0, 0}), 2.0).values(0, 1), std::exp(-1.0));
  return {worst <= 1e-12, "max deviation " + fmt("%.3g", worst) + ", dis=" + fmt("%.6f", std::sqrt(6.0)) +
                             ", A=" + fmt("%.7f", a.values(0, 1))};
}

Outcome spectral_recovery() {
  int perfect = 0;
  std::string aris;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SyntheticSpec spec;  // 4 x 5, subclass separation / noise = 3
    spec.seed = seed;
    const auto [table, planted] = generate_synthetic(spec);
    const auto built = build_visual_structure(table, 4, VisualStructureOptions{});
    std::vector<int> a, b;
    for (int i = 0; i < planted.subclass_count(); ++i) {
      a.push_back(planted.superclass_of(i));
      b.push_back(built.superclass_of(i));
    }
    const double ari = oracle::adjusted_rand_index(a, b);
    perfect += ari == 1.0;
    aris += (aris.empty() ? "" : " ") + fmt("%.3f", ari);
  }
  return {perfect >= 9, std::to_string(perfect) + "/10 seeds with ARI 1 [" + aris + "]"};
}

Outcome eigensolver() {
  Rng rng(505);
  double worst_res = 0.0, worst_val = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(20));
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.uniform(-1.0, 1.0);
    const auto eig = jacobi_eigen(a);
    const auto ref = oracle::bisection_eigenvalues(a);
    for (int k = 0; k < n; ++k) {
      const Eigen::VectorXd v = eig.vectors.col(k);
      worst_res = std::max(worst_res, (a * v - eig.values(k) * v).norm());
      worst_val = std::max(worst_val, std::abs(eig.values(k) - ref[static_cast<std::size_t>(k)]));
    }
  }
  return {worst_res <= 1e-8 && worst_val <= 1e-8,
          "max residual " + fmt("%.3g", worst_res) + ", max eigenvalue gap " + fmt("%.3g", worst_val)};
}

Outcome gradient_matrix() {
  Rng rng(606);
  const int classes = 6;
  double worst = 0.0;
  int configs = 0;
  for (int m = 0; m <= 3; ++m)
    for (double lambda : {0.0, 0.1, 0.5})
      for (int attach : {0, 1}) {
        if (m == 0 && lambda != 0.0) continue;  // no heads to weight
        std::vector<LabelStructure> hs;
        for (int k = 0; k < m; ++k) hs.push_back(oracle::random_structure(rng, classes, "H" + std::to_string(k)));
        const StructureSet set(hs);
        MMFConfig cfg;
        cfg.stage_dims = {5, 4};
        cfg.lambda_total = lambda;
        cfg.mscb_attach_stage = {attach};
        cfg.seed = static_cast<std::uint64_t>(100 * m + attach + 1);
        const auto model = init_model(cfg, classes, set, 3);
        Eigen::MatrixXd x(8, 3);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
        std::vector<int> y;
        for (int i = 0; i < 8; ++i) y.push_back(static_cast<int>(rng.below(classes)));
        worst = std::max(worst, gradient_check(model, x, derive_labels(y, set), 1e-5));
        ++configs;
      }
  return {worst < 1e-6, "max relative error " + fmt("%.3g", worst) + " over " + std::to_string(configs) + " configs"};
}

Outcome qualitative_ordering() {
  SyntheticSpec spec;
  spec.superclass_count = 4;
  spec.subclasses_per_superclass = 5;
  spec.samples_per_subclass = 20;
  spec.dim = 64;
  spec.superclass_separation = 6.0;
  spec.subclass_separation = 2.0;
  spec.noise_scale = 1.5;
  spec.seed = 11;

  StructureSource planted;
  planted.kind = StructureSource::Kind::Planted;
  StructureSource visual;
  visual.kind = StructureSource::Kind::Visual;
  visual.k = 4;

  double acc[3] = {0, 0, 0}, tie[3] = {0, 0, 0};
  const int seeds = 5;
  for (int seed = 1; seed <= seeds; ++seed) {
    ExperimentConfig base;
    base.synthetic = spec;
    base.split_fraction = 0.8;
    base.split_seed = static_cast<std::uint64_t>(seed);
    base.model.stage_dims = {4, 32};
    base.model.mscb_attach_stage = {0};
    base.model.learning_rate = 0.05;
    base.model.epochs = 100;
    base.model.batch_size = 16;
    base.model.seed = static_cast<std::uint64_t>(seed);
    base.eval_structures = {planted, visual};
    const auto data = load_experiment_data(base);
    for (int v = 0; v < 3; ++v) {
      auto cfg = base;
      if (v == 1) cfg.structures = {planted};
      if (v == 2) cfg.structures = {planted, visual};
      cfg.model.lambda_total = v == 0 ? 0.0 : 0.35;
      const auto r = run_experiment(cfg, data);
      acc[v] += 100.0 * r.report.accuracy / seeds;
      tie[v] += r.report.tie_a / seeds;
    }
  }
  const bool fused_ok = acc[2] >= acc[1] - 0.5;
  const bool single_ok = acc[1] >= acc[0] + 0.5;
  const bool tie_ok = tie[2] < tie[0];
  return {fused_ok && single_ok && tie_ok,
          "acc w/o H " + fmt("%.2f", acc[0]) + ", single " + fmt("%.2f", acc[1]) + ", fused " + fmt("%.2f", acc[2]) +
              " | tie_a " + fmt("%.3f", tie[0]) + " -> " + fmt("%.3f", tie[2]) + " | fused>=single-0.5 " +
              (fused_ok ? "yes" : "no") + ", single>=base+0.5 " + (single_ok ? "yes" : "no") + ", tie decreases " +
              (tie_ok ? "yes" : "no")};
}

Outcome cli_determinism() {
  const auto root = cli::fresh_dir("acceptance_cli");
  cli::write(root / "synthetic.json", R"({"data": {"synthetic": {"superclass_count": 2, "subclasses_per_superclass": 3,
    "samples_per_subclass": 10, "dim": 6, "seed": 4}}})");
  const auto gen = root / "gen";
  const auto features = (gen / "features.csv").string();
  const auto planted = (gen / "planted_structure.json").string();
  const auto visual = (gen / "H_A_k2.json").string();
  Json train;
  train["data"]["features"] = features;
  train["split"] = {{"fraction", 0.8}, {"seed", 2}};
  train["structures"] = {planted, visual};
  train["model"] = {{"stage_dims", {8, 8}}, {"lambda_total", 0.2}, {"epochs", 5}};
  cli::write(root / "train.json", train.dump(2));

  struct Step {
    std::string name;
    std::vector<std::string> args;
    fs::path out;
  };
  const std::vector<Step> steps{
      {"gen-synthetic", {"gen-synthetic", "--config", (root / "synthetic.json").string(), "--out", gen.string()}, gen},
      {"build-structure",
       {"build-structure", "--features", features, "--subclasses", planted, "--k", "2", "--out", gen.string(),
        "--dump-affinity"},
       gen},
      {"train", {"train", "--config", (root / "train.json").string(), "--out", (root / "run").string()}, root / "run"},
      {"evaluate",
       {"evaluate", "--checkpoint", (root / "run" / "model.ckpt").string(), "--features",
        (root / "run" / "test_features.csv").string(), "--structure", planted, "--structure", visual, "--out",
        (root / "eval").string(), "--csv"},
       root / "eval"},
      {"sweep",
       {"sweep", "--config", (root / "train.json").string(), "--axis", "k", "--values", "2,3", "--seeds", "1,2", "--out",
        (root / "sweep").string()},
       root / "sweep"},
  };
  std::string detail;
  bool pass = true;
  for (const auto& s : steps) {
    const auto a = cli::run(s.args, root);
    const auto first = cli::snapshot(s.out);
    const auto b = cli::run(s.args, root);
    const auto second = cli::snapshot(s.out);
    const bool same = a.exit_code == 0 && b.exit_code == 0 && !first.empty() && first == second;
    pass = pass && same;
    detail += (detail.empty() ? "" : ", ") + s.name + (same ? " identical" : " DIFFERS");
    if (a.exit_code != 0) detail += " (" + a.err + ")";
  }
  return {pass, detail};
}

Outcome round_trips() {
  Rng rng(909);
  bool pass = true;
  for (int trial = 0; trial < 50; ++trial) {
    const auto h = oracle::random_structure(rng, 1 + static_cast<int>(rng.below(12)), "RT");
    pass = pass && validate_structure(parse_structure_json(structure_to_json(h))) == h;
  }
  SyntheticSpec spec;
  spec.samples_per_subclass = 5;
  const auto [table, planted] = generate_synthetic(spec);
  pass = pass && parse_feature_csv(feature_table_to_csv(table), table.subclass_names) == table;

  const auto root = cli::fresh_dir("acceptance_roundtrip");
  save_feature_table(table, (root / "f.csv").string());
  save_structure_file(planted, (root / "h.json").string());
  pass = pass && load_feature_table((root / "f.csv").string(), table.subclass_names) == table;
  pass = pass && load_structure_file((root / "h.json").string()) == planted;

  MMFConfig cfg;
  cfg.stage_dims = {7, 5, 3};
  cfg.mscb_attach_stage = {2};
  cfg.lambda_total = 0.25;
  cfg.epochs = 2;
  const auto model = train(cfg, table, StructureSet({planted})).first;
  save_checkpoint(model, (root / "m.ckpt").string());
  const auto back = load_checkpoint((root / "m.ckpt").string());
  pass = pass && back == model && checkpoint_bytes(back) == checkpoint_bytes(model);
  return {pass, "structure, feature and checkpoint files"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "Criterion ids to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "metric identities", 30, metric_identities},
      {2, "metric oracle equivalence", 10, metric_oracle},
      {3, "distance and affinity hand values", 0, hand_values},
      {4, "spectral pipeline recovery", 60, spectral_recovery},
      {5, "eigensolver correctness", 0, eigensolver},
      {6, "gradient check", 60, gradient_matrix},
      {7, "qualitative ordering", 300, qualitative_ordering},
      {8, "CLI determinism", 0, cli_determinism},
      {9, "round-trips", 0, round_trips},
  };

  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.detail += " | over time limit";
    }
    all = all && o.pass;
    std::printf("criterion %d [%s]: %s (%s; %.2fs)\n", c.id, c.title, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
