// mmf: command-line harness for label-structure construction, multi-structure
// training, hierarchical evaluation and ablation sweeps.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mmf/mmf.hpp"

namespace fs = std::filesystem;

namespace {

using mmf::Error;
using mmf::ErrorKind;
using mmf::Json;

/// Pulls "--dotted.key value" and "--dotted.key=value" pairs out of argv
/// so they can be applied to the JSON config; everything else goes to CLI11.
std::vector<std::pair<std::string, std::string>> extract_overrides(std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) == 0) {
      const auto eq = a.find('=');
      const auto key = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
      if (key.find('.') != std::string::npos) {
        if (eq != std::string::npos) {
          overrides.emplace_back(key, a.substr(eq + 1));
        } else {
          if (i + 1 >= args.size()) throw Error(ErrorKind::InvalidConfig, "override --" + key + " needs a value");
          overrides.emplace_back(key, args[++i]);
        }
        continue;
      }
    }
    rest.push_back(a);
  }
  args = std::move(rest);
  return overrides;
}

Json load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  Json doc = path.empty() ? Json::object() : mmf::load_json_file(path);
  for (const auto& [k, v] : overrides) mmf::apply_override(doc, k, v);
  return doc;
}

std::string require_out_dir(const std::string& out) {
  if (out.empty()) throw Error(ErrorKind::InvalidConfig, "an output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + out + "': " + ec.message());
  return out;
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

template <typename T>
std::vector<T> parse_list(const std::string& csv) {
  std::vector<T> out;
  for (auto cell : mmf::text::split(csv, ',')) {
    cell = mmf::text::trim(cell);
    if (cell.empty()) continue;
    double v = 0.0;
    if (!mmf::text::parse_real(cell, v))
      throw Error(ErrorKind::InvalidArgument, "cannot parse list entry '" + std::string(cell) + "'");
    out.push_back(static_cast<T>(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_synthetic(const std::string& config_path, const std::vector<std::pair<std::string, std::string>>& ov,
                      std::optional<std::uint64_t> seed, std::string out) {
  const Json doc = load_config(config_path, ov);
  mmf::SyntheticSpec spec;
  if (doc.contains("data") && doc["data"].contains("synthetic")) spec = mmf::synthetic_from_json(doc["data"]["synthetic"]);
  if (seed) spec.seed = *seed;
  if (out.empty()) out = doc.value("out", std::string());
  mmf::validate(spec);  // nothing is written for an invalid spec
  auto [table, planted] = mmf::generate_synthetic(spec);
  out = require_out_dir(out);
  mmf::save_feature_table(table, join(out, "features.csv"));
  mmf::save_structure_file(planted, join(out, "planted_structure.json"));
  return 0;
}

int cmd_build_structure(const std::string& features, const std::string& subclasses, int k, double delta,
                        std::uint64_t seed, const std::string& out, bool dump_affinity) {
  const auto names = mmf::load_structure_file(subclasses).subclass_names();
  const auto table = mmf::load_feature_table(features, names);
  mmf::VisualStructureOptions opt;
  opt.delta = delta;
  opt.seed = seed;
  mmf::AffinityMatrix affinity;
  const auto h = mmf::build_visual_structure(table, k, opt, &affinity);
  const auto dir = require_out_dir(out);
  mmf::save_structure_file(h, join(dir, h.name() + ".json"));
  if (dump_affinity) mmf::text::write_file(join(dir, h.name() + "_affinity.csv"), mmf::affinity_to_csv(affinity, names));
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::pair<std::string, std::string>>& ov,
              std::optional<std::uint64_t> seed, std::string out) {
  auto cfg = mmf::experiment_from_json(load_config(config_path, ov));
  if (seed) cfg.model.seed = *seed;
  if (!out.empty()) cfg.out = out;
  const auto dir = require_out_dir(cfg.out);

  const auto data = mmf::load_experiment_data(cfg);
  const auto result = mmf::run_experiment(cfg, data);

  mmf::text::write_file(join(dir, "config.json"), mmf::experiment_to_json(cfg).dump(2) + "\n");
  mmf::save_checkpoint(result.model, join(dir, "model.ckpt"));
  mmf::text::write_file(join(dir, "history.csv"), mmf::history_to_csv(result.history));
  for (std::size_t m = 0; m < result.train_structures.size(); ++m)
    mmf::save_structure_file(result.train_structures[m], join(dir, "structure_" + std::to_string(m) + "_" +
                                                                       result.train_structures[m].name() + ".json"));
  mmf::save_feature_table(data.test, join(dir, "test_features.csv"));
  if (!result.eval_structures.empty())
    mmf::text::write_file(join(dir, "test_report.json"), mmf::report_to_json(result.report));
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& features, const std::string& predictions,
                 const std::vector<std::string>& structure_paths, const std::string& out, bool csv) {
  if (structure_paths.empty()) throw Error(ErrorKind::InvalidArgument, "at least one --structure is required");
  std::vector<mmf::LabelStructure> structures;
  for (const auto& p : structure_paths) structures.push_back(mmf::load_structure_file(p));
  const mmf::StructureSet set(std::move(structures));
  const auto& names = set[0].subclass_names();

  mmf::PredictionBatch batch;
  if (!predictions.empty()) {
    batch = mmf::parse_predictions_csv(mmf::text::read_file(predictions), names);
  } else {
    if (checkpoint.empty() || features.empty())
      throw Error(ErrorKind::InvalidArgument, "need --checkpoint and --features, or --predictions");
    const auto model = mmf::load_checkpoint(checkpoint);
    if (model.subclass_names != names)
      throw Error(ErrorKind::SubclassSpaceMismatch, "checkpoint subclasses differ from the structure files'");
    const auto table = mmf::load_feature_table(features, names);
    batch.predicted = mmf::predict(model, table.features);
    batch.truth = table.labels;
  }
  const auto report = mmf::evaluate(set, batch);
  const auto dir = require_out_dir(out);
  mmf::text::write_file(join(dir, "report.json"), mmf::report_to_json(report));
  if (csv)
    mmf::text::write_file(join(dir, "report.csv"),
                          std::string(mmf::report_csv_header()) + "\n" + mmf::report_csv_row(report) + "\n");
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::pair<std::string, std::string>>& ov,
              const std::string& axis_name, const std::string& values, const std::string& seeds, std::string out) {
  auto cfg = mmf::experiment_from_json(load_config(config_path, ov));
  if (!out.empty()) cfg.out = out;
  const auto dir = require_out_dir(cfg.out);
  const auto axis = mmf::parse_axis(axis_name);
  const auto vals = parse_list<double>(values);
  const auto seed_list = parse_list<std::uint64_t>(seeds);

  std::ofstream csv(join(dir, "sweep.csv"), std::ios::binary | std::ios::trunc);
  if (!csv) throw Error(ErrorKind::IoError, "cannot write sweep.csv");
  const auto summary = mmf::run_sweep(cfg, axis, vals, seed_list, csv);

  Json best;
  best["axis"] = mmf::axis_column(axis);
  best["selected_by"] = "mean accuracy";
  best["best_value"] = summary.best_value;
  Json means = Json::array();
  for (std::size_t i = 0; i < summary.values.size(); ++i)
    means.push_back(Json{{"value", summary.values[i]}, {"mean_accuracy", summary.mean_accuracy[i]}});
  best["means"] = std::move(means);
  mmf::text::write_file(join(dir, "best.json"), best.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::pair<std::string, std::string>> overrides;
  try {
    overrides = extract_overrides(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"Multi-structure hierarchical classification toolkit"};
  app.require_subcommand(1);

  std::string config, out;
  std::uint64_t seed_value = 0;

  auto* gen = app.add_subcommand("gen-synthetic", "Write a planted synthetic feature file and its structure");
  gen->add_option("--config", config, "Experiment config (uses data.synthetic)");
  auto* gen_seed = gen->add_option("--seed", seed_value, "Generator seed");
  gen->add_option("--out", out, "Output directory");

  std::string features, subclasses;
  int k = 0;
  double delta = 1.0;
  std::uint64_t build_seed = 0;
  bool dump_affinity = false;
  auto* build = app.add_subcommand("build-structure", "Build the visual label structure H_A_k{k}");
  build->add_option("--features", features, "Feature file")->required();
  build->add_option("--subclasses", subclasses, "Structure file whose subclass list defines the id space")->required();
  build->add_option("--k", k, "Number of superclasses")->required();
  build->add_option("--delta", delta, "Affinity scale");
  build->add_option("--seed", build_seed, "k-means seed");
  build->add_option("--out", out, "Output directory")->required();
  build->add_flag("--dump-affinity", dump_affinity, "Also write the affinity matrix as CSV");

  auto* trn = app.add_subcommand("train", "Train a model from an experiment config");
  trn->add_option("--config", config, "Experiment config")->required();
  auto* train_seed = trn->add_option("--seed", seed_value, "Model seed");
  trn->add_option("--out", out, "Output directory");

  std::string checkpoint, predictions;
  std::vector<std::string> structure_paths;
  bool csv = false;
  auto* ev = app.add_subcommand("evaluate", "Evaluate predictions under one or more structures");
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint");
  ev->add_option("--features", features, "Feature file to predict");
  ev->add_option("--predictions", predictions, "CSV 'predicted,truth' instead of a model");
  ev->add_option("--structure", structure_paths, "Structure file (repeatable)")->required();
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_flag("--csv", csv, "Also write a one-row CSV");

  std::string axis, values, seeds = "1";
  auto* sw = app.add_subcommand("sweep", "Run train+evaluate over one axis");
  sw->add_option("--config", config, "Base experiment config")->required();
  sw->add_option("--axis", axis, "lambda | attach_stage | k")->required();
  sw->add_option("--values", values, "Comma-separated axis values")->required();
  sw->add_option("--seeds", seeds, "Comma-separated seeds");
  sw->add_option("--out", out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed())
      return cmd_gen_synthetic(config, overrides, gen_seed->count() ? std::optional(seed_value) : std::nullopt, out);
    if (build->parsed()) return cmd_build_structure(features, subclasses, k, delta, build_seed, out, dump_affinity);
    if (trn->parsed())
      return cmd_train(config, overrides, train_seed->count() ? std::optional(seed_value) : std::nullopt, out);
    if (ev->parsed()) return cmd_evaluate(checkpoint, features, predictions, structure_paths, out, csv);
    if (sw->parsed()) return cmd_sweep(config, overrides, axis, values, seeds, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
