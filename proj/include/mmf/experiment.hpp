#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmf/error.hpp"
#include "mmf/features.hpp"
#include "mmf/metrics.hpp"
#include "mmf/model.hpp"
#include "mmf/structure_builder.hpp"
#include "mmf/taxonomy.hpp"
#include "mmf/text.hpp"

namespace mmf {

using Json = nlohmann::ordered_json;

/// One entry of a structure list: a structure file, the planted structure
/// of synthetic data, or a visual structure built from the training split.
struct StructureSource {
  enum class Kind { File, Planted, Visual };
  Kind kind = Kind::File;
  std::string path;
  int k = 0;
  double delta = 1.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::optional<SyntheticSpec> synthetic;
  std::string features_path;
  std::string subclasses_from;  // structure file defining the id space for features_path
  std::optional<double> split_fraction;
  std::uint64_t split_seed = 1;
  std::vector<StructureSource> structures;
  std::vector<StructureSource> eval_structures;  // empty: same as structures
  MMFConfig model;
  std::string out;
};

// ---------------------------------------------------------------------------
// JSON parsing and dotted-key overrides.

/// Sets `dotted.key.path` in a JSON document. The value is read as JSON
/// when it parses (numbers, arrays, booleans) and as a string otherwise.
inline void apply_override(Json& doc, const std::string& dotted, const std::string& value) {
  Json* node = &doc;
  for (auto part : text::split(dotted, '.')) {
    if (part.empty()) throw Error(ErrorKind::InvalidConfig, "bad override key '" + dotted + "'");
    if (!node->is_object()) *node = Json::object();
    node = &(*node)[std::string(part)];
  }
  Json parsed = Json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? Json(value) : std::move(parsed);
}

inline SyntheticSpec synthetic_from_json(const Json& j) {
  SyntheticSpec s;
  try {
    if (j.contains("superclass_count")) s.superclass_count = j.at("superclass_count").get<int>();
    if (j.contains("subclasses_per_superclass"))
      s.subclasses_per_superclass = j.at("subclasses_per_superclass").get<int>();
    if (j.contains("samples_per_subclass")) s.samples_per_subclass = j.at("samples_per_subclass").get<int>();
    if (j.contains("dim")) s.dim = j.at("dim").get<int>();
    if (j.contains("superclass_separation")) s.superclass_separation = j.at("superclass_separation").get<double>();
    if (j.contains("subclass_separation")) s.subclass_separation = j.at("subclass_separation").get<double>();
    if (j.contains("noise_scale")) s.noise_scale = j.at("noise_scale").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, std::string("synthetic spec: ") + e.what());
  }
  return s;
}

inline Json synthetic_to_json(const SyntheticSpec& s) {
  Json j;
  j["superclass_count"] = s.superclass_count;
  j["subclasses_per_superclass"] = s.subclasses_per_superclass;
  j["samples_per_subclass"] = s.samples_per_subclass;
  j["dim"] = s.dim;
  j["superclass_separation"] = s.superclass_separation;
  j["subclass_separation"] = s.subclass_separation;
  j["noise_scale"] = s.noise_scale;
  j["seed"] = s.seed;
  return j;
}

inline StructureSource structure_source_from_json(const Json& j) {
  StructureSource src;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "planted") {
      src.kind = StructureSource::Kind::Planted;
    } else {
      src.kind = StructureSource::Kind::File;
      src.path = s;
    }
    return src;
  }
  if (j.is_object() && j.contains("visual")) {
    const auto& v = j.at("visual");
    src.kind = StructureSource::Kind::Visual;
    src.k = v.value("k", 0);
    src.delta = v.value("delta", 1.0);
    src.seed = v.value("seed", std::uint64_t{0});
    if (src.k < 1) throw Error(ErrorKind::InvalidConfig, "visual structure needs k >= 1");
    return src;
  }
  throw Error(ErrorKind::InvalidConfig, "structure entry must be a path, \"planted\" or {\"visual\": {...}}");
}

inline Json structure_source_to_json(const StructureSource& s) {
  switch (s.kind) {
    case StructureSource::Kind::File: return s.path;
    case StructureSource::Kind::Planted: return "planted";
    case StructureSource::Kind::Visual: {
      Json v;
      v["k"] = s.k;
      v["delta"] = s.delta;
      v["seed"] = s.seed;
      Json j;
      j["visual"] = std::move(v);
      return j;
    }
  }
  return nullptr;
}

inline ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      const bool has_syn = d.contains("synthetic");
      const bool has_file = d.contains("features");
      if (has_syn == has_file) throw Error(ErrorKind::InvalidConfig, "data needs exactly one of synthetic/features");
      if (has_syn) cfg.synthetic = synthetic_from_json(d.at("synthetic"));
      if (has_file) cfg.features_path = d.at("features").get<std::string>();
      cfg.subclasses_from = d.value("subclasses_from", std::string());
    }
    if (j.contains("split") && !j.at("split").is_null()) {
      cfg.split_fraction = j.at("split").at("fraction").get<double>();
      cfg.split_seed = j.at("split").value("seed", std::uint64_t{1});
    }
    if (j.contains("structures"))
      for (const auto& e : j.at("structures")) cfg.structures.push_back(structure_source_from_json(e));
    if (j.contains("eval_structures"))
      for (const auto& e : j.at("eval_structures")) cfg.eval_structures.push_back(structure_source_from_json(e));
    if (j.contains("model")) cfg.model = config_from_json(j.at("model"));
    cfg.out = j.value("out", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
  return cfg;
}

inline Json experiment_to_json(const ExperimentConfig& cfg) {
  Json j;
  Json data;
  if (cfg.synthetic) data["synthetic"] = synthetic_to_json(*cfg.synthetic);
  if (!cfg.features_path.empty()) data["features"] = cfg.features_path;
  if (!cfg.subclasses_from.empty()) data["subclasses_from"] = cfg.subclasses_from;
  j["data"] = std::move(data);
  if (cfg.split_fraction) j["split"] = Json{{"fraction", *cfg.split_fraction}, {"seed", cfg.split_seed}};
  j["structures"] = Json::array();
  for (const auto& s : cfg.structures) j["structures"].push_back(structure_source_to_json(s));
  if (!cfg.eval_structures.empty()) {
    j["eval_structures"] = Json::array();
    for (const auto& s : cfg.eval_structures) j["eval_structures"].push_back(structure_source_to_json(s));
  }
  j["model"] = config_to_json(cfg.model);
  if (!cfg.out.empty()) j["out"] = cfg.out;
  return j;
}

inline Json load_json_file(const std::string& path) {
  try {
    return Json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, "'" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct ExperimentData {
  FeatureTable train;
  FeatureTable test;
  std::optional<LabelStructure> planted;
};

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  FeatureTable all;
  if (cfg.synthetic) {
    auto [table, planted] = generate_synthetic(*cfg.synthetic);
    all = std::move(table);
    data.planted = std::move(planted);
  } else if (!cfg.features_path.empty()) {
    std::string names_from = cfg.subclasses_from;
    if (names_from.empty())
      for (const auto& s : cfg.structures)
        if (s.kind == StructureSource::Kind::File) {
          names_from = s.path;
          break;
        }
    if (names_from.empty())
      throw Error(ErrorKind::InvalidConfig, "feature data needs data.subclasses_from or a structure file");
    all = load_feature_table(cfg.features_path, load_structure_file(names_from).subclass_names());
  } else {
    throw Error(ErrorKind::InvalidConfig, "no data source configured");
  }
  if (cfg.split_fraction) {
    auto [train, test] = train_test_split(all, *cfg.split_fraction, cfg.split_seed);
    data.train = std::move(train);
    data.test = std::move(test);
  } else {
    data.train = all;
    data.test = std::move(all);
  }
  return data;
}

inline StructureSet resolve_structures(const std::vector<StructureSource>& sources, const ExperimentData& data) {
  std::vector<LabelStructure> out;
  for (const auto& src : sources) {
    switch (src.kind) {
      case StructureSource::Kind::File: out.push_back(load_structure_file(src.path)); break;
      case StructureSource::Kind::Planted:
        if (!data.planted) throw Error(ErrorKind::InvalidConfig, "\"planted\" needs synthetic data");
        out.push_back(*data.planted);
        break;
      case StructureSource::Kind::Visual: {
        VisualStructureOptions opt;
        opt.delta = src.delta;
        opt.seed = src.seed;
        out.push_back(build_visual_structure(data.train, src.k, opt));
        break;
      }
    }
    if (out.back().subclass_names() != data.train.subclass_names)
      throw Error(ErrorKind::SubclassSpaceMismatch, "structure '" + out.back().name() +
                                                        "' does not use the feature table's subclass list");
  }
  return StructureSet(std::move(out));
}

struct ExperimentResult {
  MMFModel model;
  TrainHistory history;
  StructureSet train_structures;
  StructureSet eval_structures;
  PredictionBatch test_predictions;
  EvalReport report;  // on the test part; hierarchical fields need eval structures
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data) {
  ExperimentResult r;
  r.train_structures = resolve_structures(cfg.structures, data);
  r.eval_structures = cfg.eval_structures.empty() ? r.train_structures : resolve_structures(cfg.eval_structures, data);
  auto [model, history] = train(cfg.model, data.train, r.train_structures);
  r.model = std::move(model);
  r.history = std::move(history);
  r.test_predictions.predicted = predict(r.model, data.test.features);
  r.test_predictions.truth = data.test.labels;
  if (r.eval_structures.empty()) {
    r.report.accuracy = top1_accuracy(r.test_predictions);
  } else {
    r.report = evaluate(r.eval_structures, r.test_predictions);
  }
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, load_experiment_data(cfg));
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { Lambda, AttachStage, K };

inline SweepAxis parse_axis(const std::string& name) {
  if (name == "lambda") return SweepAxis::Lambda;
  if (name == "attach_stage" || name == "stage") return SweepAxis::AttachStage;
  if (name == "k") return SweepAxis::K;
  throw Error(ErrorKind::InvalidArgument, "unknown sweep axis '" + name + "' (lambda, attach_stage, k)");
}

inline const char* axis_column(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::AttachStage: return "stage";
    case SweepAxis::K: return "k";
  }
  return "value";
}

/// Copy of `base` with one axis set to `value` and all seeds set to `seed`.
inline ExperimentConfig sweep_point(const ExperimentConfig& base, SweepAxis axis, double value, std::uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.model.seed = seed;
  cfg.split_seed = seed;
  switch (axis) {
    case SweepAxis::Lambda:
      cfg.model.lambda_total = value;
      cfg.model.lambda_split.clear();
      break;
    case SweepAxis::AttachStage: cfg.model.mscb_attach_stage = {static_cast<int>(value)}; break;
    case SweepAxis::K: {
      bool found = false;
      for (auto& s : cfg.structures)
        if (s.kind == StructureSource::Kind::Visual) {
          s.k = static_cast<int>(value);
          found = true;
        }
      if (!found) {
        StructureSource v;
        v.kind = StructureSource::Kind::Visual;
        v.k = static_cast<int>(value);
        cfg.structures.push_back(v);
      }
      break;
    }
  }
  return cfg;
}

struct SweepSummary {
  std::vector<double> values;
  std::vector<double> mean_accuracy;
  double best_value = 0.0;
};

/// Runs every (value, seed) pair in sorted order, appending one CSV row per
/// run to `csv` as it completes, then one "mean" row per value.
inline SweepSummary run_sweep(const ExperimentConfig& base, SweepAxis axis, std::vector<double> values,
                              std::vector<std::uint64_t> seeds, std::ostream& csv) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "sweep needs at least one value");
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "sweep needs at least one seed");
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  csv << axis_column(axis) << ",seed," << report_csv_header() << "\n" << std::flush;
  std::optional<ExperimentData> shared;
  if (axis != SweepAxis::K && !base.split_fraction) shared = load_experiment_data(base);

  SweepSummary summary;
  std::vector<EvalReport> means;
  for (double v : values) {
    EvalReport sum;
    for (auto seed : seeds) {
      const auto cfg = sweep_point(base, axis, v, seed);
      const auto result = shared ? run_experiment(cfg, *shared) : run_experiment(cfg);
      csv << text::format_short(v) << "," << seed << "," << report_csv_row(result.report) << "\n" << std::flush;
      sum.accuracy += result.report.accuracy;
      sum.p_ha += result.report.p_ha;
      sum.r_ha += result.report.r_ha;
      sum.f_ha += result.report.f_ha;
      sum.tie_a += result.report.tie_a;
      sum.lca_a += result.report.lca_a;
    }
    const auto n = static_cast<double>(seeds.size());
    sum.accuracy /= n;
    sum.p_ha /= n;
    sum.r_ha /= n;
    sum.f_ha /= n;
    sum.tie_a /= n;
    sum.lca_a /= n;
    means.push_back(sum);
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    csv << text::format_short(values[i]) << ",mean," << report_csv_row(means[i]) << "\n";
    summary.values.push_back(values[i]);
    summary.mean_accuracy.push_back(means[i].accuracy);
  }
  csv << std::flush;
  const auto best = std::max_element(summary.mean_accuracy.begin(), summary.mean_accuracy.end());
  summary.best_value = summary.values[static_cast<std::size_t>(best - summary.mean_accuracy.begin())];
  return summary;
}

}  // namespace mmf
