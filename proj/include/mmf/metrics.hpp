#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmf/error.hpp"
#include "mmf/taxonomy.hpp"
#include "mmf/text.hpp"

namespace mmf {

struct PredictionBatch {
  std::vector<SubclassId> predicted;
  std::vector<SubclassId> truth;
};

struct HierarchicalPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

struct StructureScore {
  std::string name;
  double p_h = 0.0;
  double r_h = 0.0;
  double f_h = 0.0;
  double tie = 0.0;
  double lca = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  double p_ha = 0.0;
  double r_ha = 0.0;
  double f_ha = 0.0;
  double tie_a = 0.0;
  double lca_a = 0.0;
  std::vector<StructureScore> per_structure;
};

namespace detail {

inline void check_batch(const PredictionBatch& batch) {
  if (batch.predicted.empty() && batch.truth.empty()) throw Error(ErrorKind::EmptyBatch, "no predictions");
  if (batch.predicted.size() != batch.truth.size())
    throw Error(ErrorKind::DimensionMismatch, "predicted and truth lengths differ");
}

inline void check_set(const StructureSet& set) {
  if (set.empty()) throw Error(ErrorKind::InvalidArgument, "hierarchical metrics need at least one structure");
}

/// Integer tallies for one structure; all sums are exact.
struct StructureTally {
  std::int64_t overlap = 0;    // sum |pred_aug ∩ true_aug|
  std::int64_t pred_size = 0;  // sum |pred_aug|
  std::int64_t true_size = 0;  // sum |true_aug|
  std::int64_t edges = 0;
  std::int64_t height = 0;
};

inline StructureTally tally(const LabelStructure& h, const PredictionBatch& batch) {
  StructureTally t;
  for (std::size_t i = 0; i < batch.truth.size(); ++i) {
    const int height = lca_height(h, batch.truth[i], batch.predicted[i]);
    // augmented sets are {root, superclass, subclass}; they share every
    // node above the LCA level
    t.overlap += 3 - height;
    t.pred_size += 3;
    t.true_size += 3;
    t.edges += tie_distance(h, batch.truth[i], batch.predicted[i]);
    t.height += height;
  }
  return t;
}

inline double harmonic(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace detail

inline double top1_accuracy(const PredictionBatch& batch) {
  detail::check_batch(batch);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < batch.truth.size(); ++i) correct += batch.predicted[i] == batch.truth[i];
  return static_cast<double>(correct) / static_cast<double>(batch.truth.size());
}

/// Full report: flat accuracy plus structure-averaged P_H, R_H, F_H, TIE
/// and LCA. Within a structure P_H and R_H are micro-averaged over samples;
/// F_Ha is the harmonic mean of the structure-averaged P and R.
inline EvalReport evaluate(const StructureSet& set, const PredictionBatch& batch) {
  detail::check_batch(batch);
  detail::check_set(set);
  EvalReport report;
  report.accuracy = top1_accuracy(batch);
  const auto n = static_cast<double>(batch.truth.size());
  double p_sum = 0.0, r_sum = 0.0, tie_sum = 0.0, lca_sum = 0.0;
  for (const auto& h : set) {
    const auto t = detail::tally(h, batch);
    StructureScore s;
    s.name = h.name();
    s.p_h = static_cast<double>(t.overlap) / static_cast<double>(t.pred_size);
    s.r_h = static_cast<double>(t.overlap) / static_cast<double>(t.true_size);
    s.f_h = detail::harmonic(s.p_h, s.r_h);
    s.tie = static_cast<double>(t.edges) / n;
    s.lca = static_cast<double>(t.height) / n;
    p_sum += s.p_h;
    r_sum += s.r_h;
    tie_sum += s.tie;
    lca_sum += s.lca;
    report.per_structure.push_back(std::move(s));
  }
  const auto m = static_cast<double>(set.size());
  report.p_ha = p_sum / m;
  report.r_ha = r_sum / m;
  report.f_ha = detail::harmonic(report.p_ha, report.r_ha);
  report.tie_a = tie_sum / m;
  report.lca_a = lca_sum / m;
  return report;
}

inline HierarchicalPRF hierarchical_prf(const StructureSet& set, const PredictionBatch& batch) {
  const auto r = evaluate(set, batch);
  return {r.p_ha, r.r_ha, r.f_ha};
}

inline double tie_a(const StructureSet& set, const PredictionBatch& batch) { return evaluate(set, batch).tie_a; }

inline double lca_a(const StructureSet& set, const PredictionBatch& batch) { return evaluate(set, batch).lca_a; }

// ---------------------------------------------------------------------------
// Serialization. Reals carry 17 significant digits.

inline std::string report_to_json(const EvalReport& r) {
  using text::format_real;
  std::string out = "{\n";
  out += "  \"accuracy\": " + format_real(r.accuracy) + ",\n";
  out += "  \"p_ha\": " + format_real(r.p_ha) + ",\n";
  out += "  \"r_ha\": " + format_real(r.r_ha) + ",\n";
  out += "  \"f_ha\": " + format_real(r.f_ha) + ",\n";
  out += "  \"tie_a\": " + format_real(r.tie_a) + ",\n";
  out += "  \"lca_a\": " + format_real(r.lca_a) + ",\n";
  out += "  \"per_structure\": [";
  for (std::size_t m = 0; m < r.per_structure.size(); ++m) {
    const auto& s = r.per_structure[m];
    out += m == 0 ? "\n" : ",\n";
    out += "    {\"name\": " + nlohmann::json(s.name).dump() + ", \"p_h\": " + format_real(s.p_h) +
           ", \"r_h\": " + format_real(s.r_h) + ", \"f_h\": " + format_real(s.f_h) +
           ", \"tie\": " + format_real(s.tie) + ", \"lca\": " + format_real(s.lca) + "}";
  }
  out += r.per_structure.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

inline const char* report_csv_header() { return "accuracy,p_ha,r_ha,f_ha,tie_a,lca_a"; }

inline std::string report_csv_row(const EvalReport& r) {
  using text::format_real;
  return format_real(r.accuracy) + "," + format_real(r.p_ha) + "," + format_real(r.r_ha) + "," +
         format_real(r.f_ha) + "," + format_real(r.tie_a) + "," + format_real(r.lca_a);
}

/// Two-column CSV "predicted,truth" of subclass names, with header.
inline PredictionBatch parse_predictions_csv(const std::string& document, const std::vector<std::string>& names) {
  std::unordered_map<std::string, SubclassId> index;
  for (std::size_t c = 0; c < names.size(); ++c) index.emplace(names[c], static_cast<SubclassId>(c));
  PredictionBatch batch;
  bool header = true;
  int line_no = 0;
  for (auto line : text::split(document, '\n')) {
    ++line_no;
    line = text::trim(line);
    if (line.empty()) continue;
    const auto cells = text::split(line, ',');
    if (cells.size() != 2) throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no));
    if (header) {
      header = false;
      if (text::trim(cells[0]) == "predicted") continue;
    }
    SubclassId ids[2];
    for (int k = 0; k < 2; ++k) {
      const std::string name(text::trim(cells[static_cast<std::size_t>(k)]));
      const auto it = index.find(name);
      if (it == index.end()) throw Error(ErrorKind::UnknownLabel, "line " + std::to_string(line_no) + ": '" + name + "'");
      ids[k] = it->second;
    }
    batch.predicted.push_back(ids[0]);
    batch.truth.push_back(ids[1]);
  }
  return batch;
}

}  // namespace mmf
