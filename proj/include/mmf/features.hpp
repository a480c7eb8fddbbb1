#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmf/error.hpp"
#include "mmf/random.hpp"
#include "mmf/taxonomy.hpp"
#include "mmf/text.hpp"

namespace mmf {

/// n samples x d features with one subclass label per row.
struct FeatureTable {
  Eigen::MatrixXd features;  // n x d, row-major semantics: one sample per row
  std::vector<SubclassId> labels;
  std::vector<std::string> subclass_names;

  int count() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int subclass_count() const { return static_cast<int>(subclass_names.size()); }

  bool operator==(const FeatureTable& other) const {
    return labels == other.labels && subclass_names == other.subclass_names &&
           features.rows() == other.features.rows() && features.cols() == other.features.cols() &&
           features == other.features;
  }
};

/// Per-class mean vectors and scalar spread (trace of the population
/// covariance).
struct ClassStats {
  Eigen::MatrixXd means;  // N x d
  std::vector<double> variance;
  std::vector<int> counts;

  int class_count() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }
};

struct SyntheticSpec {
  int superclass_count = 4;
  int subclasses_per_superclass = 5;
  int samples_per_subclass = 100;
  int dim = 16;
  double superclass_separation = 10.0;
  double subclass_separation = 3.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 1;
};

// ---------------------------------------------------------------------------
// Feature file: header "label,f0,...,f{d-1}", one row per sample.

inline FeatureTable parse_feature_csv(const std::string& document,
                                      const std::vector<std::string>& subclass_names) {
  std::unordered_map<std::string, SubclassId> index;
  for (std::size_t c = 0; c < subclass_names.size(); ++c)
    index.emplace(subclass_names[c], static_cast<SubclassId>(c));

  std::vector<std::string_view> lines;
  for (auto line : text::split(document, '\n')) {
    line = text::trim(line);
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw Error(ErrorKind::MalformedRow, "feature file has no header");

  const auto header = text::split(lines[0], ',');
  if (header.size() < 2 || text::trim(header[0]) != "label")
    throw Error(ErrorKind::MalformedRow, "header must be 'label,f0,...'");
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);

  FeatureTable table;
  table.subclass_names = subclass_names;
  table.features.resize(static_cast<Eigen::Index>(lines.size() - 1), dim);
  table.labels.reserve(lines.size() - 1);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = text::split(lines[r], ',');
    const std::string where = "line " + std::to_string(r + 1);
    if (static_cast<Eigen::Index>(cells.size()) != dim + 1)
      throw Error(ErrorKind::DimensionMismatch, where + ": expected " + std::to_string(dim) +
                                                    " features, got " + std::to_string(cells.size() - 1));
    const std::string label(text::trim(cells[0]));
    const auto it = index.find(label);
    if (it == index.end()) throw Error(ErrorKind::UnknownLabel, where + ": '" + label + "'");
    table.labels.push_back(it->second);
    for (Eigen::Index j = 0; j < dim; ++j) {
      double v = 0.0;
      if (!text::parse_real(cells[static_cast<std::size_t>(j + 1)], v))
        throw Error(ErrorKind::MalformedRow, where + ": cannot parse '" +
                                                 std::string(cells[static_cast<std::size_t>(j + 1)]) + "'");
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, where);
      table.features(static_cast<Eigen::Index>(r - 1), j) = v;
    }
  }
  return table;
}

inline std::string feature_table_to_csv(const FeatureTable& table) {
  std::string out = "label";
  for (int j = 0; j < table.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (int i = 0; i < table.count(); ++i) {
    out += table.subclass_names[static_cast<std::size_t>(table.labels[static_cast<std::size_t>(i)])];
    for (int j = 0; j < table.dim(); ++j) {
      out += ',';
      out += text::format_real(table.features(i, j));
    }
    out += '\n';
  }
  return out;
}

inline FeatureTable load_feature_table(const std::string& path,
                                       const std::vector<std::string>& subclass_names) {
  return parse_feature_csv(text::read_file(path), subclass_names);
}

inline void save_feature_table(const FeatureTable& table, const std::string& path) {
  text::write_file(path, feature_table_to_csv(table));
}

// ---------------------------------------------------------------------------

inline ClassStats class_statistics(const FeatureTable& table) {
  const int n_classes = table.subclass_count();
  const int d = table.dim();
  ClassStats stats;
  stats.means = Eigen::MatrixXd::Zero(n_classes, d);
  stats.variance.assign(static_cast<std::size_t>(n_classes), 0.0);
  stats.counts.assign(static_cast<std::size_t>(n_classes), 0);

  for (int i = 0; i < table.count(); ++i) {
    const int c = table.labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= n_classes) throw Error(ErrorKind::UnknownLabel, "label id " + std::to_string(c));
    stats.means.row(c) += table.features.row(i);
    ++stats.counts[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < n_classes; ++c) {
    const int n = stats.counts[static_cast<std::size_t>(c)];
    if (n < 2)
      throw Error(ErrorKind::ClassTooSmall, "class " + std::to_string(c) + " ('" +
                                                table.subclass_names[static_cast<std::size_t>(c)] + "') has " +
                                                std::to_string(n) + " samples, need >= 2");
    stats.means.row(c) /= static_cast<double>(n);
  }
  // second pass: population spread around the mean
  for (int i = 0; i < table.count(); ++i) {
    const int c = table.labels[static_cast<std::size_t>(i)];
    stats.variance[static_cast<std::size_t>(c)] += (table.features.row(i) - stats.means.row(c)).squaredNorm();
  }
  for (int c = 0; c < n_classes; ++c)
    stats.variance[static_cast<std::size_t>(c)] /= static_cast<double>(stats.counts[static_cast<std::size_t>(c)]);
  return stats;
}

inline void validate(const SyntheticSpec& spec) {
  if (spec.superclass_count < 1 || spec.subclasses_per_superclass < 1 || spec.samples_per_subclass < 1 ||
      spec.dim < 1)
    throw Error(ErrorKind::InvalidSpec, "all counts must be >= 1");
  if (!(spec.superclass_separation > 0.0) || !(spec.subclass_separation > 0.0))
    throw Error(ErrorKind::InvalidSpec, "separations must be > 0");
  if (!(spec.noise_scale > 0.0)) throw Error(ErrorKind::InvalidSpec, "noise_scale must be > 0");
}

/// Planted two-level Gaussian blobs. Returns the samples (ordered by
/// subclass) and the ground-truth structure "H_planted".
inline std::pair<FeatureTable, LabelStructure> generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  const int n_super = spec.superclass_count;
  const int per = spec.subclasses_per_superclass;
  const int n_sub = n_super * per;
  const int d = spec.dim;

  Eigen::MatrixXd super_centers(n_super, d);
  for (int s = 0; s < n_super; ++s)
    for (int j = 0; j < d; ++j) super_centers(s, j) = rng.normal();
  // rescale so the closest pair sits exactly at the requested separation
  double min_dist = 0.0;
  for (int a = 0; a < n_super; ++a)
    for (int b = a + 1; b < n_super; ++b) {
      const double dist = (super_centers.row(a) - super_centers.row(b)).norm();
      if (min_dist == 0.0 || dist < min_dist) min_dist = dist;
    }
  super_centers *= (n_super > 1 && min_dist > 0.0) ? spec.superclass_separation / min_dist
                                                   : spec.superclass_separation;

  Eigen::MatrixXd sub_centers(n_sub, d);
  for (int c = 0; c < n_sub; ++c) {
    Eigen::RowVectorXd dir(d);
    for (int j = 0; j < d; ++j) dir(j) = rng.normal();
    const double norm = dir.norm();
    if (norm > 0.0) dir /= norm;
    sub_centers.row(c) = super_centers.row(c / per) + spec.subclass_separation * dir;
  }

  FeatureTable table;
  table.features.resize(static_cast<Eigen::Index>(n_sub) * spec.samples_per_subclass, d);
  table.labels.reserve(static_cast<std::size_t>(table.features.rows()));
  for (int c = 0; c < n_sub; ++c) table.subclass_names.push_back("c" + std::to_string(c));
  Eigen::Index row = 0;
  for (int c = 0; c < n_sub; ++c) {
    for (int i = 0; i < spec.samples_per_subclass; ++i, ++row) {
      for (int j = 0; j < d; ++j) table.features(row, j) = sub_centers(c, j) + spec.noise_scale * rng.normal();
      table.labels.push_back(c);
    }
  }

  std::vector<int> assignment(static_cast<std::size_t>(n_sub));
  for (int c = 0; c < n_sub; ++c) assignment[static_cast<std::size_t>(c)] = c / per;
  auto planted = structure_from_assignment("H_planted", table.subclass_names, assignment, n_super, "S");
  return {std::move(table), std::move(planted)};
}

/// Number of training samples taken from a class of size n.
inline int train_count(int n, double fraction) {
  const int raw = static_cast<int>(std::floor(fraction * n + 1e-9));
  return std::clamp(raw, 1, n - 1);
}

inline FeatureTable select_rows(const FeatureTable& table, const std::vector<int>& rows) {
  FeatureTable out;
  out.subclass_names = table.subclass_names;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), table.dim());
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = table.features.row(rows[r]);
    out.labels.push_back(table.labels[static_cast<std::size_t>(rows[r])]);
  }
  return out;
}

/// Stratified split. Each class contributes train_count(n_c) rows to the
/// training part and the rest to the test part; both parts keep the
/// original row order.
inline std::pair<FeatureTable, FeatureTable> train_test_split(const FeatureTable& table, double fraction,
                                                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument, "split fraction must be in (0, 1)");
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(table.subclass_count()));
  for (int i = 0; i < table.count(); ++i)
    by_class[static_cast<std::size_t>(table.labels[static_cast<std::size_t>(i)])].push_back(i);

  Rng rng(seed);
  std::vector<char> is_train(static_cast<std::size_t>(table.count()), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    if (rows.size() < 2)
      throw Error(ErrorKind::ClassTooSmall, "class '" + table.subclass_names[c] + "' has " +
                                                std::to_string(rows.size()) + " sample(s), cannot split");
    rng.shuffle(rows);
    const int n_train = train_count(static_cast<int>(rows.size()), fraction);
    for (int k = 0; k < n_train; ++k) is_train[static_cast<std::size_t>(rows[static_cast<std::size_t>(k)])] = 1;
  }
  std::vector<int> train_rows, test_rows;
  for (int i = 0; i < table.count(); ++i) (is_train[static_cast<std::size_t>(i)] ? train_rows : test_rows).push_back(i);
  return {select_rows(table, train_rows), select_rows(table, test_rows)};
}

}  // namespace mmf
