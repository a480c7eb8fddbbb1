#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmf/error.hpp"
#include "mmf/features.hpp"
#include "mmf/jacobi.hpp"
#include "mmf/random.hpp"
#include "mmf/taxonomy.hpp"
#include "mmf/text.hpp"

namespace mmf {

/// Symmetric class-affinity matrix with a zero diagonal.
struct AffinityMatrix {
  Eigen::MatrixXd values;
  int class_count() const { return static_cast<int>(values.rows()); }
};

/// Row-normalized top-k eigenvectors of the normalized affinity.
struct SpectralEmbedding {
  Eigen::MatrixXd coords;  // N x k
  int k = 0;
};

struct KMeansOptions {
  int max_iter = 300;
  int restarts = 10;
};

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
};

/// dis(i, j) = sqrt(||Q_i - Q_j||^2 + var_i + var_j).
inline double class_distance(const Eigen::Ref<const Eigen::RowVectorXd>& mean_i, double variance_i,
                             const Eigen::Ref<const Eigen::RowVectorXd>& mean_j, double variance_j) {
  if (mean_i.size() != mean_j.size())
    throw Error(ErrorKind::DimensionMismatch, "class means have dimensions " + std::to_string(mean_i.size()) +
                                                  " and " + std::to_string(mean_j.size()));
  return std::sqrt((mean_i - mean_j).squaredNorm() + variance_i + variance_j);
}

inline double class_distance(const ClassStats& stats, int i, int j) {
  return class_distance(stats.means.row(i), stats.variance[static_cast<std::size_t>(i)], stats.means.row(j),
                        stats.variance[static_cast<std::size_t>(j)]);
}

/// A_ij = exp(-dis(i, j) / delta) off the diagonal, A_ii = 0.
inline AffinityMatrix affinity_matrix(const ClassStats& stats, double delta = 1.0) {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw Error(ErrorKind::InvalidArgument, "affinity scale delta must be a positive finite number");
  const int n = stats.class_count();
  AffinityMatrix a;
  a.values = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) a.values(i, j) = a.values(j, i) = std::exp(-class_distance(stats, i, j) / delta);
  return a;
}

inline std::string affinity_to_csv(const AffinityMatrix& a, const std::vector<std::string>& names) {
  std::string out = "class";
  for (const auto& name : names) out += "," + name;
  out += '\n';
  for (int i = 0; i < a.class_count(); ++i) {
    out += names[static_cast<std::size_t>(i)];
    for (int j = 0; j < a.class_count(); ++j) out += "," + text::format_real(a.values(i, j));
    out += '\n';
  }
  return out;
}

inline SpectralEmbedding spectral_embedding(const AffinityMatrix& a, int k, const JacobiOptions& options = {}) {
  const int n = a.class_count();
  if (k < 1 || k > n)
    throw Error(ErrorKind::InvalidArgument,
                "cluster count k=" + std::to_string(k) + " must be in [1, " + std::to_string(n) + "]");
  const Eigen::VectorXd degree = a.values.rowwise().sum();
  for (int i = 0; i < n; ++i)
    if (!(degree(i) > 0.0)) throw Error(ErrorKind::IsolatedClass, "class " + std::to_string(i) + " has zero degree");
  const Eigen::VectorXd inv_sqrt = degree.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd normalized = inv_sqrt.asDiagonal() * a.values * inv_sqrt.asDiagonal();

  const auto eig = jacobi_eigen(normalized, options);
  SpectralEmbedding emb;
  emb.k = k;
  emb.coords = eig.vectors.leftCols(k);
  for (int i = 0; i < n; ++i) {
    const double norm = emb.coords.row(i).norm();
    if (!(norm > 0.0)) throw Error(ErrorKind::ZeroNormRow, "embedding row " + std::to_string(i) + " is zero");
    emb.coords.row(i) /= norm;
  }
  return emb;
}

namespace detail {

inline int nearest_centroid(const Eigen::MatrixXd& points, Eigen::Index i, const Eigen::MatrixXd& centroids,
                            double* best_dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (points.row(i) - centroids.row(c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

inline int count_distinct_rows(const Eigen::MatrixXd& points, int stop_at) {
  std::vector<Eigen::Index> distinct;
  for (Eigen::Index i = 0; i < points.rows() && static_cast<int>(distinct.size()) < stop_at; ++i) {
    bool seen = false;
    for (auto j : distinct)
      if (points.row(i) == points.row(j)) {
        seen = true;
        break;
      }
    if (!seen) distinct.push_back(i);
  }
  return static_cast<int>(distinct.size());
}

/// D^2-weighted seeding: first centre uniform, then each next centre drawn
/// with probability proportional to squared distance to the chosen set.
inline Eigen::MatrixXd seed_centroids(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    const double target = rng.uniform() * total;
    Eigen::Index pick = -1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2(i) <= 0.0) continue;
      acc += d2(i);
      pick = i;
      if (acc > target) break;
    }
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

inline KMeansResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, int max_iter) {
  const Eigen::Index n = points.rows();
  const int k = static_cast<int>(centroids.rows());
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest_centroid(points, i, centroids);
      if (c != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    // empty-cluster repair: hand the empty cluster the point farthest from
    // its own centroid, taken from a cluster that can spare one
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int c : assign) ++sizes[static_cast<std::size_t>(c)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int owner = assign[static_cast<std::size_t>(i)];
        if (sizes[static_cast<std::size_t>(owner)] < 2) continue;
        const double d = (points.row(i) - centroids.row(owner)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --sizes[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = c;
      ++sizes[static_cast<std::size_t>(c)];
      changed = true;
    }
    centroids.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centroids.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c) centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
    if (!changed) break;
  }
  KMeansResult out;
  out.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    out.inertia += (points.row(i) - centroids.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
  out.assignment = std::move(assign);
  out.centroids = std::move(centroids);
  return out;
}

/// Renumbers clusters by first appearance so equal partitions get equal labels.
inline void canonicalize(KMeansResult& result) {
  const int k = static_cast<int>(result.centroids.rows());
  std::vector<int> relabel(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& c : result.assignment) {
    auto& slot = relabel[static_cast<std::size_t>(c)];
    if (slot == -1) slot = next++;
    c = slot;
  }
  Eigen::MatrixXd reordered(result.centroids.rows(), result.centroids.cols());
  for (int c = 0; c < k; ++c) reordered.row(relabel[static_cast<std::size_t>(c)]) = result.centroids.row(c);
  result.centroids = std::move(reordered);
}

}  // namespace detail

/// Best-inertia k-means over `restarts` seeded initializations. Cluster ids
/// are numbered by first appearance in point order.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  const auto n = static_cast<int>(points.rows());
  if (k < 1 || k > n)
    throw Error(ErrorKind::InvalidArgument, "k=" + std::to_string(k) + " must be in [1, " + std::to_string(n) + "]");
  if (options.max_iter < 1 || options.restarts < 1)
    throw Error(ErrorKind::InvalidArgument, "k-means needs max_iter >= 1 and restarts >= 1");
  if (detail::count_distinct_rows(points, k) < k)
    throw Error(ErrorKind::DegeneratePoints, "fewer than " + std::to_string(k) + " distinct points");

  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    auto run = detail::lloyd(points, detail::seed_centroids(points, k, rng), options.max_iter);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  detail::canonicalize(best);
  return best;
}

struct VisualStructureOptions {
  double delta = 1.0;
  std::uint64_t seed = 0;
  KMeansOptions kmeans;
  JacobiOptions eigen;
};

/// Feature statistics -> affinity -> spectral embedding -> k-means. The
/// result is named "H_A_k{k}" with superclasses "s0".."s{k-1}".
inline LabelStructure build_visual_structure(const FeatureTable& table, int k, const VisualStructureOptions& options,
                                             AffinityMatrix* affinity_out = nullptr) {
  const int n = table.subclass_count();
  if (k < 1 || k > n)
    throw Error(ErrorKind::InvalidArgument, "superclass count k=" + std::to_string(k) +
                                                " exceeds the bound: must be in [1, " + std::to_string(n) +
                                                "] (number of subclasses)");
  const auto stats = class_statistics(table);
  auto affinity = affinity_matrix(stats, options.delta);
  const auto embedding = spectral_embedding(affinity, k, options.eigen);
  const auto clusters = kmeans(embedding.coords, k, options.seed, options.kmeans);

  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int c : clusters.assignment) ++sizes[static_cast<std::size_t>(c)];
  for (int s = 0; s < k; ++s)
    if (sizes[static_cast<std::size_t>(s)] == 0) throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(s));

  if (affinity_out) *affinity_out = std::move(affinity);
  return structure_from_assignment("H_A_k" + std::to_string(k), table.subclass_names, clusters.assignment, k, "s");
}

}  // namespace mmf
