#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mmf/error.hpp"
#include "mmf/features.hpp"
#include "mmf/random.hpp"
#include "mmf/taxonomy.hpp"
#include "mmf/text.hpp"

namespace mmf {

// Seed streams derived from MMFConfig::seed.
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kShuffleStream = 1;

struct MMFConfig {
  std::vector<int> stage_dims{32, 32};
  /// Trunk stage (0-based) each superclass head reads from. Empty means
  /// stage 0 for every structure; a single entry applies to all.
  std::vector<int> mscb_attach_stage;
  double lambda_total = 0.0;
  /// Per-structure weights summing to lambda_total. Empty means an equal
  /// split lambda_total / M.
  std::vector<double> lambda_split;
  double learning_rate = 0.1;
  int epochs = 50;
  int batch_size = 16;
  std::uint64_t seed = 1;

  bool operator==(const MMFConfig&) const = default;
};

/// Config with per-structure values filled in for a given structure count.
struct ResolvedConfig {
  std::vector<int> attach;
  std::vector<double> lambdas;
  double lambda_total = 0.0;
};

inline ResolvedConfig resolve(const MMFConfig& cfg, std::size_t structure_count) {
  auto bad = [](const std::string& why) { return Error(ErrorKind::InvalidConfig, why); };
  const auto stages = static_cast<int>(cfg.stage_dims.size());
  if (stages < 2) throw bad("the trunk needs at least 2 stages");
  for (int w : cfg.stage_dims)
    if (w < 1) throw bad("stage widths must be >= 1");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) throw bad("learning_rate must be > 0");
  if (cfg.epochs < 1) throw bad("epochs must be >= 1");
  if (cfg.batch_size < 1) throw bad("batch_size must be >= 1");
  if (!(cfg.lambda_total >= 0.0 && cfg.lambda_total < 1.0))
    throw bad("lambda_total must lie in [0, 1), got " + text::format_real(cfg.lambda_total));

  ResolvedConfig r;
  r.lambda_total = cfg.lambda_total;
  const std::size_t m_count = structure_count;
  if (cfg.mscb_attach_stage.empty()) {
    r.attach.assign(m_count, 0);
  } else if (cfg.mscb_attach_stage.size() == 1) {
    r.attach.assign(m_count, cfg.mscb_attach_stage[0]);
  } else if (cfg.mscb_attach_stage.size() == m_count) {
    r.attach = cfg.mscb_attach_stage;
  } else {
    throw bad("mscb_attach_stage has " + std::to_string(cfg.mscb_attach_stage.size()) + " entries for " +
              std::to_string(m_count) + " structures");
  }
  for (int a : r.attach)
    if (a < 0 || a >= stages)
      throw bad("attach stage " + std::to_string(a) + " outside [0, " + std::to_string(stages) + ")");

  if (cfg.lambda_split.empty()) {
    if (m_count == 0 && cfg.lambda_total != 0.0) throw bad("lambda_total must be 0 without structures");
    r.lambdas.assign(m_count, m_count ? cfg.lambda_total / static_cast<double>(m_count) : 0.0);
  } else {
    if (cfg.lambda_split.size() != m_count)
      throw bad("lambda_split has " + std::to_string(cfg.lambda_split.size()) + " entries for " +
                std::to_string(m_count) + " structures");
    double sum = 0.0;
    for (double l : cfg.lambda_split) {
      if (!(l >= 0.0)) throw bad("per-structure lambda must be >= 0");
      sum += l;
    }
    if (std::abs(sum - cfg.lambda_total) > 1e-12) throw bad("lambda_split does not sum to lambda_total");
    r.lambdas = cfg.lambda_split;
  }
  return r;
}

/// Affine map y = W x + b; W is out x in.
struct Dense {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  bool operator==(const Dense& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() && bias.size() == o.bias.size() &&
           weight == o.weight && bias == o.bias;
  }
};

/// Trainable tensors. Also used for gradients, with the same shapes.
struct Parameters {
  std::vector<Dense> trunk;
  Dense ccb;
  std::vector<Dense> mscb;

  bool operator==(const Parameters&) const = default;

  /// Flat views in a fixed order: trunk stages, CCB, MSCB heads; weights
  /// (column-major) before biases within each layer.
  std::vector<std::span<double>> views() {
    std::vector<std::span<double>> out;
    auto add = [&](Dense& d) {
      out.emplace_back(d.weight.data(), static_cast<std::size_t>(d.weight.size()));
      out.emplace_back(d.bias.data(), static_cast<std::size_t>(d.bias.size()));
    };
    for (auto& d : trunk) add(d);
    add(ccb);
    for (auto& d : mscb) add(d);
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    auto add = [&](const Dense& d) { n += static_cast<std::size_t>(d.weight.size() + d.bias.size()); };
    for (const auto& d : trunk) add(d);
    add(ccb);
    for (const auto& d : mscb) add(d);
    return n;
  }

  Parameters zeros_like() const {
    Parameters z = *this;
    for (auto v : z.views()) std::fill(v.begin(), v.end(), 0.0);
    return z;
  }
};

/// Staged tanh trunk with one subclass head (CCB) on the last stage and one
/// superclass head (MSCB) per structure on its attach stage.
struct MMFModel {
  MMFConfig config;
  int input_dim = 0;
  std::vector<std::string> subclass_names;
  std::vector<std::string> structure_names;
  std::vector<int> superclass_counts;
  std::vector<int> attach;  // resolved per structure
  Parameters params;

  int subclass_count() const { return static_cast<int>(subclass_names.size()); }
  std::size_t structure_count() const { return structure_names.size(); }

  bool operator==(const MMFModel&) const = default;
};

struct ForwardPass {
  std::vector<Eigen::MatrixXd> activations;  // [0] = input, [s + 1] = stage s output; n x width
  Eigen::MatrixXd ccb_logits;                // n x subclass_count
  std::vector<Eigen::MatrixXd> mscb_logits;  // per structure, n x superclass_count
};

struct LossBreakdown {
  double total = 0.0;
  double ccb = 0.0;
  std::vector<double> structure;
};

/// Subclass labels plus the superclass label under every structure.
struct TrainingLabels {
  std::vector<SubclassId> subclass;
  std::vector<std::vector<SuperclassId>> superclass;  // [m][i]
};

inline TrainingLabels derive_labels(const std::vector<SubclassId>& subclass, const StructureSet& set) {
  TrainingLabels out;
  out.subclass = subclass;
  out.superclass.resize(set.size());
  for (std::size_t m = 0; m < set.size(); ++m) {
    out.superclass[m].reserve(subclass.size());
    for (auto c : subclass) out.superclass[m].push_back(set[m].superclass_of(c));
  }
  return out;
}

namespace detail {

inline Dense make_dense(int out, int in, Rng& rng) {
  Dense d;
  d.weight.resize(out, in);
  d.bias = Eigen::VectorXd::Zero(out);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < in; ++j) d.weight(i, j) = rng.uniform(-scale, scale);
  return d;
}

inline Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Dense& d) {
  Eigen::MatrixXd z = x * d.weight.transpose();
  z.rowwise() += d.bias.transpose();
  return z;
}

/// Row-wise log-softmax with max subtraction.
inline Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

inline double mean_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  const Eigen::MatrixXd lsm = log_softmax(logits);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols())
      throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " for " +
                                                  std::to_string(logits.cols()) + " classes");
    sum -= lsm(i, y);
  }
  return sum / static_cast<double>(logits.rows());
}

/// d(weight * mean CE)/d(logits) = weight * (softmax - onehot) / n.
inline Eigen::MatrixXd cross_entropy_grad(const Eigen::MatrixXd& logits, const std::vector<int>& labels, double weight) {
  Eigen::MatrixXd g = log_softmax(logits).array().exp();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  return g * (weight / static_cast<double>(logits.rows()));
}

inline void accumulate_dense(Dense& grad, const Eigen::MatrixXd& d_out, const Eigen::MatrixXd& input) {
  grad.weight.noalias() += d_out.transpose() * input;
  grad.bias.noalias() += d_out.colwise().sum().transpose();
}

}  // namespace detail

inline MMFModel init_model(const MMFConfig& config, int subclass_count, const StructureSet& set, int input_dim) {
  if (input_dim < 1) throw Error(ErrorKind::InvalidConfig, "input_dim must be >= 1");
  if (subclass_count < 1) throw Error(ErrorKind::InvalidConfig, "need at least one subclass");
  if (!set.empty() && set.subclass_count() != subclass_count)
    throw Error(ErrorKind::SubclassSpaceMismatch, "structures cover " + std::to_string(set.subclass_count()) +
                                                      " subclasses, model has " + std::to_string(subclass_count));
  const auto resolved = resolve(config, set.size());

  MMFModel model;
  model.config = config;
  model.input_dim = input_dim;
  model.attach = resolved.attach;
  if (!set.empty()) {
    model.subclass_names = set[0].subclass_names();
  } else {
    for (int c = 0; c < subclass_count; ++c) model.subclass_names.push_back("c" + std::to_string(c));
  }
  for (const auto& h : set) {
    model.structure_names.push_back(h.name());
    model.superclass_counts.push_back(h.superclass_count());
  }

  Rng rng(derive_seed(config.seed, kInitStream));
  int width = input_dim;
  for (int w : config.stage_dims) {
    model.params.trunk.push_back(detail::make_dense(w, width, rng));
    width = w;
  }
  model.params.ccb = detail::make_dense(subclass_count, width, rng);
  for (std::size_t m = 0; m < set.size(); ++m)
    model.params.mscb.push_back(
        detail::make_dense(set[m].superclass_count(), config.stage_dims[static_cast<std::size_t>(model.attach[m])], rng));
  return model;
}

inline ForwardPass forward(const MMFModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.input_dim)
    throw Error(ErrorKind::DimensionMismatch, "input has " + std::to_string(x.cols()) + " features, model expects " +
                                                  std::to_string(model.input_dim));
  ForwardPass out;
  out.activations.reserve(model.params.trunk.size() + 1);
  out.activations.push_back(x);
  for (const auto& stage : model.params.trunk)
    out.activations.push_back(detail::affine(out.activations.back(), stage).array().tanh().matrix());
  out.ccb_logits = detail::affine(out.activations.back(), model.params.ccb);
  for (std::size_t m = 0; m < model.params.mscb.size(); ++m)
    out.mscb_logits.push_back(
        detail::affine(out.activations[static_cast<std::size_t>(model.attach[m]) + 1], model.params.mscb[m]));
  return out;
}

inline ForwardPass forward(const MMFModel& model, const Eigen::VectorXd& x) {
  return forward(model, Eigen::MatrixXd(x.transpose()));
}

/// L = (1 - lambda) * CE(ccb) + sum_m lambda_m * CE(mscb_m), each CE averaged
/// over the batch.
inline LossBreakdown mmf_loss(const ForwardPass& out, const TrainingLabels& labels, const ResolvedConfig& weights) {
  if (out.mscb_logits.size() != labels.superclass.size() || weights.lambdas.size() != out.mscb_logits.size())
    throw Error(ErrorKind::DimensionMismatch, "structure count differs between outputs, labels and weights");
  LossBreakdown loss;
  loss.ccb = detail::mean_cross_entropy(out.ccb_logits, labels.subclass);
  loss.total = (1.0 - weights.lambda_total) * loss.ccb;
  for (std::size_t m = 0; m < out.mscb_logits.size(); ++m) {
    loss.structure.push_back(detail::mean_cross_entropy(out.mscb_logits[m], labels.superclass[m]));
    loss.total += weights.lambdas[m] * loss.structure.back();
  }
  return loss;
}

/// Analytic gradient of mmf_loss with respect to every parameter. Heads
/// with zero weight are skipped entirely, so they neither receive nor
/// send gradient.
inline Parameters backward(const MMFModel& model, const ForwardPass& out, const TrainingLabels& labels,
                           const ResolvedConfig& weights) {
  Parameters grad = model.params.zeros_like();
  std::vector<Eigen::MatrixXd> d_act(out.activations.size());
  for (std::size_t s = 1; s < out.activations.size(); ++s)
    d_act[s] = Eigen::MatrixXd::Zero(out.activations[s].rows(), out.activations[s].cols());

  const double ccb_weight = 1.0 - weights.lambda_total;
  if (ccb_weight != 0.0) {
    const Eigen::MatrixXd dz = detail::cross_entropy_grad(out.ccb_logits, labels.subclass, ccb_weight);
    detail::accumulate_dense(grad.ccb, dz, out.activations.back());
    d_act.back().noalias() += dz * model.params.ccb.weight;
  }
  for (std::size_t m = 0; m < model.params.mscb.size(); ++m) {
    if (weights.lambdas[m] == 0.0) continue;
    const auto at = static_cast<std::size_t>(model.attach[m]) + 1;
    const Eigen::MatrixXd dz = detail::cross_entropy_grad(out.mscb_logits[m], labels.superclass[m], weights.lambdas[m]);
    detail::accumulate_dense(grad.mscb[m], dz, out.activations[at]);
    d_act[at].noalias() += dz * model.params.mscb[m].weight;
  }
  for (std::size_t s = model.params.trunk.size(); s-- > 0;) {
    const auto& h = out.activations[s + 1];
    const Eigen::MatrixXd d_pre = d_act[s + 1].array() * (1.0 - h.array().square());
    detail::accumulate_dense(grad.trunk[s], d_pre, out.activations[s]);
    if (s > 0) d_act[s].noalias() += d_pre * model.params.trunk[s].weight;
  }
  return grad;
}

/// Argmax of the CCB logits, lowest id on ties. Superclass heads are not
/// consulted.
inline SubclassId argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < logits.size(); ++j)
    if (logits(j) > logits(best)) best = j;
  return static_cast<SubclassId>(best);
}

inline std::vector<SubclassId> predict(const MMFModel& model, const Eigen::MatrixXd& x) {
  const auto out = forward(model, x);
  std::vector<SubclassId> pred(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) pred[static_cast<std::size_t>(i)] = argmax_row(out.ccb_logits.row(i));
  return pred;
}

inline SubclassId predict(const MMFModel& model, const Eigen::VectorXd& x) {
  return predict(model, Eigen::MatrixXd(x.transpose()))[0];
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double train_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<std::string> structure_names;
  std::vector<EpochRecord> epochs;
};

inline std::string history_to_csv(const TrainHistory& history) {
  std::string out = "epoch,total,l_ccb";
  for (const auto& name : history.structure_names) out += ",l_" + name;
  out += ",train_accuracy\n";
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + "," + text::format_real(e.loss.total) + "," + text::format_real(e.loss.ccb);
    for (double l : e.loss.structure) out += "," + text::format_real(l);
    out += "," + text::format_real(e.train_accuracy) + "\n";
  }
  return out;
}

inline bool all_finite(Parameters& p) {
  for (auto v : p.views())
    for (double x : v)
      if (!std::isfinite(x)) return false;
  return true;
}

/// Continues training an existing model with mini-batch gradient descent.
/// The shuffle stream is seeded from config.seed and independent of the
/// number of structures.
inline TrainHistory train_model(MMFModel& model, const FeatureTable& table, const StructureSet& set) {
  const auto weights = resolve(model.config, set.size());
  if (set.size() != model.structure_count())
    throw Error(ErrorKind::InvalidConfig, "model has " + std::to_string(model.structure_count()) +
                                              " superclass heads, got " + std::to_string(set.size()) + " structures");
  if (table.count() < 1) throw Error(ErrorKind::InvalidArgument, "empty training table");
  if (table.subclass_names != model.subclass_names)
    throw Error(ErrorKind::SubclassSpaceMismatch, "feature table subclasses differ from the model's");
  for (std::size_t m = 0; m < set.size(); ++m)
    if (set[m].superclass_count() != model.superclass_counts[m])
      throw Error(ErrorKind::InvalidConfig, "structure '" + set[m].name() + "' does not match its head");

  const auto all_labels = derive_labels(table.labels, set);
  const auto n = static_cast<std::size_t>(table.count());
  const auto batch = static_cast<std::size_t>(model.config.batch_size);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(model.config.seed, kShuffleStream));

  TrainHistory history;
  history.structure_names = model.structure_names;
  for (int epoch = 1; epoch <= model.config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(stop - start), table.dim());
      TrainingLabels lb;
      lb.superclass.resize(set.size());
      for (std::size_t k = start; k < stop; ++k) {
        const auto row = static_cast<std::size_t>(order[k]);
        xb.row(static_cast<Eigen::Index>(k - start)) = table.features.row(static_cast<Eigen::Index>(row));
        lb.subclass.push_back(all_labels.subclass[row]);
        for (std::size_t m = 0; m < set.size(); ++m) lb.superclass[m].push_back(all_labels.superclass[m][row]);
      }
      const auto out = forward(model, xb);
      const auto loss = mmf_loss(out, lb, weights);
      if (!std::isfinite(loss.total))
        throw Error(ErrorKind::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
      auto grad = backward(model, out, lb, weights);
      auto pv = model.params.views();
      auto gv = grad.views();
      for (std::size_t t = 0; t < pv.size(); ++t)
        for (std::size_t k = 0; k < pv[t].size(); ++k) pv[t][k] -= model.config.learning_rate * gv[t][k];
    }
    const auto out = forward(model, table.features);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = mmf_loss(out, all_labels, weights);
    if (!std::isfinite(rec.loss.total) || !all_finite(model.params))
      throw Error(ErrorKind::DivergedLoss, "non-finite loss or parameters after epoch " + std::to_string(epoch));
    std::int64_t correct = 0;
    for (Eigen::Index i = 0; i < out.ccb_logits.rows(); ++i)
      correct += argmax_row(out.ccb_logits.row(i)) == all_labels.subclass[static_cast<std::size_t>(i)];
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    history.epochs.push_back(std::move(rec));
  }
  return history;
}

inline std::pair<MMFModel, TrainHistory> train(const MMFConfig& config, const FeatureTable& table,
                                               const StructureSet& set) {
  auto model = init_model(config, table.subclass_count(), set, table.dim());
  model.subclass_names = table.subclass_names;
  if (!set.empty() && set[0].subclass_names() != table.subclass_names)
    throw Error(ErrorKind::SubclassSpaceMismatch, "feature table and structures use different subclass lists");
  auto history = train_model(model, table, set);
  return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Finite-difference verification of backward().

/// Max over checked parameters of |g_a - g_n| / max(1, |g_a| + |g_n|), where
/// g_n is a central difference with step eps. max_params = 0 checks every
/// parameter; otherwise a seeded random subset of that size.
inline double gradient_check(const MMFModel& model, const Eigen::MatrixXd& x, const TrainingLabels& labels,
                             double eps = 1e-5, std::size_t max_params = 0, std::uint64_t seed = 0) {
  const auto weights = resolve(model.config, model.structure_count());
  auto analytic = backward(model, forward(model, x), labels, weights);
  MMFModel probe = model;
  auto pv = probe.params.views();
  auto gv = analytic.views();

  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t t = 0; t < pv.size(); ++t)
    for (std::size_t k = 0; k < pv[t].size(); ++k) slots.emplace_back(t, k);
  if (max_params != 0 && max_params < slots.size()) {
    Rng rng(seed);
    rng.shuffle(slots);
    slots.resize(max_params);
  }

  double worst = 0.0;
  for (const auto& [t, k] : slots) {
    double& p = pv[t][k];
    const double saved = p;
    p = saved + eps;
    const double up = mmf_loss(forward(probe, x), labels, weights).total;
    p = saved - eps;
    const double down = mmf_loss(forward(probe, x), labels, weights).total;
    p = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = gv[t][k];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Config <-> JSON

inline nlohmann::ordered_json config_to_json(const MMFConfig& c) {
  nlohmann::ordered_json j;
  j["stage_dims"] = c.stage_dims;
  j["mscb_attach_stage"] = c.mscb_attach_stage;
  j["lambda_total"] = c.lambda_total;
  j["lambda_split"] = c.lambda_split;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

/// Missing keys keep their defaults. mscb_attach_stage may be an integer.
template <typename Json>
MMFConfig config_from_json(const Json& j) {
  MMFConfig c;
  try {
    if (j.contains("stage_dims")) c.stage_dims = j.at("stage_dims").template get<std::vector<int>>();
    if (j.contains("mscb_attach_stage")) {
      const auto& a = j.at("mscb_attach_stage");
      c.mscb_attach_stage = a.is_array() ? a.template get<std::vector<int>>() : std::vector<int>{a.template get<int>()};
    }
    if (j.contains("lambda_total")) c.lambda_total = j.at("lambda_total").template get<double>();
    if (j.contains("lambda_split")) c.lambda_split = j.at("lambda_split").template get<std::vector<double>>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").template get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").template get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").template get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").template get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("model config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Checkpoint: "MMFCKPT1" | u64 header length | JSON header | u64 tensor count
// | per tensor: u64 rows, u64 cols, rows*cols f64 (row-major). All integers
// and floats little-endian.

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'F', 'C', 'K', 'P', 'T', '1'};

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_u64(std::string_view in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw Error(ErrorKind::CorruptCheckpoint, "truncated file");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += 8;
  return v;
}

inline void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
}

inline Eigen::MatrixXd get_matrix(std::string_view in, std::size_t& pos, Eigen::Index rows, Eigen::Index cols) {
  const auto r = get_u64(in, pos);
  const auto c = get_u64(in, pos);
  if (r != static_cast<std::uint64_t>(rows) || c != static_cast<std::uint64_t>(cols))
    throw Error(ErrorKind::CorruptCheckpoint, "tensor shape " + std::to_string(r) + "x" + std::to_string(c) +
                                                  ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(get_u64(in, pos));
  return m;
}

}  // namespace detail

inline std::string checkpoint_bytes(const MMFModel& model) {
  nlohmann::ordered_json header;
  header["format"] = "mmf-checkpoint";
  header["version"] = 1;
  header["config"] = config_to_json(model.config);
  header["input_dim"] = model.input_dim;
  header["subclasses"] = model.subclass_names;
  header["structures"] = model.structure_names;
  header["superclass_counts"] = model.superclass_counts;
  header["attach"] = model.attach;
  const std::string h = header.dump();

  std::string out(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::put_u64(out, h.size());
  out += h;
  const std::size_t tensors = 2 * (model.params.trunk.size() + 1 + model.params.mscb.size());
  detail::put_u64(out, tensors);
  auto put = [&](const Dense& d) {
    detail::put_matrix(out, d.weight);
    detail::put_matrix(out, d.bias);
  };
  for (const auto& d : model.params.trunk) put(d);
  put(model.params.ccb);
  for (const auto& d : model.params.mscb) put(d);
  return out;
}

inline MMFModel model_from_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 8) != std::string_view(detail::kCheckpointMagic, 8))
    throw Error(ErrorKind::CorruptCheckpoint, "bad magic");
  std::size_t pos = 8;
  const auto hlen = detail::get_u64(bytes, pos);
  if (pos + hlen > bytes.size()) throw Error(ErrorKind::CorruptCheckpoint, "truncated header");
  MMFModel model;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(pos, hlen));
    model.config = config_from_json(header.at("config"));
    model.input_dim = header.at("input_dim").get<int>();
    model.subclass_names = header.at("subclasses").get<std::vector<std::string>>();
    model.structure_names = header.at("structures").get<std::vector<std::string>>();
    model.superclass_counts = header.at("superclass_counts").get<std::vector<int>>();
    model.attach = header.at("attach").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("header: ") + e.what());
  }
  pos += hlen;
  const std::size_t m_count = model.structure_names.size();
  if (model.superclass_counts.size() != m_count || model.attach.size() != m_count)
    throw Error(ErrorKind::CorruptCheckpoint, "inconsistent structure metadata");
  for (int a : model.attach)
    if (a < 0 || static_cast<std::size_t>(a) >= model.config.stage_dims.size())
      throw Error(ErrorKind::CorruptCheckpoint, "attach stage out of range");
  const auto tensors = detail::get_u64(bytes, pos);
  if (tensors != 2 * (model.config.stage_dims.size() + 1 + m_count))
    throw Error(ErrorKind::CorruptCheckpoint, "unexpected tensor count");

  auto get = [&](Eigen::Index out, Eigen::Index in) {
    Dense d;
    d.weight = detail::get_matrix(bytes, pos, out, in);
    d.bias = detail::get_matrix(bytes, pos, out, 1);
    return d;
  };
  Eigen::Index width = model.input_dim;
  for (int w : model.config.stage_dims) {
    model.params.trunk.push_back(get(w, width));
    width = w;
  }
  model.params.ccb = get(static_cast<Eigen::Index>(model.subclass_names.size()), width);
  for (std::size_t m = 0; m < m_count; ++m)
    model.params.mscb.push_back(
        get(model.superclass_counts[m], model.config.stage_dims[static_cast<std::size_t>(model.attach[m])]));
  if (pos != bytes.size()) throw Error(ErrorKind::CorruptCheckpoint, "trailing bytes");
  return model;
}

inline void save_checkpoint(const MMFModel& model, const std::string& path) {
  text::write_file(path, checkpoint_bytes(model));
}

inline MMFModel load_checkpoint(const std::string& path) { return model_from_checkpoint(text::read_file(path)); }

}  // namespace mmf
