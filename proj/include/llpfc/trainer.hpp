#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "llpfc/bag_model.hpp"
#include "llpfc/common.hpp"
#include "llpfc/losses.hpp"
#include "llpfc/matrix.hpp"
#include "llpfc/reduction.hpp"
#include "llpfc/simplex.hpp"

namespace llpfc {

// ---------------------------------------------------------------------------
// Classifiers: softmax-linear, or an MLP with a 1-Lipschitz activation
// (rectifier), so the score vector always has length C.
// ---------------------------------------------------------------------------

struct ClassifierSpec {
  std::vector<int> widths;  // [d, hidden ..., C]; two entries = softmax-linear

  void validate() const {
    if (widths.size() < 2) throw ConfigError("ClassifierSpec: need input and output widths");
    for (int w : widths)
      if (w < 1) throw ConfigError("ClassifierSpec: zero-width layer");
  }
};

class Classifier {
 public:
  struct Layer {
    Matrix w;
    std::vector<double> b;
  };

  /// Linear models start at zero (uniform softmax output everywhere); MLP
  /// weights are scaled-uniform with scale 1/sqrt(fan_in), biases zero.
  static Classifier init(const ClassifierSpec& spec, std::uint64_t seed) {
    spec.validate();
    Classifier clf;
    clf.widths_ = spec.widths;
    Rng rng(mix_seed(seed, 0x1a17ULL));
    const bool linear = spec.widths.size() == 2;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
      const int fan_in = spec.widths[l];
      const int fan_out = spec.widths[l + 1];
      Layer layer{Matrix(fan_out, fan_in),
                  std::vector<double>(static_cast<std::size_t>(fan_out), 0.0)};
      if (!linear) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < fan_out; ++i)
          for (int j = 0; j < fan_in; ++j)
            layer.w(i, j) = (2.0 * rng.uniform01() - 1.0) * scale;
      }
      clf.layers.push_back(std::move(layer));
    }
    return clf;
  }

  int input_dim() const { return widths_.front(); }
  int num_classes() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }

  std::vector<double> scores(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_dim())
      throw ConfigError("Classifier::scores: input dimension mismatch");
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::vector<double> z = layers[l].w.apply(a);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += layers[l].b[i];
      if (l + 1 < layers.size())
        for (double& v : z) v = std::max(v, 0.0);  // rectifier, 1-Lipschitz
      a = std::move(z);
    }
    return a;
  }

  int predict(std::span<const double> x) const {
    const std::vector<double> s = scores(x);
    return min_argmax(s);
  }

  std::vector<Layer> layers;

 private:
  std::vector<int> widths_;

  friend Classifier load_classifier(const std::string&);
};

inline double evaluate(const Classifier& clf, const Dataset& ds) {
  ds.validate();
  if (ds.d != clf.input_dim())
    throw ConfigError("evaluate: dataset dimension does not match classifier");
  long correct = 0;
  for (int i = 0; i < ds.n; ++i)
    if (clf.predict(ds.row(i)) == ds.labels[static_cast<std::size_t>(i)]) ++correct;
  return static_cast<double>(correct) / ds.n;
}

// ---------------------------------------------------------------------------
// Model serialization: versioned text, 17 significant digits, row-major.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline void save_classifier(const std::string& path, const Classifier& clf) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << "llpfc-classifier 1\n";
  out << "widths";
  for (int w : clf.widths()) out << ' ' << w;
  out << '\n';
  for (std::size_t l = 0; l < clf.layers.size(); ++l) {
    const Classifier::Layer& layer = clf.layers[l];
    out << "layer " << l << ' ' << layer.w.rows() << ' ' << layer.w.cols() << '\n';
    for (int i = 0; i < layer.w.rows(); ++i) {
      for (int j = 0; j < layer.w.cols(); ++j)
        out << (j ? " " : "") << detail::format_double(layer.w(i, j));
      out << '\n';
    }
    out << "bias " << l << ' ' << layer.b.size() << '\n';
    for (std::size_t i = 0; i < layer.b.size(); ++i)
      out << (i ? " " : "") << detail::format_double(layer.b[i]);
    out << '\n';
  }
  out << "end\n";
}

inline Classifier load_classifier(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  std::string token;
  int version = 0;
  in >> token >> version;
  if (token != "llpfc-classifier" || version != 1)
    throw DataError(path + ": unrecognized model format");
  in >> token;
  if (token != "widths") throw DataError(path + ": expected widths header");
  std::string rest;
  std::getline(in, rest);
  std::vector<int> widths;
  {
    std::istringstream ws(rest);
    int w;
    while (ws >> w) widths.push_back(w);
  }
  if (widths.size() < 2) throw DataError(path + ": bad widths line");

  Classifier clf;
  clf.widths_ = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    std::size_t idx = 0;
    int rows = 0, cols = 0;
    if (!(in >> token >> idx >> rows >> cols) || token != "layer" || idx != l)
      throw DataError(path + ": malformed layer header");
    Classifier::Layer layer{Matrix(rows, cols),
                            std::vector<double>(static_cast<std::size_t>(rows), 0.0)};
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (!(in >> layer.w(i, j))) throw DataError(path + ": truncated weights");
    int bn = 0;
    if (!(in >> token >> idx >> bn) || token != "bias" || idx != l ||
        bn != rows)
      throw DataError(path + ": malformed bias header");
    for (int i = 0; i < bn; ++i)
      if (!(in >> layer.b[static_cast<std::size_t>(i)]))
        throw DataError(path + ": truncated biases");
    clf.layers.push_back(std::move(layer));
  }
  return clf;
}

// ---------------------------------------------------------------------------
// Training configuration and metrics
// ---------------------------------------------------------------------------

enum class WeightScheme { Uniform, HarmonicMean };

struct TrainConfig {
  ClassifierSpec model;
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 0.01;
  std::vector<int> lr_decay_epochs;  // empty: decay at 50% and 75% of epochs
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int regroup_every = 20;
  ReductionMode mode = ReductionMode::Uniform;
  WeightScheme weights = WeightScheme::Uniform;
  std::uint64_t seed = 0;
  std::optional<ProbVector> clean_sigma;  // required by the ideal reduction
  bool eval_each_epoch = true;
  int max_assumption_retries = 50;

  void validate() const {
    model.validate();
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (regroup_every < 1) throw ConfigError("TrainConfig: regroup_every must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("TrainConfig: momentum in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight decay must be >= 0");
  }

  std::vector<int> effective_decay_epochs() const {
    if (!lr_decay_epochs.empty()) return lr_decay_epochs;
    std::vector<int> out;
    for (int boundary : {epochs / 2, (3 * epochs) / 4})
      if (boundary > 0) out.push_back(boundary);
    return out;
  }

  std::vector<std::pair<std::string, std::string>> canonical_items(
      bool supervised = false) const {
    std::vector<std::pair<std::string, std::string>> items;
    auto add = [&items](const std::string& k, const std::string& v) {
      items.emplace_back(k, v);
    };
    std::string widths;
    for (int w : model.widths) widths += (widths.empty() ? "" : ",") + std::to_string(w);
    add("model_widths", widths);
    add("epochs", std::to_string(epochs));
    add("batch_size", std::to_string(batch_size));
    add("lr", detail::format_double(learning_rate));
    std::string decays;
    for (int e : effective_decay_epochs())
      decays += (decays.empty() ? "" : ",") + std::to_string(e);
    add("lr_decay_epochs", decays);
    add("lr_decay_factor", detail::format_double(lr_decay_factor));
    add("momentum", detail::format_double(momentum));
    add("weight_decay", detail::format_double(weight_decay));
    add("regroup_every", std::to_string(regroup_every));
    add("mode", supervised ? "supervised"
                           : (mode == ReductionMode::Ideal     ? "ideal"
                              : mode == ReductionMode::Uniform ? "uniform"
                                                               : "approx"));
    add("weights", weights == WeightScheme::Uniform ? "uniform" : "harmonic");
    add("seed", std::to_string(seed));
    if (clean_sigma.has_value()) {
      std::string sigma;
      for (double v : clean_sigma->values())
        sigma += (sigma.empty() ? "" : ",") + detail::format_double(v);
      add("sigma", sigma);
    }
    add("eval_each_epoch", eval_each_epoch ? "1" : "0");
    std::sort(items.begin(), items.end());
    return items;
  }

  std::string config_hash(bool supervised = false) const {
    std::string text;
    for (const auto& [k, v] : canonical_items(supervised)) text += k + "=" + v + "\n";
    return fnv1a64_hex(text);
  }
};

struct EpochMetrics {
  int epoch = 0;
  double objective = 0.0;
  std::optional<double> train_acc;
  std::optional<double> test_acc;
  bool regrouped = false;
  long long saturations = 0;
};

struct MetricsLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::vector<EpochMetrics> epochs;
};

inline void write_metrics_jsonl(const std::string& path, const MetricsLog& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics file: " + path);
  nlohmann::json echo;
  for (const auto& [k, v] : log.config_echo) echo[k] = v;
  nlohmann::json head{{"config_hash", log.config_hash}, {"seed", log.seed}, {"config", echo}};
  out << head.dump() << '\n';
  for (const EpochMetrics& m : log.epochs) {
    nlohmann::json rec{{"epoch", m.epoch},
                       {"objective", m.objective},
                       {"regrouped", m.regrouped},
                       {"saturations", m.saturations}};
    rec["train_acc"] = m.train_acc.has_value() ? nlohmann::json(*m.train_acc) : nlohmann::json();
    rec["test_acc"] = m.test_acc.has_value() ? nlohmann::json(*m.test_acc) : nlohmann::json();
    out << rec.dump() << '\n';
  }
}

struct TrainResult {
  Classifier classifier;
  MetricsLog log;
  int assumption_retries = 0;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

struct AssignedPoint {
  int data_index;
  int group;
  int noisy_class;
  double coeff;  // the coefficient this point carries in the epoch objective
};

struct EpochSetup {
  std::vector<GroupNoiseModel> models;
  std::vector<CompositeFCLoss> losses;  // one per group, log base
  std::vector<AssignedPoint> points;
};

/// Gradient buffers and momentum state, parallel to the classifier layers.
struct Optimizer {
  explicit Optimizer(const Classifier& clf) {
    for (const Classifier::Layer& layer : clf.layers) {
      grad_w.emplace_back(layer.w.rows(), layer.w.cols());
      grad_b.emplace_back(layer.b.size(), 0.0);
      vel_w.emplace_back(layer.w.rows(), layer.w.cols());
      vel_b.emplace_back(layer.b.size(), 0.0);
    }
  }

  void zero_gradients() {
    for (std::size_t l = 0; l < grad_w.size(); ++l) {
      Matrix& g = grad_w[l];
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) g(i, j) = 0.0;
      std::fill(grad_b[l].begin(), grad_b[l].end(), 0.0);
    }
  }

  void step(Classifier& clf, double lr, double momentum, double weight_decay) {
    for (std::size_t l = 0; l < clf.layers.size(); ++l) {
      Classifier::Layer& layer = clf.layers[l];
      for (int i = 0; i < layer.w.rows(); ++i)
        for (int j = 0; j < layer.w.cols(); ++j) {
          const double g = grad_w[l](i, j) + weight_decay * layer.w(i, j);
          vel_w[l](i, j) = momentum * vel_w[l](i, j) + g;
          layer.w(i, j) -= lr * vel_w[l](i, j);
        }
      for (std::size_t i = 0; i < layer.b.size(); ++i) {
        const double g = grad_b[l][i] + weight_decay * layer.b[i];
        vel_b[l][i] = momentum * vel_b[l][i] + g;
        layer.b[i] -= lr * vel_b[l][i];
      }
    }
  }

  std::vector<Matrix> grad_w, vel_w;
  std::vector<std::vector<double>> grad_b, vel_b;
};

/// Forward pass keeping post-activation values for backprop.
inline std::vector<std::vector<double>> forward_cached(const Classifier& clf,
                                                       std::span<const double> x) {
  std::vector<std::vector<double>> acts;
  acts.reserve(clf.layers.size() + 1);
  acts.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < clf.layers.size(); ++l) {
    std::vector<double> z = clf.layers[l].w.apply(acts.back());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += clf.layers[l].b[i];
    if (l + 1 < clf.layers.size())
      for (double& v : z) v = std::max(v, 0.0);
    acts.push_back(std::move(z));
  }
  return acts;
}

/// Accumulates scale * dL/dscores backward through the network.
inline void backward_accumulate(const Classifier& clf,
                                const std::vector<std::vector<double>>& acts,
                                std::vector<double> delta, double scale, Optimizer& opt) {
  for (double& v : delta) v *= scale;
  for (std::size_t l = clf.layers.size(); l-- > 0;) {
    const std::vector<double>& input = acts[l];
    Matrix& gw = opt.grad_w[l];
    for (int i = 0; i < gw.rows(); ++i) {
      const double di = delta[static_cast<std::size_t>(i)];
      if (di == 0.0) continue;
      for (int j = 0; j < gw.cols(); ++j) gw(i, j) += di * input[static_cast<std::size_t>(j)];
    }
    for (std::size_t i = 0; i < delta.size(); ++i) opt.grad_b[l][i] += delta[i];
    if (l == 0) break;
    std::vector<double> prev = clf.layers[l].w.apply_transpose(delta);
    for (std::size_t i = 0; i < prev.size(); ++i)
      if (acts[l][i] <= 0.0) prev[i] = 0.0;  // rectifier mask
    delta = std::move(prev);
  }
}

/// Builds the epoch setup for the LLP reduction: partition bags, build each
/// group's noise model under the requested mode, assign noisy labels and
/// per-point coefficients. Points are kept sorted by dataset index so the
/// minibatch stream depends only on the shuffle rng.
inline EpochSetup build_reduction_setup(const LLPInstance& inst, const TrainConfig& cfg,
                                        const ProbVector& sigma_hat_global, int epoch,
                                        int* assumption_retries) {
  const int C = inst.dataset.C;
  const int n_bags = static_cast<int>(inst.bags.size());
  Rng group_rng(mix_seed(cfg.seed, 0x9607ULL, static_cast<std::uint64_t>(epoch)));

  EpochSetup setup;
  const int max_tries = (cfg.mode == ReductionMode::Ideal) ? cfg.max_assumption_retries + 1 : 1;
  for (int attempt = 0;; ++attempt) {
    const Grouping grouping = random_partition(n_bags, C, group_rng, epoch);
    const int n_groups = grouping.group_count();
    try {
      std::vector<GroupNoiseModel> models;
      models.reserve(static_cast<std::size_t>(n_groups));
      for (int i = 0; i < n_groups; ++i) {
        const std::vector<int>& members = grouping.groups[static_cast<std::size_t>(i)];
        std::vector<Bag> group_bags;
        group_bags.reserve(members.size());
        for (int k : members) group_bags.push_back(inst.bags[static_cast<std::size_t>(k)]);
        GroupNoiseModel model = [&]() {
          switch (cfg.mode) {
            case ReductionMode::Ideal: {
              std::vector<ProbVector> gammas;
              for (const Bag& b : group_bags) {
                if (!b.gamma_true.has_value())
                  throw DataError("ideal mode requires gamma_true on every bag");
                gammas.push_back(*b.gamma_true);
              }
              return build_ideal(gammas, *cfg.clean_sigma);
            }
            case ReductionMode::Uniform:
              return build_uniform(group_bags);
            case ReductionMode::Approx:
            default:
              return build_approx(group_bags, sigma_hat_global);
          }
        }();
        model.bag_refs = members;
        models.push_back(std::move(model));
      }

      if (cfg.weights == WeightScheme::HarmonicMean) {
        std::vector<std::vector<int>> sizes(static_cast<std::size_t>(n_groups));
        for (int i = 0; i < n_groups; ++i)
          for (int k : models[static_cast<std::size_t>(i)].bag_refs)
            sizes[static_cast<std::size_t>(i)].push_back(
                inst.bags[static_cast<std::size_t>(k)].size());
        const ProbVector w = optimal_weights(sizes);
        for (int i = 0; i < n_groups; ++i) models[static_cast<std::size_t>(i)].weight = w[i];
      } else {
        for (GroupNoiseModel& m : models) m.weight = 1.0 / n_groups;
      }

      setup.models = std::move(models);
      break;
    } catch (const AssumptionViolation& e) {
      if (attempt + 1 >= max_tries)
        throw AssumptionViolation(e.kind,
                                  std::string(e.what()) + " (after " +
                                      std::to_string(attempt) + " regroup retries)",
                                  e.group);
      if (assumption_retries != nullptr) ++(*assumption_retries);
    }
  }

  // noisy label c for every point of the bag in group position c
  std::vector<char> seen(static_cast<std::size_t>(inst.dataset.n), 0);
  for (int i = 0; i < static_cast<int>(setup.models.size()); ++i) {
    const GroupNoiseModel& model = setup.models[static_cast<std::size_t>(i)];
    long long n_i = 0;
    for (int k : model.bag_refs) n_i += inst.bags[static_cast<std::size_t>(k)].size();
    for (int c = 0; c < C; ++c) {
      const Bag& bag = inst.bags[static_cast<std::size_t>(model.bag_refs[static_cast<std::size_t>(c)])];
      const double coeff =
          (cfg.mode == ReductionMode::Uniform)
              ? model.weight / static_cast<double>(n_i)
              : model.weight * model.alpha_hat[c] / static_cast<double>(bag.size());
      for (int idx : bag.indices) {
        if (idx < 0 || idx >= inst.dataset.n)
          throw DataError("bag index " + std::to_string(idx) + " outside the dataset");
        if (seen[static_cast<std::size_t>(idx)])
          throw DataError("data point " + std::to_string(idx) + " appears in two bags");
        seen[static_cast<std::size_t>(idx)] = 1;
        setup.points.push_back(AssignedPoint{idx, i, c, coeff});
      }
    }
  }
  std::sort(setup.points.begin(), setup.points.end(),
            [](const AssignedPoint& a, const AssignedPoint& b) {
              return a.data_index < b.data_index;
            });
  for (const GroupNoiseModel& m : setup.models)
    setup.losses.push_back(CompositeFCLoss{m.T_hat, BaseLoss::LogLoss});
  return setup;
}

/// The shared minibatch-SGD loop. `rebuild` returns a fresh setup at
/// regroup epochs and nullopt otherwise; the supervised control uses the
/// same loop with a single identity group.
inline TrainResult run_sgd(const Dataset& data, const TrainConfig& cfg,
                           const std::function<std::optional<EpochSetup>(int)>& rebuild,
                           const Dataset* test_data, bool supervised) {
  cfg.validate();
  Classifier clf = Classifier::init(cfg.model, cfg.seed);
  Optimizer opt(clf);

  MetricsLog log;
  log.seed = cfg.seed;
  log.config_hash = cfg.config_hash(supervised);
  log.config_echo = cfg.canonical_items(supervised);

  TrainResult result{std::move(clf), std::move(log), 0};
  EpochSetup setup;
  const std::vector<int> decay_epochs = cfg.effective_decay_epochs();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::optional<EpochSetup> fresh = rebuild(epoch);
    const bool regrouped = fresh.has_value();
    if (fresh.has_value()) setup = std::move(*fresh);
    if (setup.points.empty()) throw DataError("training setup has no points");

    double lr = cfg.learning_rate;
    for (int boundary : decay_epochs)
      if (epoch >= boundary) lr *= cfg.lr_decay_factor;

    const int n_points = static_cast<int>(setup.points.size());
    std::vector<int> order(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x500fULL, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    SaturationCounter saturations;
    for (int start = 0; start < n_points; start += cfg.batch_size) {
      const int stop = std::min(start + cfg.batch_size, n_points);
      const double scale_all = static_cast<double>(n_points) / (stop - start);
      opt.zero_gradients();
      for (int k = start; k < stop; ++k) {
        const AssignedPoint& pt = setup.points[static_cast<std::size_t>(
            order[static_cast<std::size_t>(k)])];
        const auto acts = forward_cached(result.classifier, data.row(pt.data_index));
        std::vector<double> delta =
            fc_loss_gradient(setup.losses[static_cast<std::size_t>(pt.group)], acts.back(),
                             pt.noisy_class, &saturations);
        backward_accumulate(result.classifier, acts, std::move(delta),
                            pt.coeff * scale_all, opt);
      }
      opt.step(result.classifier, lr, cfg.momentum, cfg.weight_decay);
    }

    // end-of-epoch objective over all covered points, fixed dataset order
    double objective = 0.0;
    for (const AssignedPoint& pt : setup.points) {
      const std::vector<double> s = result.classifier.scores(data.row(pt.data_index));
      objective += pt.coeff * fc_loss_value(setup.losses[static_cast<std::size_t>(pt.group)],
                                            s, pt.noisy_class, &saturations);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.objective = objective;
    m.regrouped = regrouped;
    m.saturations = saturations.count;
    if (cfg.eval_each_epoch) {
      m.train_acc = evaluate(result.classifier, data);
      if (test_data != nullptr) m.test_acc = evaluate(result.classifier, *test_data);
    }
    result.log.epochs.push_back(std::move(m));
  }
  return result;
}

}  // namespace detail

/// LLPFC training: periodic regrouping, noisy-label assignment, and
/// minibatch SGD on the mode's weighted forward-correction objective.
inline TrainResult train(const LLPInstance& inst, const TrainConfig& cfg,
                         const Dataset* test_data = nullptr) {
  cfg.validate();
  inst.dataset.validate();
  const int C = inst.dataset.C;
  if (static_cast<int>(inst.bags.size()) < C)
    throw DataError("train: need at least C bags");
  for (const Bag& b : inst.bags)
    if (b.size() == 0) throw DataError("train: empty bag");
  if (cfg.mode == ReductionMode::Ideal) {
    if (!cfg.clean_sigma.has_value())
      throw ConfigError("train: ideal mode requires the clean prior sigma");
    if (cfg.clean_sigma->size() != C)
      throw ConfigError("train: sigma length does not match the class count");
    for (const Bag& b : inst.bags)
      if (!b.gamma_true.has_value())
        throw DataError("train: ideal mode requires gamma_true on every bag");
  }
  if (cfg.model.widths.front() != inst.dataset.d || cfg.model.widths.back() != C)
    throw ConfigError("train: classifier widths must map dataset dim to class count");

  const ProbVector sigma_hat_global = pooled_prior(inst);
  int retries = 0;
  auto rebuild = [&](int epoch) -> std::optional<detail::EpochSetup> {
    if (epoch % cfg.regroup_every != 0) return std::nullopt;
    return detail::build_reduction_setup(inst, cfg, sigma_hat_global, epoch, &retries);
  };
  TrainResult result = detail::run_sgd(inst.dataset, cfg, rebuild, test_data, false);
  result.assumption_retries = retries;
  return result;
}

/// Supervised cross-entropy control: the same loop run on the labeled data
/// with a single identity-noise group, so that on pure bags the reduction
/// and this control produce identical arithmetic.
inline TrainResult train_supervised(const Dataset& ds, const TrainConfig& cfg,
                                    const Dataset* test_data = nullptr) {
  cfg.validate();
  ds.validate();
  if (cfg.model.widths.front() != ds.d || cfg.model.widths.back() != ds.C)
    throw ConfigError("train_supervised: classifier widths must map dataset dim to class count");

  auto rebuild = [&](int epoch) -> std::optional<detail::EpochSetup> {
    if (epoch != 0) return std::nullopt;
    detail::EpochSetup setup;
    GroupNoiseModel model{ColumnStochasticMatrix(Matrix::identity(ds.C)),
                          ProbVector::uniform(ds.C), ProbVector::uniform(ds.C), {}, 1.0};
    setup.models.push_back(std::move(model));
    setup.losses.push_back(CompositeFCLoss{setup.models[0].T_hat, BaseLoss::LogLoss});
    const long long n = ds.n;
    for (int i = 0; i < ds.n; ++i)
      setup.points.push_back(detail::AssignedPoint{
          i, 0, ds.labels[static_cast<std::size_t>(i)],
          setup.models[0].weight / static_cast<double>(n)});
    return setup;
  };
  return detail::run_sgd(ds, cfg, rebuild, test_data, true);
}

}  // namespace llpfc
