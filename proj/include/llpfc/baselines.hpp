#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llpfc/bag_model.hpp"
#include "llpfc/common.hpp"
#include "llpfc/losses.hpp"
#include "llpfc/trainer.hpp"

namespace llpfc {

/// Proportion-matching baseline trained on minibatches of bags.
struct KLBaselineConfig {
  ClassifierSpec model;
  int bags_per_minibatch = 2;
  int epochs = 100;
  double learning_rate = 0.01;
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool eval_each_epoch = true;

  void validate() const {
    model.validate();
    if (bags_per_minibatch < 1)
      throw ConfigError("KLBaselineConfig: bags_per_minibatch must be >= 1");
    if (epochs < 1) throw ConfigError("KLBaselineConfig: epochs must be >= 1");
    if (!(learning_rate > 0.0))
      throw ConfigError("KLBaselineConfig: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("KLBaselineConfig: momentum in [0,1)");
  }

  std::vector<int> effective_decay_epochs() const {
    if (!lr_decay_epochs.empty()) return lr_decay_epochs;
    std::vector<int> out;
    for (int boundary : {epochs / 2, (3 * epochs) / 4})
      if (boundary > 0) out.push_back(boundary);
    return out;
  }

  std::vector<std::pair<std::string, std::string>> canonical_items() const {
    std::vector<std::pair<std::string, std::string>> items;
    auto add = [&items](const std::string& k, const std::string& v) {
      items.emplace_back(k, v);
    };
    std::string widths;
    for (int w : model.widths) widths += (widths.empty() ? "" : ",") + std::to_string(w);
    add("model_widths", widths);
    add("mode", "baseline-kl");
    add("bags_per_minibatch", std::to_string(bags_per_minibatch));
    add("epochs", std::to_string(epochs));
    add("lr", detail::format_double(learning_rate));
    std::string decays;
    for (int e : effective_decay_epochs())
      decays += (decays.empty() ? "" : ",") + std::to_string(e);
    add("lr_decay_epochs", decays);
    add("lr_decay_factor", detail::format_double(lr_decay_factor));
    add("momentum", detail::format_double(momentum));
    add("weight_decay", detail::format_double(weight_decay));
    add("seed", std::to_string(seed));
    add("eval_each_epoch", eval_each_epoch ? "1" : "0");
    std::sort(items.begin(), items.end());
    return items;
  }

  std::string config_hash() const {
    std::string text;
    for (const auto& [k, v] : canonical_items()) text += k + "=" + v + "\n";
    return fnv1a64_hex(text);
  }
};

/// The proportion-matching objective on a minibatch of B bags:
/// -(1/(C B)) sum_k sum_c gamma_hat_k(c) log((1/m_k) sum_j f_c(X_j)),
/// with the mean of the softmax outputs taken before the log. A zero mean
/// prediction entry under positive gamma mass hits the saturation cap.
inline double kl_bag_loss(const Classifier& clf, std::span<const Bag> bags,
                          const Dataset& ds, SaturationCounter* saturations = nullptr) {
  if (bags.empty()) throw ConfigError("kl_bag_loss: no bags");
  const int C = clf.num_classes();
  double total = 0.0;
  for (const Bag& bag : bags) {
    if (bag.size() == 0) throw DataError("kl_bag_loss: empty bag");
    if (bag.gamma_hat.size() != C) throw DataError("kl_bag_loss: gamma size mismatch");
    std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
    for (int idx : bag.indices) {
      if (idx < 0 || idx >= ds.n) throw DataError("kl_bag_loss: bag index outside dataset");
      const ProbVector p = softmax_inverse_link(clf.scores(ds.row(idx)));
      for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += p[c];
    }
    for (double& v : mean) v /= bag.size();
    for (int c = 0; c < C; ++c) {
      const double g = bag.gamma_hat[c];
      if (g == 0.0) continue;
      const double m = mean[static_cast<std::size_t>(c)];
      if (m > 0.0) {
        total -= g * std::log(m);
      } else {
        note_saturation(saturations);
        total += g * kSaturationCap;
      }
    }
  }
  return total / (C * static_cast<double>(bags.size()));
}

namespace detail {

/// Accumulates the gradient of kl_bag_loss over the given bags into the
/// optimizer buffers: two passes per bag, one for the mean prediction and
/// one for the per-point chain-rule gradients.
inline void kl_accumulate_gradients(const Classifier& clf, Optimizer& opt,
                                    std::span<const Bag> bags, const Dataset& ds,
                                    SaturationCounter* saturations) {
  const int C = clf.num_classes();
  const double norm = 1.0 / (C * static_cast<double>(bags.size()));
  for (const Bag& bag : bags) {
    std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
    for (int idx : bag.indices) {
      const ProbVector p = softmax_inverse_link(clf.scores(ds.row(idx)));
      for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += p[c];
    }
    for (double& v : mean) v /= bag.size();

    // d loss / d mean_c, with saturated terms treated as flat
    std::vector<double> dmean(static_cast<std::size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) {
      const double g = bag.gamma_hat[c];
      if (g == 0.0) continue;
      const double m = mean[static_cast<std::size_t>(c)];
      if (m > 0.0) {
        dmean[static_cast<std::size_t>(c)] = -norm * g / m;
      } else {
        note_saturation(saturations);
      }
    }

    const double inv_size = 1.0 / bag.size();
    for (int idx : bag.indices) {
      const auto acts = forward_cached(clf, ds.row(idx));
      const ProbVector p = softmax_inverse_link(acts.back());
      // softmax Jacobian applied to dmean: p_i (u_i - <p, u>)
      double mean_u = 0.0;
      for (int i = 0; i < C; ++i) mean_u += p[i] * dmean[static_cast<std::size_t>(i)];
      std::vector<double> delta(static_cast<std::size_t>(C));
      for (int i = 0; i < C; ++i)
        delta[static_cast<std::size_t>(i)] = p[i] * (dmean[static_cast<std::size_t>(i)] - mean_u);
      backward_accumulate(clf, acts, std::move(delta), inv_size, opt);
    }
  }
}

}  // namespace detail

/// Trains the KL baseline with minibatches of bags. Metrics use the same
/// schema as the reduction trainer; the epoch objective is the full-data
/// proportion-matching loss.
inline TrainResult train_kl(const LLPInstance& inst, const KLBaselineConfig& cfg,
                            const Dataset* test_data = nullptr) {
  cfg.validate();
  inst.dataset.validate();
  const int n_bags = static_cast<int>(inst.bags.size());
  if (n_bags == 0) throw DataError("train_kl: no bags");
  if (cfg.bags_per_minibatch > n_bags)
    throw ConfigError("train_kl: bags_per_minibatch exceeds the number of bags");
  if (cfg.model.widths.front() != inst.dataset.d ||
      cfg.model.widths.back() != inst.dataset.C)
    throw ConfigError("train_kl: classifier widths must map dataset dim to class count");

  TrainResult result{Classifier::init(cfg.model, cfg.seed), MetricsLog{}, 0};
  result.log.seed = cfg.seed;
  result.log.config_hash = cfg.config_hash();
  result.log.config_echo = cfg.canonical_items();
  detail::Optimizer opt(result.classifier);
  const std::vector<int> decay_epochs = cfg.effective_decay_epochs();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    for (int boundary : decay_epochs)
      if (epoch >= boundary) lr *= cfg.lr_decay_factor;

    std::vector<int> order(static_cast<std::size_t>(n_bags));
    for (int i = 0; i < n_bags; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x500fULL, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    SaturationCounter saturations;
    for (int start = 0; start < n_bags; start += cfg.bags_per_minibatch) {
      const int stop = std::min(start + cfg.bags_per_minibatch, n_bags);
      std::vector<Bag> batch;
      batch.reserve(static_cast<std::size_t>(stop - start));
      for (int k = start; k < stop; ++k)
        batch.push_back(inst.bags[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
      opt.zero_gradients();
      detail::kl_accumulate_gradients(result.classifier, opt, batch, inst.dataset,
                                      &saturations);
      opt.step(result.classifier, lr, cfg.momentum, cfg.weight_decay);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.objective = kl_bag_loss(result.classifier, inst.bags, inst.dataset, &saturations);
    m.regrouped = false;
    m.saturations = saturations.count;
    if (cfg.eval_each_epoch) {
      m.train_acc = evaluate(result.classifier, inst.dataset);
      if (test_data != nullptr) m.test_acc = evaluate(result.classifier, *test_data);
    }
    result.log.epochs.push_back(std::move(m));
  }
  return result;
}

}  // namespace llpfc
