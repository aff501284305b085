#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "llpfc/baselines.hpp"
#include "llpfc/calibration.hpp"
#include "llpfc/common.hpp"
#include "llpfc/losses.hpp"
#include "llpfc/simplex.hpp"
#include "llpfc/trainer.hpp"

namespace llpfc {

// Self-checks behind the `verify` subcommand: each returns a small report
// and a pass flag; the CLI aggregates them into one JSON document.

struct ClosedFormNormCheck {
  int checks = 0;
  double max_abs_error = 0.0;
  bool pass = true;
};

/// ||T^{-1}||_1 of the noise family against its closed form, over
/// C in {2,3,10} and a in {0, 0.1, ..., 0.9}. `reference_perturbation` is a
/// testing hook that shifts the closed form to prove the check can fail.
inline ClosedFormNormCheck check_closed_form_norm(double reference_perturbation = 0.0) {
  ClosedFormNormCheck result;
  for (int c : {2, 3, 10}) {
    for (int step = 0; step <= 9; ++step) {
      const double a = 0.1 * step;
      const double computed = matrix_one_norm(invert(noise_family_matrix(c, a)));
      const double reference = noise_family_inverse_norm(c, a) + reference_perturbation;
      result.max_abs_error = std::max(result.max_abs_error, std::fabs(computed - reference));
      ++result.checks;
    }
  }
  result.pass = result.max_abs_error < 1e-9;
  return result;
}

struct LipschitzCheck {
  long samples = 0;
  double max_gradient_norm = 0.0;
  bool pass = true;
};

/// Gradient 2-norms of the composite FC loss stay below sqrt(2).
inline LipschitzCheck check_lipschitz_bound(long samples, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("check_lipschitz_bound: samples must be >= 1");
  Rng rng(mix_seed(seed, 0x11b5ULL));
  LipschitzCheck result;
  result.samples = samples;
  for (long k = 0; k < samples; ++k) {
    const int c = 2 + rng.uniform_int(9);  // C in 2..10
    const ColumnStochasticMatrix t = random_stochastic_matrix(c, rng);
    std::vector<double> s(static_cast<std::size_t>(c));
    for (double& v : s) v = 8.0 * rng.uniform01() - 4.0;
    const int label = rng.uniform_int(c);
    const CompositeFCLoss loss{t, BaseLoss::LogLoss};
    const std::vector<double> g = fc_loss_gradient(loss, s, label);
    double norm_sq = 0.0;
    for (double v : g) norm_sq += v * v;
    result.max_gradient_norm = std::max(result.max_gradient_norm, std::sqrt(norm_sq));
  }
  result.pass = result.max_gradient_norm <= std::sqrt(2.0) + 1e-9;
  return result;
}

struct GradientCheck {
  int instances = 0;
  double max_relative_error = 0.0;
  bool pass = true;
};

namespace detail {

/// Norm-relative error with the denominator floored at 1e-2: instances with
/// a near-zero true gradient are held to the matching absolute scale, below
/// the noise floor of the central-difference reference itself.
inline double relative_vector_error(std::span<const double> got,
                                    std::span<const double> want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = got[i] - want[i];
    num += d * d;
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-2);
}

}  // namespace detail

/// Analytic FC-loss gradient against central differences in the scores.
inline GradientCheck check_fc_gradient(int instances, std::uint64_t seed,
                                       double h = 1e-6) {
  Rng rng(mix_seed(seed, 0x6a4dULL));
  GradientCheck result;
  result.instances = instances;
  for (int k = 0; k < instances; ++k) {
    const int c = 2 + rng.uniform_int(9);
    const ColumnStochasticMatrix t = random_stochastic_matrix(c, rng);
    std::vector<double> s(static_cast<std::size_t>(c));
    for (double& v : s) v = 8.0 * rng.uniform01() - 4.0;
    const int label = rng.uniform_int(c);
    const CompositeFCLoss loss{t, BaseLoss::LogLoss};

    const std::vector<double> analytic = fc_loss_gradient(loss, s, label);
    std::vector<double> numeric(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
      std::vector<double> plus = s, minus = s;
      plus[static_cast<std::size_t>(i)] += h;
      minus[static_cast<std::size_t>(i)] -= h;
      numeric[static_cast<std::size_t>(i)] =
          (fc_loss_value(loss, plus, label) - fc_loss_value(loss, minus, label)) / (2.0 * h);
    }
    result.max_relative_error =
        std::max(result.max_relative_error, detail::relative_vector_error(analytic, numeric));
  }
  result.pass = result.max_relative_error < 1e-5;
  return result;
}

/// Analytic KL-baseline gradient (in the classifier parameters) against
/// central differences of kl_bag_loss.
inline GradientCheck check_kl_gradient(int instances, std::uint64_t seed, double h = 1e-6) {
  Rng rng(mix_seed(seed, 0x1235ULL));
  GradientCheck result;
  result.instances = instances;
  for (int k = 0; k < instances; ++k) {
    const int c = 2 + rng.uniform_int(2);  // 2 or 3 classes
    const int d = 2;
    const int n = 8;
    Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.C = c;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) ds.features.push_back(2.0 * rng.uniform01() - 1.0);
      ds.labels.push_back(rng.uniform_int(c));
    }
    std::vector<Bag> bags;
    {
      std::vector<int> first, second;
      for (int i = 0; i < n / 2; ++i) first.push_back(i);
      for (int i = n / 2; i < n; ++i) second.push_back(i);
      bags.push_back(Bag{first, dirichlet_uniform(c, rng), std::nullopt});
      bags.push_back(Bag{second, dirichlet_uniform(c, rng), std::nullopt});
    }

    Classifier clf = Classifier::init(ClassifierSpec{{d, c}}, rng.next_u64());
    for (Classifier::Layer& layer : clf.layers) {
      for (int i = 0; i < layer.w.rows(); ++i)
        for (int j = 0; j < layer.w.cols(); ++j) layer.w(i, j) = 2.0 * rng.uniform01() - 1.0;
      for (double& b : layer.b) b = 2.0 * rng.uniform01() - 1.0;
    }

    detail::Optimizer opt(clf);
    opt.zero_gradients();
    detail::kl_accumulate_gradients(clf, opt, bags, ds, nullptr);

    std::vector<double> analytic, numeric;
    for (std::size_t l = 0; l < clf.layers.size(); ++l) {
      Classifier::Layer& layer = clf.layers[l];
      for (int i = 0; i < layer.w.rows(); ++i)
        for (int j = 0; j < layer.w.cols(); ++j) {
          analytic.push_back(opt.grad_w[l](i, j));
          const double keep = layer.w(i, j);
          layer.w(i, j) = keep + h;
          const double up = kl_bag_loss(clf, bags, ds);
          layer.w(i, j) = keep - h;
          const double down = kl_bag_loss(clf, bags, ds);
          layer.w(i, j) = keep;
          numeric.push_back((up - down) / (2.0 * h));
        }
      for (std::size_t i = 0; i < layer.b.size(); ++i) {
        analytic.push_back(opt.grad_b[l][i]);
        const double keep = layer.b[i];
        layer.b[i] = keep + h;
        const double up = kl_bag_loss(clf, bags, ds);
        layer.b[i] = keep - h;
        const double down = kl_bag_loss(clf, bags, ds);
        layer.b[i] = keep;
        numeric.push_back((up - down) / (2.0 * h));
      }
    }
    result.max_relative_error =
        std::max(result.max_relative_error, detail::relative_vector_error(analytic, numeric));
  }
  result.pass = result.max_relative_error < 1e-5;
  return result;
}

struct UnbiasednessCheck {
  long resamples = 0;
  double exact_risk = 0.0;
  double monte_carlo_mean = 0.0;
  double standard_error = 0.0;
  bool pass = true;
};

/// The weighted empirical risk is an unbiased estimate of the aggregate
/// risk: discrete feature space with three atoms, two groups with known
/// transition matrices, exact risk computed by enumeration.
inline UnbiasednessCheck check_unbiasedness(long resamples, std::uint64_t seed) {
  if (resamples < 2) throw ConfigError("check_unbiasedness: resamples must be >= 2");
  const int C = 2;
  const int atoms = 3;
  // clean model: prior sigma and class-conditional atom distributions
  const std::vector<double> sigma{0.6, 0.4};
  const std::vector<std::vector<double>> p_class{{0.5, 0.3, 0.2}, {0.1, 0.4, 0.5}};
  // scores assigned to each atom by a fixed classifier
  const std::vector<std::vector<double>> atom_scores{{0.4, -0.2}, {0.0, 0.1}, {-0.7, 0.8}};

  std::vector<ColumnStochasticMatrix> ts;
  {
    Matrix t1(2, 2);
    t1(0, 0) = 0.8; t1(0, 1) = 0.3; t1(1, 0) = 0.2; t1(1, 1) = 0.7;
    Matrix t2(2, 2);
    t2(0, 0) = 0.6; t2(0, 1) = 0.2; t2(1, 0) = 0.4; t2(1, 1) = 0.8;
    ts.emplace_back(std::move(t1));
    ts.emplace_back(std::move(t2));
  }
  const std::vector<std::vector<int>> n_ic{{5, 7}, {6, 4}};
  const std::vector<double> w{0.5, 0.5};

  std::vector<GroupNoiseModel> models;
  std::vector<std::vector<std::vector<double>>> atom_dist(2);  // [group][class][atom]
  for (int i = 0; i < 2; ++i) {
    std::vector<double> alpha(C, 0.0);
    for (int ct = 0; ct < C; ++ct)
      for (int y = 0; y < C; ++y) alpha[static_cast<std::size_t>(ct)] += ts[static_cast<std::size_t>(i)](ct, y) * sigma[static_cast<std::size_t>(y)];
    atom_dist[static_cast<std::size_t>(i)].resize(C);
    for (int ct = 0; ct < C; ++ct) {
      std::vector<double> dist(atoms, 0.0);
      for (int x = 0; x < atoms; ++x)
        for (int y = 0; y < C; ++y)
          dist[static_cast<std::size_t>(x)] += sigma[static_cast<std::size_t>(y)] *
                                               p_class[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] *
                                               ts[static_cast<std::size_t>(i)](ct, y) /
                                               alpha[static_cast<std::size_t>(ct)];
      atom_dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(ct)] = dist;
    }
    models.push_back(GroupNoiseModel{ts[static_cast<std::size_t>(i)], ProbVector(alpha),
                                     ProbVector(sigma), {}, w[static_cast<std::size_t>(i)]});
  }

  // exact aggregate risk by enumeration over atoms
  double exact = 0.0;
  for (int i = 0; i < 2; ++i) {
    const CompositeFCLoss loss{models[static_cast<std::size_t>(i)].T_hat, BaseLoss::LogLoss};
    for (int ct = 0; ct < C; ++ct)
      for (int x = 0; x < atoms; ++x)
        exact += w[static_cast<std::size_t>(i)] *
                 models[static_cast<std::size_t>(i)].alpha_hat[ct] *
                 atom_dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(ct)][static_cast<std::size_t>(x)] *
                 fc_loss_value(loss, atom_scores[static_cast<std::size_t>(x)], ct);
  }

  Rng rng(mix_seed(seed, 0x0b1aULL));
  double sum = 0.0, sum_sq = 0.0;
  for (long r = 0; r < resamples; ++r) {
    std::vector<ScoredPoint> points;
    for (int i = 0; i < 2; ++i)
      for (int ct = 0; ct < C; ++ct)
        for (int j = 0; j < n_ic[static_cast<std::size_t>(i)][static_cast<std::size_t>(ct)]; ++j) {
          const int x = rng.categorical(atom_dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(ct)]);
          points.push_back(ScoredPoint{i, ct, atom_scores[static_cast<std::size_t>(x)]});
        }
    const double risk = weighted_empirical_risk(models, points, ReductionMode::Ideal);
    sum += risk;
    sum_sq += risk * risk;
  }
  UnbiasednessCheck result;
  result.resamples = resamples;
  result.exact_risk = exact;
  result.monte_carlo_mean = sum / resamples;
  const double variance =
      std::max(0.0, (sum_sq - sum * sum / resamples) / (resamples - 1));
  result.standard_error = std::sqrt(variance / resamples);
  result.pass =
      std::fabs(result.monte_carlo_mean - exact) <= 3.0 * result.standard_error;
  return result;
}

}  // namespace llpfc
