#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llpfc/bag_model.hpp"
#include "llpfc/common.hpp"
#include "llpfc/matrix.hpp"
#include "llpfc/simplex.hpp"

namespace llpfc {

/// Partition of NC bags into N groups of C. groups[i][c] is the index of
/// the bag holding noisy label c in group i; across the whole grouping the
/// entries cover exactly N*C distinct bags.
struct Grouping {
  std::vector<std::vector<int>> groups;
  int epoch_created = 0;

  int group_count() const { return static_cast<int>(groups.size()); }
};

/// One group's learning-with-label-noise model: estimated transition
/// matrix, noisy prior, per-group clean-prior estimate, and the bags that
/// supply each noisy class.
struct GroupNoiseModel {
  ColumnStochasticMatrix T_hat;
  ProbVector alpha_hat;
  ProbVector sigma_hat_i;
  std::vector<int> bag_refs;
  double weight = 0.0;
};

/// Uniform random partition. When C does not divide n_bags, a uniformly
/// chosen subset of the largest multiple of C is grouped and the remainder
/// sits out until the next regrouping.
inline Grouping random_partition(int n_bags, int c, Rng& rng, int epoch = 0) {
  if (c < 1) throw ConfigError("random_partition: C must be >= 1");
  if (n_bags < c)
    throw ConfigError("random_partition: need at least C bags, got " +
                      std::to_string(n_bags));
  std::vector<int> order(static_cast<std::size_t>(n_bags));
  for (int i = 0; i < n_bags; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  const int n_groups = n_bags / c;
  Grouping g;
  g.epoch_created = epoch;
  g.groups.resize(static_cast<std::size_t>(n_groups));
  for (int i = 0; i < n_groups; ++i)
    g.groups[static_cast<std::size_t>(i)] =
        std::vector<int>(order.begin() + static_cast<std::ptrdiff_t>(i) * c,
                         order.begin() + static_cast<std::ptrdiff_t>(i + 1) * c);
  return g;
}

namespace detail {

/// Proportion matrix with row c1 = gamma of the bag holding noisy label c1.
inline Matrix gamma_matrix(std::span<const ProbVector> gammas) {
  const int c = static_cast<int>(gammas.size());
  Matrix g(c, c);
  for (int i = 0; i < c; ++i) {
    if (gammas[static_cast<std::size_t>(i)].size() != c)
      throw ConfigError("group proportions must be C vectors of length C");
    for (int j = 0; j < c; ++j) g(i, j) = gammas[static_cast<std::size_t>(i)][j];
  }
  return g;
}

/// T(c1,c2) = gamma_{c1}(c2) * alpha(c1) / sigma(c2), with columns where
/// sigma(c2) vanishes set uniform: a class absent from the whole group
/// would otherwise produce 0/0.
inline ColumnStochasticMatrix transition_from_parts(const Matrix& gamma,
                                                    const ProbVector& alpha,
                                                    const ProbVector& sigma) {
  const int c = gamma.rows();
  Matrix t(c, c);
  for (int c2 = 0; c2 < c; ++c2) {
    if (sigma[c2] == 0.0) {
      for (int c1 = 0; c1 < c; ++c1) t(c1, c2) = 1.0 / c;
      continue;
    }
    for (int c1 = 0; c1 < c; ++c1) t(c1, c2) = gamma(c1, c2) * alpha[c1] / sigma[c2];
  }
  return ColumnStochasticMatrix(std::move(t));
}

}  // namespace detail

/// Ideal construction from known governing proportions and the true clean
/// prior: alpha solves Gamma^T alpha = sigma and must land strictly inside
/// the simplex (the hull condition).
inline GroupNoiseModel build_ideal(std::span<const ProbVector> group_gammas,
                                   const ProbVector& sigma) {
  const int c = static_cast<int>(group_gammas.size());
  if (sigma.size() != c) throw ConfigError("build_ideal: sigma size mismatch");
  if (!sigma.interior())
    throw ConfigError("build_ideal: clean prior must be strictly positive");
  const Matrix gamma = detail::gamma_matrix(group_gammas);

  std::vector<double> alpha_raw;
  try {
    alpha_raw = solve_linear(gamma.transpose(), sigma.values());
  } catch (const SingularMatrixError& e) {
    throw AssumptionViolation(AssumptionViolation::Kind::Singular,
                              std::string("build_ideal: proportion matrix singular: ") +
                                  e.what());
  }
  double sum = 0.0;
  for (double a : alpha_raw) {
    if (!std::isfinite(a) || a <= 0.0)
      throw AssumptionViolation(AssumptionViolation::Kind::PriorOutsideHull,
                                "build_ideal: clean prior outside the open hull of the "
                                "group proportions");
    sum += a;
  }
  if (std::fabs(sum - 1.0) > kSimplexRepairLimit)
    throw AssumptionViolation(AssumptionViolation::Kind::PriorOutsideHull,
                              "build_ideal: implied noisy prior does not normalize");
  const ProbVector alpha(alpha_raw);

  GroupNoiseModel model{detail::transition_from_parts(gamma, alpha, sigma), alpha, sigma,
                        {}, 0.0};
  return model;
}

/// Uniform heuristic: the noisy prior is read off the bag-size shares.
inline GroupNoiseModel build_uniform(std::span<const Bag> group_bags) {
  const int c = static_cast<int>(group_bags.size());
  std::vector<ProbVector> gammas;
  gammas.reserve(group_bags.size());
  long long total = 0;
  for (const Bag& b : group_bags) {
    if (b.size() == 0) throw DataError("build_uniform: empty bag");
    total += b.size();
    gammas.push_back(b.gamma_hat);
  }
  std::vector<double> alpha_raw(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i)
    alpha_raw[static_cast<std::size_t>(i)] =
        static_cast<double>(group_bags[static_cast<std::size_t>(i)].size()) /
        static_cast<double>(total);
  const ProbVector alpha(alpha_raw);
  const Matrix gamma = detail::gamma_matrix(gammas);
  const ProbVector sigma_i(gamma.apply_transpose(alpha.span()));

  return GroupNoiseModel{detail::transition_from_parts(gamma, alpha, sigma_i), alpha,
                         sigma_i, {}, 0.0};
}

/// Approximate heuristic: the noisy prior is the simplex-constrained least
/// squares fit of the pooled prior estimate.
inline GroupNoiseModel build_approx(std::span<const Bag> group_bags,
                                    const ProbVector& sigma_hat_global) {
  const int c = static_cast<int>(group_bags.size());
  if (sigma_hat_global.size() != c) throw ConfigError("build_approx: sigma size mismatch");
  std::vector<ProbVector> gammas;
  gammas.reserve(group_bags.size());
  for (const Bag& b : group_bags) {
    if (b.size() == 0) throw DataError("build_approx: empty bag");
    gammas.push_back(b.gamma_hat);
  }
  const Matrix gamma = detail::gamma_matrix(gammas);
  const ProbVector alpha = solve_simplex_least_squares(gamma, sigma_hat_global);
  const ProbVector sigma_i(gamma.apply_transpose(alpha.span()));

  return GroupNoiseModel{detail::transition_from_parts(gamma, alpha, sigma_i), alpha,
                         sigma_i, {}, 0.0};
}

/// Group weights proportional to the harmonic mean of per-noisy-class
/// counts; minimizes the sample-size term of the generalization bound.
inline ProbVector optimal_weights(std::span<const std::vector<int>> bag_sizes_per_group) {
  const int n = static_cast<int>(bag_sizes_per_group.size());
  if (n == 0) throw ConfigError("optimal_weights: no groups");
  std::vector<double> hm(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::vector<int>& sizes = bag_sizes_per_group[static_cast<std::size_t>(i)];
    if (sizes.empty()) throw ConfigError("optimal_weights: empty group");
    double inv_sum = 0.0;
    for (int s : sizes) {
      if (s < 1) throw ConfigError("optimal_weights: sizes must be >= 1");
      inv_sum += 1.0 / s;
    }
    hm[static_cast<std::size_t>(i)] = static_cast<double>(sizes.size()) / inv_sum;
    total += hm[static_cast<std::size_t>(i)];
  }
  for (double& w : hm) w /= total;
  return ProbVector(hm);
}

/// Debug dump, one JSON record per group.
inline void dump_group_models(std::ostream& out, std::span<const GroupNoiseModel> models) {
  for (std::size_t i = 0; i < models.size(); ++i) {
    const GroupNoiseModel& m = models[i];
    const int c = m.T_hat.size();
    std::vector<std::vector<double>> t(static_cast<std::size_t>(c),
                                       std::vector<double>(static_cast<std::size_t>(c)));
    for (int r = 0; r < c; ++r)
      for (int q = 0; q < c; ++q) t[static_cast<std::size_t>(r)][static_cast<std::size_t>(q)] = m.T_hat(r, q);
    nlohmann::json rec{{"group", i},
                       {"T", t},
                       {"alpha", m.alpha_hat.values()},
                       {"sigma_i", m.sigma_hat_i.values()},
                       {"bags", m.bag_refs},
                       {"weight", m.weight}};
    out << rec.dump() << '\n';
  }
}

}  // namespace llpfc
