#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "llpfc/common.hpp"
#include "llpfc/simplex.hpp"

namespace llpfc {

/// The interpolation family between the identity and the all-1/C matrix.
/// a = 0 is noise-free; a -> 1 approaches the singular noise-only matrix.
inline ColumnStochasticMatrix noise_family_matrix(int c, double a) {
  if (c < 1) throw ConfigError("noise_family_matrix: C must be >= 1");
  if (!(a >= 0.0 && a < 1.0))
    throw ConfigError("noise_family_matrix: a must lie in [0, 1), the endpoint is singular");
  Matrix t(c, c, a / c);
  for (int i = 0; i < c; ++i) t(i, i) += 1.0 - a;
  return ColumnStochasticMatrix(std::move(t));
}

/// Closed form for ||T^{-1}||_1 of the noise family.
inline double noise_family_inverse_norm(int c, double a) {
  return (1.0 + (1.0 - 2.0 / c) * a) / (1.0 - a);
}

/// Excess 0-1 risk implied by a surrogate excess: sqrt(2) ||T^{-1}||_1
/// sqrt(excess).
inline double excess_risk_bound(const ColumnStochasticMatrix& t, double surrogate_excess) {
  if (surrogate_excess < 0.0)
    throw ConfigError("excess_risk_bound: surrogate excess must be nonnegative");
  const double norm = matrix_one_norm(invert(t));
  return std::sqrt(2.0) * norm * std::sqrt(surrogate_excess);
}

/// Inner 0-1 excess at a point: max_c p_c - p_{min argmax q}. Always in
/// [0, 1], zero whenever q picks one of p's maximizers.
inline double zero_one_inner_excess(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ConfigError("zero_one_inner_excess: size mismatch");
  double max_p = p[0];
  for (int i = 1; i < p.size(); ++i) max_p = std::max(max_p, p[i]);
  return max_p - p[min_argmax(q.span())];
}

/// Random column-stochastic matrix with Dirichlet(1,...,1) columns,
/// rejection-sampled so the 1-norm condition estimate stays below max_cond
/// and the downstream KL and inverse-norm quantities remain meaningful.
inline ColumnStochasticMatrix random_stochastic_matrix(int c, Rng& rng,
                                                       double max_cond = 1e6) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix m(c, c);
    for (int j = 0; j < c; ++j) {
      const ProbVector col = dirichlet_uniform(c, rng);
      for (int i = 0; i < c; ++i) m(i, j) = col[i];
    }
    ColumnStochasticMatrix t(std::move(m));
    try {
      (void)invert(t, max_cond);
      return t;
    } catch (const SingularMatrixError&) {
      continue;
    }
  }
  throw DataError("random_stochastic_matrix: rejection sampling failed");
}

/// Calibration summary for a noise level: the lower bound on the
/// calibration function, the excess-risk coefficient, and the violation
/// counts from the Monte-Carlo sweep over the Appendix inequality chain.
struct CalibrationReport {
  double t_inv_one_norm = 1.0;  // worst (largest) value seen in the sweep
  double bound_coeff = std::sqrt(2.0);
  int C = 0;
  long trials = 0;
  long violations = 0;  // total across all checks
  long violations_calibration = 0;  // theta_lb(excess) <= KL(Tp||Tq)
  long violations_pinsker = 0;      // KL(Tp||Tq) >= 0.5 ||T(p-q)||_1^2
  long violations_norm_chain = 0;   // 0.5||T(p-q)||_1^2 >= 0.5||p-q||_1^2/||T^-1||_1^2
  long violations_zero_one = 0;     // excess <= ||p-q||_1

  double theta_lb(double eps) const {
    return 0.5 * eps * eps / (t_inv_one_norm * t_inv_one_norm);
  }
};

inline constexpr double kInequalityTolerance = 1e-10;

/// Monte-Carlo witness of the inner-risk inequality chain: random interior
/// p, q and a random well-conditioned T per trial; every link of the chain
/// is checked separately.
inline CalibrationReport verify_inner_risk_inequality(int c, long trials, Rng& rng) {
  if (c < 2) throw ConfigError("verify_inner_risk_inequality: C must be >= 2");
  if (trials < 1) throw ConfigError("verify_inner_risk_inequality: trials must be >= 1");

  CalibrationReport report;
  report.C = c;
  report.trials = trials;
  report.t_inv_one_norm = 0.0;

  for (long trial = 0; trial < trials; ++trial) {
    const ProbVector p = dirichlet_uniform(c, rng);
    const ProbVector q = dirichlet_uniform(c, rng);
    const ColumnStochasticMatrix t = random_stochastic_matrix(c, rng);
    const double inv_norm = matrix_one_norm(invert(t));
    report.t_inv_one_norm = std::max(report.t_inv_one_norm, inv_norm);

    const std::vector<double> tp = t.apply(p.span());
    const std::vector<double> tq = t.apply(q.span());
    const double kl = kl_divergence(ProbVector(tp), ProbVector(tq));

    std::vector<double> diff(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) diff[static_cast<std::size_t>(i)] = tp[static_cast<std::size_t>(i)] - tq[static_cast<std::size_t>(i)];
    const double t_diff_l1 = one_norm(diff);
    for (int i = 0; i < c; ++i) diff[static_cast<std::size_t>(i)] = p[i] - q[i];
    const double diff_l1 = one_norm(diff);

    const double excess = zero_one_inner_excess(p, q);
    const double theta = 0.5 * excess * excess / (inv_norm * inv_norm);

    if (theta > kl + kInequalityTolerance) ++report.violations_calibration;
    if (0.5 * t_diff_l1 * t_diff_l1 > kl + kInequalityTolerance) ++report.violations_pinsker;
    if (0.5 * diff_l1 * diff_l1 / (inv_norm * inv_norm) >
        0.5 * t_diff_l1 * t_diff_l1 + kInequalityTolerance)
      ++report.violations_norm_chain;
    if (excess > diff_l1 + kInequalityTolerance) ++report.violations_zero_one;
  }
  report.violations = report.violations_calibration + report.violations_pinsker +
                      report.violations_norm_chain + report.violations_zero_one;
  report.bound_coeff = std::sqrt(2.0) * report.t_inv_one_norm;
  return report;
}

}  // namespace llpfc
