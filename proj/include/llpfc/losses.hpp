#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "llpfc/common.hpp"
#include "llpfc/reduction.hpp"
#include "llpfc/simplex.hpp"

namespace llpfc {

inline constexpr double kSaturationCap = 1e12;

/// Numerically stable softmax (max-shifted).
inline ProbVector softmax_inverse_link(std::span<const double> s) {
  if (s.empty()) throw ConfigError("softmax_inverse_link: empty scores");
  double m = s[0];
  for (double v : s) {
    if (!std::isfinite(v)) throw ConfigError("softmax_inverse_link: non-finite score");
    m = std::max(m, v);
  }
  std::vector<double> z(s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    z[i] = std::exp(s[i] - m);
    total += z[i];
  }
  for (double& v : z) v /= total;
  return ProbVector(z);
}

enum class BaseLoss { LogLoss, SquareLoss };

/// Forward-correction loss composed with the softmax link: the surrogate is
/// evaluated at T * softmax(s). With T = I and the log base this is exactly
/// the usual cross-entropy.
struct CompositeFCLoss {
  ColumnStochasticMatrix T;
  BaseLoss base = BaseLoss::LogLoss;
};

namespace detail {

/// log sum_k exp(s_k - m) for the full score vector; m = max s.
inline double logsumexp_shifted(std::span<const double> s, double m) {
  double total = 0.0;
  for (double v : s) total += std::exp(v - m);
  return std::log(total);
}

}  // namespace detail

/// Loss value. The log base is evaluated entirely in log space: the inner
/// sum sum_j t_{c,j} softmax(s)_j is computed with a shift by the largest
/// score carrying transition mass, so it can vanish only when row c of T is
/// identically zero. That degenerate case returns the finite cap and flags
/// saturation.
inline double fc_loss_value(const CompositeFCLoss& loss, std::span<const double> s, int c,
                            SaturationCounter* saturations = nullptr) {
  const int C = loss.T.size();
  if (static_cast<int>(s.size()) != C) throw ConfigError("fc_loss_value: score size mismatch");
  if (c < 0 || c >= C) throw ConfigError("fc_loss_value: class out of range");
  for (double v : s)
    if (!std::isfinite(v)) throw ConfigError("fc_loss_value: non-finite score");

  if (loss.base == BaseLoss::SquareLoss) {
    const ProbVector p = softmax_inverse_link(s);
    const std::vector<double> q = loss.T.apply(p.span());
    double acc = 0.0;
    for (int k = 0; k < C; ++k) {
      const double target = (k == c) ? 1.0 : 0.0;
      const double d = target - q[static_cast<std::size_t>(k)];
      acc += d * d;
    }
    return acc;
  }

  double m = s[0];
  for (double v : s) m = std::max(m, v);

  // shift by the max score on the support of row c
  double m_row = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < C; ++j)
    if (loss.T(c, j) > 0.0) m_row = std::max(m_row, s[static_cast<std::size_t>(j)]);
  if (!std::isfinite(m_row)) {  // all-zero transition row
    note_saturation(saturations);
    return kSaturationCap;
  }
  double inner = 0.0;
  for (int j = 0; j < C; ++j) {
    const double t = loss.T(c, j);
    if (t == 0.0) continue;  // exp may overflow off the support
    inner += t * std::exp(s[static_cast<std::size_t>(j)] - m_row);
  }
  return -(m_row - m) - std::log(inner) + detail::logsumexp_shifted(s, m);
}

/// Analytic gradient of the composite loss in the scores:
/// d/ds_i = p_i - t_{c,i} p_i / sum_j t_{c,j} p_j for the log base. The
/// ratio is shift-invariant and is computed against the support max, so it
/// stays finite for any scores; an all-zero row sits in the capped constant
/// region and returns the zero gradient.
inline std::vector<double> fc_loss_gradient(const CompositeFCLoss& loss,
                                            std::span<const double> s, int c,
                                            SaturationCounter* saturations = nullptr) {
  const int C = loss.T.size();
  if (static_cast<int>(s.size()) != C)
    throw ConfigError("fc_loss_gradient: score size mismatch");
  if (c < 0 || c >= C) throw ConfigError("fc_loss_gradient: class out of range");

  const ProbVector p = softmax_inverse_link(s);

  if (loss.base == BaseLoss::SquareLoss) {
    // chain rule through q = T p and the softmax Jacobian diag(p) - p p^T
    const std::vector<double> q = loss.T.apply(p.span());
    std::vector<double> dq(static_cast<std::size_t>(C));
    for (int k = 0; k < C; ++k) {
      const double target = (k == c) ? 1.0 : 0.0;
      dq[static_cast<std::size_t>(k)] = 2.0 * (q[static_cast<std::size_t>(k)] - target);
    }
    const std::vector<double> u = loss.T.entries().apply_transpose(dq);
    double mean_u = 0.0;
    for (int i = 0; i < C; ++i) mean_u += p[i] * u[static_cast<std::size_t>(i)];
    std::vector<double> g(static_cast<std::size_t>(C));
    for (int i = 0; i < C; ++i)
      g[static_cast<std::size_t>(i)] = p[i] * (u[static_cast<std::size_t>(i)] - mean_u);
    return g;
  }

  double m_row = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < C; ++j)
    if (loss.T(c, j) > 0.0) m_row = std::max(m_row, s[static_cast<std::size_t>(j)]);
  if (!std::isfinite(m_row)) {
    note_saturation(saturations);
    return std::vector<double>(static_cast<std::size_t>(C), 0.0);
  }
  std::vector<double> zr(static_cast<std::size_t>(C), 0.0);
  double den = 0.0;
  for (int j = 0; j < C; ++j) {
    const double t = loss.T(c, j);
    if (t == 0.0) continue;  // exp may overflow off the support
    zr[static_cast<std::size_t>(j)] = std::exp(s[static_cast<std::size_t>(j)] - m_row);
    den += t * zr[static_cast<std::size_t>(j)];
  }
  std::vector<double> g(static_cast<std::size_t>(C));
  for (int i = 0; i < C; ++i) {
    const double t = loss.T(c, i);
    g[static_cast<std::size_t>(i)] =
        (t == 0.0) ? p[i] : p[i] - t * zr[static_cast<std::size_t>(i)] / den;
  }
  return g;
}

/// Universal Lipschitz bound sqrt(2) together with the exact value of the
/// loss at the zero score, max_c -log((1/C) sum_j t_{c,j}). A transition
/// matrix with an all-zero row makes the latter infinite.
struct LipschitzConstants {
  double bound;
  double lambda0;
};

inline LipschitzConstants lipschitz_constants(const ColumnStochasticMatrix& t) {
  const int C = t.size();
  double worst = 0.0;
  for (int c = 0; c < C; ++c) {
    double row_sum = 0.0;
    for (int j = 0; j < C; ++j) row_sum += t(c, j);
    if (row_sum == 0.0) {
      worst = std::numeric_limits<double>::infinity();
      break;
    }
    worst = std::max(worst, -std::log(row_sum / C));
  }
  return {std::sqrt(2.0), worst};
}

// ---------------------------------------------------------------------------
// Weighted empirical risk
// ---------------------------------------------------------------------------

enum class ReductionMode { Ideal, Uniform, Approx };

/// One training point after noisy-label assignment: the group it belongs
/// to, the noisy class of its bag, and the classifier scores at the point.
struct ScoredPoint {
  int group;
  int noisy_class;
  std::vector<double> scores;
};

/// The weighted empirical risk over all groups. Ideal/Approx weighting puts
/// w_i alpha_i(c) / n_{i,c} on each point of (group i, noisy class c);
/// Uniform weighting puts w_i / n_i, where n_i is the group total.
inline double weighted_empirical_risk(std::span<const GroupNoiseModel> models,
                                      std::span<const ScoredPoint> points,
                                      ReductionMode mode,
                                      SaturationCounter* saturations = nullptr) {
  const int n_groups = static_cast<int>(models.size());
  if (n_groups == 0) throw DataError("weighted_empirical_risk: no groups");
  const int C = models[0].T_hat.size();

  std::vector<std::vector<long long>> counts(
      static_cast<std::size_t>(n_groups), std::vector<long long>(static_cast<std::size_t>(C), 0));
  for (const ScoredPoint& pt : points) {
    if (pt.group < 0 || pt.group >= n_groups || pt.noisy_class < 0 || pt.noisy_class >= C)
      throw DataError("weighted_empirical_risk: point refers to unknown group or class");
    ++counts[static_cast<std::size_t>(pt.group)][static_cast<std::size_t>(pt.noisy_class)];
  }
  std::vector<long long> group_totals(static_cast<std::size_t>(n_groups), 0);
  for (int i = 0; i < n_groups; ++i)
    for (int c = 0; c < C; ++c) {
      const long long n_ic = counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      if (n_ic == 0)
        throw DataError("weighted_empirical_risk: group " + std::to_string(i) +
                        " has no points with noisy class " + std::to_string(c));
      group_totals[static_cast<std::size_t>(i)] += n_ic;
    }

  double risk = 0.0;  // fixed-order accumulation: input order of points
  for (const ScoredPoint& pt : points) {
    const GroupNoiseModel& m = models[static_cast<std::size_t>(pt.group)];
    const double coeff =
        (mode == ReductionMode::Uniform)
            ? m.weight / static_cast<double>(group_totals[static_cast<std::size_t>(pt.group)])
            : m.weight * m.alpha_hat[pt.noisy_class] /
                  static_cast<double>(counts[static_cast<std::size_t>(pt.group)]
                                            [static_cast<std::size_t>(pt.noisy_class)]);
    const CompositeFCLoss loss{m.T_hat, BaseLoss::LogLoss};
    risk += coeff * fc_loss_value(loss, pt.scores, pt.noisy_class, saturations);
  }
  return risk;
}

// ---------------------------------------------------------------------------
// Plain proper losses on the simplex (used by verification code).
// ---------------------------------------------------------------------------

inline double log_loss(const ProbVector& q, int c) {
  if (c < 0 || c >= q.size()) throw ConfigError("log_loss: class out of range");
  const double qc = q[c];
  return qc > 0.0 ? -std::log(qc) : kSaturationCap;
}

inline double square_loss(const ProbVector& q, int c) {
  if (c < 0 || c >= q.size()) throw ConfigError("square_loss: class out of range");
  double acc = 0.0;
  for (int k = 0; k < q.size(); ++k) {
    const double target = (k == c) ? 1.0 : 0.0;
    const double d = target - q[k];
    acc += d * d;
  }
  return acc;
}

/// 0-1 loss with the min-argmax tie rule.
inline double zero_one_loss(const ProbVector& q, int c) {
  return min_argmax(q.span()) == c ? 0.0 : 1.0;
}

}  // namespace llpfc
