#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llpfc/common.hpp"
#include "llpfc/matrix.hpp"

namespace llpfc {

inline constexpr double kSimplexTolerance = 1e-9;   // membership
inline constexpr double kSimplexRepairLimit = 1e-6; // worse drift is rejected

/// Euclidean projection onto the probability simplex, sort-based O(C log C).
inline std::vector<double> project_to_simplex_raw(std::span<const double> v) {
  const int n = static_cast<int>(v.size());
  if (n == 0) throw ConfigError("project_to_simplex: empty input");
  for (double x : v)
    if (!std::isfinite(x)) throw ConfigError("project_to_simplex: non-finite input");

  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (int j = 0; j < n; ++j) {
    css += u[static_cast<std::size_t>(j)];
    const double t = (css - 1.0) / (j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) {
      rho = j + 1;
      tau = t;
    }
  }
  std::vector<double> out(v.size());
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = std::max(v[static_cast<std::size_t>(i)] - tau, 0.0);
  (void)rho;
  return out;
}

/// Point on the C-simplex. Entries within 1e-9 of a valid distribution are
/// accepted as-is, drift up to 1e-6 is repaired by projection, anything
/// worse is rejected.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ConfigError("ProbVector: empty");
    double sum = 0.0;
    double min_entry = std::numeric_limits<double>::infinity();
    for (double v : values_) {
      if (!std::isfinite(v)) throw ConfigError("ProbVector: non-finite entry");
      sum += v;
      min_entry = std::min(min_entry, v);
    }
    const double drift = std::max(std::fabs(sum - 1.0), std::max(-min_entry, 0.0));
    if (drift > kSimplexRepairLimit)
      throw ConfigError("ProbVector: entries are not a probability vector (drift " +
                        std::to_string(drift) + ")");
    if (drift > kSimplexTolerance) values_ = project_to_simplex_raw(values_);
  }

  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> span() const { return values_; }

  static ProbVector uniform(int c) {
    if (c < 1) throw ConfigError("ProbVector::uniform: C must be >= 1");
    return ProbVector(std::vector<double>(static_cast<std::size_t>(c), 1.0 / c));
  }

  bool interior() const {
    for (double v : values_)
      if (v <= 0.0) return false;
    return true;
  }

 private:
  std::vector<double> values_;
};

inline ProbVector project_to_simplex(std::span<const double> v) {
  return ProbVector(project_to_simplex_raw(v));
}

/// C x C noise transition matrix: nonnegative entries, every column sums
/// to 1. Row-stochastic proportion matrices are kept as plain Matrix with
/// each row built from a ProbVector, i.e. the transpose view of this type.
class ColumnStochasticMatrix {
 public:
  explicit ColumnStochasticMatrix(Matrix entries) : m_(std::move(entries)) {
    if (m_.rows() != m_.cols()) throw ConfigError("ColumnStochasticMatrix: square required");
    const int c = m_.rows();
    for (int j = 0; j < c; ++j) {
      double sum = 0.0;
      double min_entry = std::numeric_limits<double>::infinity();
      for (int i = 0; i < c; ++i) {
        const double v = m_(i, j);
        if (!std::isfinite(v)) throw ConfigError("ColumnStochasticMatrix: non-finite entry");
        sum += v;
        min_entry = std::min(min_entry, v);
      }
      const double drift = std::max(std::fabs(sum - 1.0), std::max(-min_entry, 0.0));
      if (drift > kSimplexRepairLimit)
        throw ConfigError("ColumnStochasticMatrix: column " + std::to_string(j) +
                          " is not stochastic (drift " + std::to_string(drift) + ")");
      if (drift > kSimplexTolerance) {
        std::vector<double> col(static_cast<std::size_t>(c));
        for (int i = 0; i < c; ++i) col[static_cast<std::size_t>(i)] = m_(i, j);
        col = project_to_simplex_raw(col);
        for (int i = 0; i < c; ++i) m_(i, j) = col[static_cast<std::size_t>(i)];
      }
    }
  }

  int size() const { return m_.rows(); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Matrix& entries() const { return m_; }

  std::vector<double> apply(std::span<const double> x) const { return m_.apply(x); }

 private:
  Matrix m_;
};

/// Maximum absolute column sum.
inline double matrix_one_norm(const Matrix& m) {
  if (!m.all_finite()) throw ConfigError("matrix_one_norm: non-finite entry");
  double best = 0.0;
  for (int j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (int i = 0; i < m.rows(); ++i) s += std::fabs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

/// Inverse by Gauss-Jordan with partial pivoting. The result is screened by
/// the 1-norm condition estimate; invertibility is an assumption upstream,
/// but empirical proportion matrices can be arbitrarily close to singular.
inline Matrix invert(const Matrix& m, double condition_threshold = 1e12) {
  const int n = m.rows();
  if (m.cols() != n) throw ConfigError("invert: square matrix required");
  if (!m.all_finite()) throw ConfigError("invert: non-finite entry");

  Matrix a = m;
  Matrix inv = Matrix::identity(n);
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
    if (a(pivot, col) == 0.0) throw SingularMatrixError("invert: matrix is singular");
    if (pivot != col)
      for (int j = 0; j < n; ++j) {
        std::swap(a(pivot, j), a(col, j));
        std::swap(inv(pivot, j), inv(col, j));
      }
    const double p = a(col, col);
    for (int j = 0; j < n; ++j) {
      a(col, j) /= p;
      inv(col, j) /= p;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  if (!inv.all_finite()) throw SingularMatrixError("invert: overflow during elimination");
  const double cond = matrix_one_norm(m) * matrix_one_norm(inv);
  if (cond > condition_threshold)
    throw SingularMatrixError("invert: condition estimate " + std::to_string(cond) +
                              " above threshold");
  return inv;
}

inline Matrix invert(const ColumnStochasticMatrix& t, double condition_threshold = 1e12) {
  return invert(t.entries(), condition_threshold);
}

/// KL divergence in nats with the usual conventions: 0 log 0 = 0, and +inf
/// when p puts mass where q does not.
inline double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ConfigError("kl_divergence: size mismatch");
  double acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi == 0.0) continue;
    const double qi = q[i];
    if (qi == 0.0) return std::numeric_limits<double>::infinity();
    acc += pi * std::log(pi / qi);
  }
  return std::max(acc, 0.0);
}

struct SimplexLsqOptions {
  int max_iterations = 10000;
  double first_order_tolerance = 1e-12;  // sup-norm of the projected gradient step
  double duality_gap_tolerance = 1e-9;   // Frank-Wolfe gap certifies f - f* directly
  int stagnation_window = 200;           // iterations without measurable progress
};

namespace detail {

/// One round of active-set refinement for min ||s - G^T a||^2 over the
/// simplex, warm-started from a feasible point: solve the equality-
/// constrained KKT system on the support face, NNLS-style stepping when a
/// free coordinate would cross zero, growing the face on dual violation.
/// Returns the refined point, or nothing when a KKT system is singular
/// beyond repair. The caller re-certifies the result.
inline std::optional<std::vector<double>> active_set_refine(const Matrix& g,
                                                            const ProbVector& s,
                                                            std::vector<double> alpha) {
  const int c = g.rows();
  std::vector<char> free_set(static_cast<std::size_t>(c), 0);
  {
    bool any = false;
    for (int i = 0; i < c; ++i)
      if (alpha[static_cast<std::size_t>(i)] > 1e-12) {
        free_set[static_cast<std::size_t>(i)] = 1;
        any = true;
      } else {
        alpha[static_cast<std::size_t>(i)] = 0.0;
      }
    if (!any) return std::nullopt;
    double sum = 0.0;
    for (double v : alpha) sum += v;
    if (sum <= 0.0) return std::nullopt;
    for (double& v : alpha) v /= sum;
  }

  auto gradient = [&](const std::vector<double>& a) {
    std::vector<double> r = g.apply_transpose(a);
    for (int i = 0; i < c; ++i) r[static_cast<std::size_t>(i)] -= s[i];
    std::vector<double> grad = g.apply(r);
    for (double& v : grad) v *= 2.0;
    return grad;
  };

  const int max_rounds = 50 + 10 * c;
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<int> free_idx;
    for (int i = 0; i < c; ++i)
      if (free_set[static_cast<std::size_t>(i)]) free_idx.push_back(i);
    const int f = static_cast<int>(free_idx.size());

    // bordered normal equations on the face: stationarity plus sum-to-one
    Matrix kkt(f + 1, f + 1);
    std::vector<double> rhs(static_cast<std::size_t>(f + 1), 0.0);
    for (int a = 0; a < f; ++a) {
      for (int b = 0; b < f; ++b) {
        double dot = 0.0;
        for (int j = 0; j < c; ++j)
          dot += g(free_idx[static_cast<std::size_t>(a)], j) *
                 g(free_idx[static_cast<std::size_t>(b)], j);
        kkt(a, b) = 2.0 * dot;
      }
      kkt(a, f) = 1.0;
      kkt(f, a) = 1.0;
      double dot_s = 0.0;
      for (int j = 0; j < c; ++j) dot_s += g(free_idx[static_cast<std::size_t>(a)], j) * s[j];
      rhs[static_cast<std::size_t>(a)] = 2.0 * dot_s;
    }
    rhs[static_cast<std::size_t>(f)] = 1.0;

    std::vector<double> solution;
    try {
      solution = solve_linear(kkt, rhs);
    } catch (const SingularMatrixError&) {
      for (int a = 0; a < f; ++a) kkt(a, a) += 1e-10;  // rank-deficient face
      try {
        solution = solve_linear(kkt, rhs);
      } catch (const SingularMatrixError&) {
        return std::nullopt;
      }
    }

    std::vector<double> target(static_cast<std::size_t>(c), 0.0);
    bool feasible = true;
    for (int a = 0; a < f; ++a) {
      target[static_cast<std::size_t>(free_idx[static_cast<std::size_t>(a)])] =
          solution[static_cast<std::size_t>(a)];
      if (solution[static_cast<std::size_t>(a)] < 0.0) feasible = false;
    }

    if (!feasible) {
      // step toward the face solution until the first coordinate hits zero
      double theta = 1.0;
      for (int i : free_idx) {
        const std::size_t k = static_cast<std::size_t>(i);
        if (target[k] < alpha[k]) {
          const double denom = alpha[k] - target[k];
          if (denom > 0.0 && target[k] <= 0.0)
            theta = std::min(theta, alpha[k] / denom);
        }
      }
      for (int i : free_idx) {
        const std::size_t k = static_cast<std::size_t>(i);
        alpha[k] += theta * (target[k] - alpha[k]);
        if (alpha[k] <= 1e-14) {
          alpha[k] = 0.0;
          free_set[k] = 0;
        }
      }
      bool any = false;
      for (char v : free_set) any = any || v;
      if (!any) return std::nullopt;
      continue;
    }

    alpha = target;
    // dual feasibility: off-face gradient must not undercut the face level
    const std::vector<double> grad = gradient(alpha);
    double mu = 0.0;
    for (int i : free_idx) mu += grad[static_cast<std::size_t>(i)];
    mu /= f;
    int worst = -1;
    double worst_violation = 1e-11;
    for (int i = 0; i < c; ++i) {
      if (free_set[static_cast<std::size_t>(i)]) continue;
      const double violation = mu - grad[static_cast<std::size_t>(i)];
      if (violation > worst_violation) {
        worst_violation = violation;
        worst = i;
      }
    }
    if (worst < 0) return alpha;
    free_set[static_cast<std::size_t>(worst)] = 1;
  }
  return std::nullopt;
}

}  // namespace detail

/// argmin over the simplex of ||s - G^T a||_2^2, by FISTA with projection
/// and adaptive restart. The objective is convex on a compact set; the
/// fixed step 1/L uses the 1-norm bound on the spectral radius of 2 G G^T.
/// Termination: projected-gradient residual, or the Frank-Wolfe gap
/// max_v <grad, a - v> (an upper bound on the objective suboptimality), or
/// objective progress dropping below double precision, whichever is first.
inline ProbVector solve_simplex_least_squares(const Matrix& g, const ProbVector& s,
                                              const SimplexLsqOptions& opts = {}) {
  const int c = g.rows();
  if (g.cols() != c || s.size() != c)
    throw ConfigError("solve_simplex_least_squares: dimension mismatch");
  if (!g.all_finite()) throw ConfigError("solve_simplex_least_squares: non-finite G");

  const Matrix gram = g * g.transpose();  // G G^T, symmetric PSD
  double lipschitz = 2.0 * matrix_one_norm(gram);
  if (lipschitz <= 0.0) lipschitz = 1.0;  // G == 0: objective is constant
  const double step = 1.0 / lipschitz;

  auto gradient = [&](const std::vector<double>& a) {
    // 2 G (G^T a - s)
    std::vector<double> r = g.apply_transpose(a);
    for (int i = 0; i < c; ++i) r[static_cast<std::size_t>(i)] -= s[i];
    std::vector<double> grad = g.apply(r);
    for (double& v : grad) v *= 2.0;
    return grad;
  };
  auto objective = [&](const std::vector<double>& a) {
    std::vector<double> r = g.apply_transpose(a);
    double acc = 0.0;
    for (int i = 0; i < c; ++i) {
      const double d = s[i] - r[static_cast<std::size_t>(i)];
      acc += d * d;
    }
    return acc;
  };
  // residual or Frank-Wolfe certificate at a feasible point
  auto certify = [&](const std::vector<double>& a) -> bool {
    const std::vector<double> grad = gradient(a);
    std::vector<double> probe(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i)
      probe[static_cast<std::size_t>(i)] =
          a[static_cast<std::size_t>(i)] - step * grad[static_cast<std::size_t>(i)];
    probe = project_to_simplex_raw(probe);
    double residual = 0.0;
    double grad_dot = 0.0, grad_min = grad[0];
    for (int i = 0; i < c; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      residual = std::max(residual, std::fabs(probe[k] - a[k]));
      grad_dot += grad[k] * a[k];
      grad_min = std::min(grad_min, grad[k]);
    }
    return residual <= opts.first_order_tolerance ||
           grad_dot - grad_min <= opts.duality_gap_tolerance;
  };
  // exact refinement on the support face; used when the first-order loop
  // inches along a nearly singular direction without certifying
  auto polish = [&](const std::vector<double>& a) -> std::optional<std::vector<double>> {
    std::optional<std::vector<double>> refined = detail::active_set_refine(g, s, a);
    if (!refined.has_value()) return std::nullopt;
    for (double& v : *refined) v = std::max(v, 0.0);
    if (certify(*refined)) return refined;
    return std::nullopt;
  };

  std::vector<double> alpha(static_cast<std::size_t>(c), 1.0 / c);
  std::vector<double> y = alpha;
  double t = 1.0;
  std::vector<double> best = alpha;
  double best_obj = objective(alpha);
  double progress_mark = best_obj;
  int last_progress_iter = 0;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    // first-order optimality: the unit-step projected gradient residual
    std::vector<double> grad = gradient(alpha);
    std::vector<double> probe(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i)
      probe[static_cast<std::size_t>(i)] = alpha[static_cast<std::size_t>(i)] -
                                           step * grad[static_cast<std::size_t>(i)];
    probe = project_to_simplex_raw(probe);
    double residual = 0.0;
    for (int i = 0; i < c; ++i)
      residual = std::max(residual, std::fabs(probe[static_cast<std::size_t>(i)] -
                                              alpha[static_cast<std::size_t>(i)]));
    if (residual <= opts.first_order_tolerance) return ProbVector(alpha);

    // Frank-Wolfe gap: f(alpha) - f* <= <grad, alpha> - min_i grad_i
    double grad_dot = 0.0, grad_min = grad[0];
    for (int i = 0; i < c; ++i) {
      grad_dot += grad[static_cast<std::size_t>(i)] * alpha[static_cast<std::size_t>(i)];
      grad_min = std::min(grad_min, grad[static_cast<std::size_t>(i)]);
    }
    if (grad_dot - grad_min <= opts.duality_gap_tolerance) return ProbVector(alpha);

    if (iter >= 1000 && iter % 500 == 0) {
      const std::optional<std::vector<double>> refined = polish(best);
      if (refined.has_value()) return ProbVector(*refined);
    }

    std::vector<double> grad_y = gradient(y);
    std::vector<double> next(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i)
      next[static_cast<std::size_t>(i)] =
          y[static_cast<std::size_t>(i)] - step * grad_y[static_cast<std::size_t>(i)];
    next = project_to_simplex_raw(next);

    // adaptive restart keeps the accelerated scheme from oscillating and
    // recovers a linear rate on least-squares objectives
    double momentum_dot = 0.0;
    for (int i = 0; i < c; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      momentum_dot += grad_y[k] * (next[k] - alpha[k]);
    }
    if (momentum_dot > 0.0) {
      t = 1.0;
      y = next;
    } else {
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      for (int i = 0; i < c; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        y[k] = next[k] + ((t - 1.0) / t_next) * (next[k] - alpha[k]);
      }
      t = t_next;
    }
    alpha = std::move(next);

    const double obj = objective(alpha);
    if (obj < best_obj) {
      best_obj = obj;
      best = alpha;
    }
    // progress has fallen below what doubles can resolve: converged
    if (progress_mark - best_obj > 1e-16 * std::max(1.0, progress_mark)) {
      progress_mark = best_obj;
      last_progress_iter = iter;
    } else if (iter - last_progress_iter >= opts.stagnation_window) {
      const std::optional<std::vector<double>> refined = polish(best);
      return refined.has_value() ? ProbVector(*refined) : ProbVector(best);
    }
  }
  const std::optional<std::vector<double>> refined = polish(best);
  if (refined.has_value()) return ProbVector(*refined);
  throw ConvergenceFailure("solve_simplex_least_squares: iteration cap reached", best);
}

// ---------------------------------------------------------------------------
// Small vector helpers shared by the calibration and loss modules.
// ---------------------------------------------------------------------------

/// Uniform draw on the simplex (Dirichlet(1,...,1)) by exponential spacings.
inline ProbVector dirichlet_uniform(int c, Rng& rng) {
  if (c < 1) throw ConfigError("dirichlet_uniform: C must be >= 1");
  std::vector<double> e(static_cast<std::size_t>(c));
  double total = 0.0;
  for (double& v : e) {
    v = rng.exponential();
    total += v;
  }
  if (total == 0.0) return ProbVector::uniform(c);
  for (double& v : e) v /= total;
  return ProbVector(e);
}

inline double one_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::fabs(x);
  return s;
}

/// min{argmax v}: the paper's deterministic tie rule for 0-1 prediction.
inline int min_argmax(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  return best;
}

}  // namespace llpfc
