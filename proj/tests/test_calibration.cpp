#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "llpfc/calibration.hpp"

using namespace llpfc;

TEST(NoiseFamily, EndpointsAndEntries) {
  const ColumnStochasticMatrix id = noise_family_matrix(3, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(id(i, j), i == j ? 1.0 : 0.0);

  const ColumnStochasticMatrix half = noise_family_matrix(2, 0.5);
  EXPECT_DOUBLE_EQ(half(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(half(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(half(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(half(1, 1), 0.75);

  EXPECT_THROW(noise_family_matrix(2, 1.0), ConfigError);
  EXPECT_THROW(noise_family_matrix(2, -0.1), ConfigError);
}

TEST(NoiseFamily, InverseNormMatchesClosedForm) {
  for (int c : {2, 3, 10}) {
    for (int step = 0; step <= 9; ++step) {
      const double a = 0.1 * step;
      const double computed = matrix_one_norm(invert(noise_family_matrix(c, a)));
      EXPECT_NEAR(computed, noise_family_inverse_norm(c, a), 1e-9)
          << "C=" << c << " a=" << a;
    }
  }
  EXPECT_NEAR(matrix_one_norm(invert(noise_family_matrix(10, 0.5))), 2.8, 1e-9);
}

TEST(ExcessRiskBound, KnownValues) {
  EXPECT_DOUBLE_EQ(excess_risk_bound(noise_family_matrix(4, 0.3), 0.0), 0.0);
  EXPECT_NEAR(excess_risk_bound(ColumnStochasticMatrix(Matrix::identity(2)), 0.5), 1.0,
              1e-12);
  EXPECT_NEAR(excess_risk_bound(noise_family_matrix(10, 0.5), 0.02),
              std::sqrt(2.0) * 2.8 * std::sqrt(0.02), 1e-12);
  EXPECT_NEAR(excess_risk_bound(noise_family_matrix(10, 0.5), 0.02), 0.56, 1e-9);
  EXPECT_THROW(excess_risk_bound(ColumnStochasticMatrix(Matrix::identity(2)), -1.0),
               ConfigError);
}

TEST(ZeroOneInnerExcess, KnownValues) {
  const ProbVector p(std::vector<double>{0.7, 0.3});
  EXPECT_DOUBLE_EQ(zero_one_inner_excess(p, p), 0.0);
  EXPECT_NEAR(zero_one_inner_excess(p, ProbVector(std::vector<double>{0.2, 0.8})), 0.4, 1e-15);
  const ProbVector uniform(std::vector<double>{0.25, 0.25, 0.25, 0.25});
  const ProbVector q(std::vector<double>{0.9, 0.05, 0.03, 0.02});
  EXPECT_DOUBLE_EQ(zero_one_inner_excess(uniform, q), 0.0);
}

TEST(ZeroOneInnerExcess, BoundedByOneNorm) {
  Rng rng(61);
  for (int trial = 0; trial < 5000; ++trial) {
    const int c = 2 + rng.uniform_int(9);
    const ProbVector p = dirichlet_uniform(c, rng);
    const ProbVector q = dirichlet_uniform(c, rng);
    std::vector<double> diff(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) diff[static_cast<std::size_t>(i)] = p[i] - q[i];
    EXPECT_LE(zero_one_inner_excess(p, q), one_norm(diff) + 1e-15);
  }
}

TEST(InnerRiskInequality, HandComputedChainLink) {
  // T = I, p = (0.9, 0.1), q = (0.1, 0.9): excess 0.8, KL = 0.8 log 9
  const ProbVector p(std::vector<double>{0.9, 0.1});
  const ProbVector q(std::vector<double>{0.1, 0.9});
  const double excess = zero_one_inner_excess(p, q);
  EXPECT_NEAR(excess, 0.8, 1e-15);
  const double kl = kl_divergence(p, q);
  EXPECT_NEAR(kl, 0.8 * std::log(9.0), 1e-12);
  EXPECT_GE(kl, 0.5 * excess * excess);  // theta lower bound with ||I^{-1}||_1 = 1
}

TEST(InnerRiskInequality, SweepReportsNoViolations) {
  for (int c : {2, 3, 10}) {
    Rng rng(1000 + c);
    const CalibrationReport r = verify_inner_risk_inequality(c, 2000, rng);
    EXPECT_EQ(r.violations, 0) << "C=" << c;
    EXPECT_EQ(r.violations_calibration, 0);
    EXPECT_EQ(r.violations_pinsker, 0);
    EXPECT_EQ(r.violations_norm_chain, 0);
    EXPECT_EQ(r.violations_zero_one, 0);
    EXPECT_GE(r.t_inv_one_norm, 1.0);  // stochastic matrices cannot contract below this
    EXPECT_NEAR(r.bound_coeff, std::sqrt(2.0) * r.t_inv_one_norm, 1e-12);
  }
}

TEST(InnerRiskInequality, RejectsBadArguments) {
  Rng rng(1);
  EXPECT_THROW(verify_inner_risk_inequality(1, 10, rng), ConfigError);
  EXPECT_THROW(verify_inner_risk_inequality(3, 0, rng), ConfigError);
}

TEST(CalibrationReport, ThetaLowerBoundShape) {
  Rng rng(3);
  const CalibrationReport r = verify_inner_risk_inequality(3, 50, rng);
  EXPECT_DOUBLE_EQ(r.theta_lb(0.0), 0.0);
  double prev = 0.0;
  std::vector<double> values;
  for (int k = 1; k <= 20; ++k) {
    const double eps = 0.05 * k;
    const double v = r.theta_lb(eps);
    EXPECT_GT(v, prev);  // strictly increasing
    values.push_back(v);
    prev = v;
  }
  for (std::size_t k = 1; k + 1 < values.size(); ++k)  // midpoint convexity
    EXPECT_LE(values[k], 0.5 * (values[k - 1] + values[k + 1]) + 1e-15);
}

TEST(RandomStochasticMatrix, WellConditionedAndStochastic) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + rng.uniform_int(9);
    const ColumnStochasticMatrix t = random_stochastic_matrix(c, rng);
    for (int j = 0; j < c; ++j) {
      double sum = 0.0;
      for (int i = 0; i < c; ++i) sum += t(i, j);
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
    EXPECT_LE(matrix_one_norm(t.entries()) * matrix_one_norm(invert(t)), 1e6);
  }
}
