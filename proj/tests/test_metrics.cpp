#include <gtest/gtest.h>

#include "amigo/amigo.hpp"

using namespace amigo;

namespace {

MetricSettings<double> settings(double mu, int u = 0) {
  MetricSettings<double> s;
  s.mu_outer = mu;
  s.gamma = 1;
  s.L_outer = 1;
  s.u = u;
  return s;
}

}  // namespace

TEST(ComplexityFormula, Substitution) {
  EXPECT_EQ(complexity_formula(1, 2, 3, 1, 1, 1, 1), 7);
  EXPECT_EQ(complexity_formula(0, 100, 100, 5, 5, 5, 5), 0);
  EXPECT_EQ(complexity_formula(3, 2, 5, 4, 2, 3, 7), 3 * (8 + 10 + 3 + 7));
}

TEST(ComplexityFormula, MatchesAmigoCounter) {
  const auto p = gen_quadratic<double>(6, 5, 5, 3, 1);
  SolverConfig<double> cfg;
  cfg.T = 4;
  cfg.N = 6;
  cfg.K = 9;
  cfg.batch_g = 3;
  cfg.batch_gyy = 2;
  cfg.batch_gxy = 5;
  cfg.batch_f = 7;
  const auto rec =
      amigo_run<double>(*p, cfg, VectorXd::Ones(6), VectorXd::Zero(5), VectorXd::Zero(5), nullptr);
  for (const auto& row : rec.rows) {
    EXPECT_EQ(row.counter.total(), complexity_formula(row.k, 4, 6, 3, 2, 5, 7));
  }
}

TEST(ComputeMetrics, InitialPoint) {
  const auto p = gen_quadratic<double>(8, 6, 5, 4, 2);
  const VectorXd x0 = VectorXd::Ones(8);
  MetricTracker<double> t(*p, x0, settings(0.25));
  const auto row = t(0, x0, OracleCounter{});
  ASSERT_TRUE(row.rel_error.has_value());
  EXPECT_DOUBLE_EQ(*row.rel_error, 1);
  EXPECT_DOUBLE_EQ(row.avg_grad_norm_sq, row.grad_norm_sq);
}

TEST(ComputeMetrics, Minimizer) {
  const auto p = gen_quadratic<double>(8, 6, 5, 4, 2);
  MetricTracker<double> t(*p, VectorXd::Ones(8), settings(0.25));
  const auto row = t(3, *p->x_star(), OracleCounter{});
  EXPECT_NEAR(*row.rel_error, 0, 1e-15);
  EXPECT_LE(row.grad_norm_sq, 1e-18);
  EXPECT_NEAR(*row.combined_sc, 0, 1e-15);
}

TEST(ComputeMetrics, CombinedAgainstDenseEvaluation) {
  const auto p = gen_quadratic<double>(10, 8, 6, 4, 3);
  Rng rng(5);
  const VectorXd x = gaussian_vector<double>(10, rng);
  // dense references computed from the matrices alone
  const MatrixXd& A_f = p->A_f();
  const VectorXd w = -p->B_g().transpose() * p->A_g().fullPivLu().solve(p->C_f());
  const VectorXd x_star = -A_f.fullPivLu().solve(w);
  const auto L = [&](const VectorXd& v) { return 0.5 * v.dot(A_f * v) + v.dot(w); };
  const double gap = L(x) - L(x_star);
  const double mu = 0.25;
  const double want = std::min(gap, 0.5 * mu * (x - x_star).squaredNorm());
  const auto row = compute_metrics<double>(*p, x, OracleCounter{}, settings(mu), 1.0);
  ASSERT_TRUE(row.combined_sc.has_value());
  EXPECT_NEAR(*row.combined_sc, want, 1e-10 * std::abs(want));
  ASSERT_TRUE(row.energy_x.has_value());
  EXPECT_NEAR(*row.energy_x, 0.5 * mu * (x - x_star).squaredNorm() + gap, 1e-10 * gap);
}

TEST(ComputeMetrics, EnergyWithAveraging) {
  const auto p = gen_quadratic<double>(6, 5, 6, 4, 3);
  const VectorXd x = VectorXd::Constant(6, 0.5);
  const auto row = compute_metrics<double>(*p, x, OracleCounter{}, settings(0.25, 1), 1.0);
  EXPECT_NEAR(*row.energy_x, 0.125 * (x - *p->x_star()).squaredNorm(), 1e-12);
}

TEST(ComputeMetrics, NonconvexEnergy) {
  const auto p = gen_nonconvex<double>(6, 5, 2.0, 5, 1);
  MetricSettings<double> s;
  s.mu_outer = -1;
  s.gamma = 0.5;
  s.L_outer = 2;
  const VectorXd x = VectorXd::Constant(6, 0.3);
  const auto row = compute_metrics<double>(*p, x, OracleCounter{}, s, std::nullopt);
  EXPECT_FALSE(row.rel_error.has_value());
  EXPECT_FALSE(row.combined_sc.has_value());
  ASSERT_TRUE(row.energy_x.has_value());
  EXPECT_DOUBLE_EQ(*row.energy_x, row.grad_norm_sq / 4);
}

TEST(ComputeMetrics, RunningAverage) {
  const auto p = gen_quadratic<double>(6, 5, 6, 4, 3);
  MetricTracker<double> t(*p, VectorXd::Ones(6), settings(0.25));
  double sum = t(0, VectorXd::Ones(6), OracleCounter{}).grad_norm_sq;
  for (int k = 1; k <= 5; ++k) {
    const VectorXd x = VectorXd::Constant(6, 1.0 / k);
    const auto row = t(k, x, OracleCounter{});
    sum += row.grad_norm_sq;
    EXPECT_NEAR(row.avg_grad_norm_sq, sum / k, 1e-12 * sum);
  }
}

TEST(ComputeMetrics, CostIsCounterTotal) {
  const auto p = gen_quadratic<double>(6, 5, 6, 4, 3);
  OracleCounter c;
  c.n_grad_f = 2;
  c.n_hvp = 11;
  const auto row = compute_metrics<double>(*p, VectorXd::Ones(6), c, settings(0.25), 1.0);
  EXPECT_EQ(row.cost_so_far, 13);
}
