#include <gtest/gtest.h>

#include "amigo/amigo.hpp"

using namespace amigo;

namespace {

// Minimal oracle without exact references: g = ½‖y‖² − xᵀy over equal dims, f = ½‖y‖².
class BareOracle final : public BilevelOracle<double> {
 public:
  explicit BareOracle(std::int64_t d) : d_(d) {}
  Dims dims() const override { return {d_, d_}; }
  double f(const VectorXd&, const VectorXd& y) const override { return 0.5 * y.squaredNorm(); }
  double g(const VectorXd& x, const VectorXd& y) const override {
    return 0.5 * y.squaredNorm() - x.dot(y);
  }
  GradF<double> grad_f(const VectorXd& x, const VectorXd& y, std::int64_t, Rng*) const override {
    return {VectorXd::Zero(x.size()), y};
  }
  VectorXd grad_gy(const VectorXd& x, const VectorXd& y, std::int64_t, Rng*) const override {
    return y - x;
  }
  VectorXd hvp_gyy(const VectorXd&, const VectorXd&, const VectorXd& v, std::int64_t,
                   Rng*) const override {
    return v;
  }
  VectorXd jvp_gxy(const VectorXd&, const VectorXd&, const VectorXd& z, std::int64_t,
                   Rng*) const override {
    return -z;
  }
  SmoothnessConstants<double> constants() const override { return {}; }

 private:
  std::int64_t d_;
};

SmoothnessConstants<double> make_constants(double mu, double Lg, double Lgp, double Mg, double Lf,
                                           double B) {
  SmoothnessConstants<double> c;
  c.mu_g = mu;
  c.L_g = Lg;
  c.Lg_prime = Lgp;
  c.M_g = Mg;
  c.L_f = Lf;
  c.B = B;
  return c;
}

}  // namespace

TEST(DeriveConstants, CrossTermsVanish) {
  const auto d = derive_constants(make_constants(1, 1, 0, 0, 1, 0));
  EXPECT_DOUBLE_EQ(d.L_y, 0);
  EXPECT_DOUBLE_EQ(d.L_z, 1);
  EXPECT_DOUBLE_EQ(d.L_psi, 1);
  EXPECT_DOUBLE_EQ(d.L, 1);
  EXPECT_DOUBLE_EQ(d.kappa_g, 1);
}

TEST(DeriveConstants, HalfModulus) {
  // evaluated independently: L_y = 2, L_z = 2, L_psi = 3, L = 3 * 3
  const auto d = derive_constants(make_constants(0.5, 1, 1, 0, 1, 2));
  EXPECT_DOUBLE_EQ(d.L_y, 2);
  EXPECT_DOUBLE_EQ(d.L_z, 2);
  EXPECT_DOUBLE_EQ(d.L_psi, 3);
  EXPECT_DOUBLE_EQ(d.L, 9);
  EXPECT_DOUBLE_EQ(d.kappa_g, 2);
}

TEST(DeriveConstants, OuterConditionNumber) {
  const auto d = derive_constants(make_constants(0.5, 1, 1, 0, 1, 2), std::optional<double>(0.9));
  ASSERT_TRUE(d.kappa_L.has_value());
  EXPECT_DOUBLE_EQ(*d.kappa_L, 10);
  EXPECT_FALSE(derive_constants(make_constants(0.5, 1, 1, 0, 1, 2), std::optional<double>(-1.0))
                   .kappa_L.has_value());
}

TEST(DeriveConstants, RejectsInvalid) {
  EXPECT_THROW(derive_constants(make_constants(0, 1, 0, 0, 1, 0)), InvalidConstants);
  EXPECT_THROW(derive_constants(make_constants(-1, 1, 0, 0, 1, 0)), InvalidConstants);
  EXPECT_THROW(derive_constants(make_constants(2, 1, 0, 0, 1, 0)), InvalidConstants);
}

TEST(PsiHat, QuadraticIgnoresY) {
  const auto p = gen_quadratic<double>(12, 7, 5, 3, 11);
  Rng rng(1);
  const VectorXd x = gaussian_vector<double>(12, rng);
  const VectorXd z = gaussian_vector<double>(7, rng);
  const VectorXd want = p->A_f() * x + p->B_g().transpose() * z;
  for (int i = 0; i < 3; ++i) {
    const VectorXd y = gaussian_vector<double>(7, rng);
    EXPECT_LE((psi_hat(*p, x, y, z) - want).norm(), 1e-12 * want.norm());
  }
}

TEST(PsiHat, ZeroNoiseMatchesDeterministic) {
  const auto p = gen_quadratic<double>(6, 5, 4, 2, 3);
  const auto s = make_stochastic<double>(p, NoiseSpec<double>{}, 9);
  Rng rng(2);
  const VectorXd x = gaussian_vector<double>(6, rng);
  const VectorXd y = gaussian_vector<double>(5, rng);
  const VectorXd z = gaussian_vector<double>(5, rng);
  OracleCounter c1, c2;
  Rng r1(5), r2(5);
  const VectorXd a = psi_hat(OracleSession<double>(*p, &r1, c1), x, y, z, 4, 4);
  const VectorXd b = psi_hat(OracleSession<double>(*s, &r2, c2), x, y, z, 4, 4);
  EXPECT_EQ(a, b);
  EXPECT_EQ(c1, c2);
  EXPECT_EQ(c1.n_grad_f, 4);
  EXPECT_EQ(c1.n_jvp, 4);
}

TEST(PsiHat, DimensionMismatch) {
  const auto p = gen_quadratic<double>(6, 5, 4, 2, 3);
  OracleCounter c;
  const OracleSession<double> s(*p, nullptr, c);
  EXPECT_THROW(psi_hat<double>(s, VectorXd::Zero(5), VectorXd::Zero(5), VectorXd::Zero(5), 1, 1),
               DimensionMismatch);
  EXPECT_THROW(psi_hat<double>(s, VectorXd::Zero(6), VectorXd::Zero(5), VectorXd::Zero(4), 1, 1),
               DimensionMismatch);
}

TEST(GradLReference, QuadraticFormula) {
  const auto p = gen_quadratic<double>(10, 8, 20, 5, 4);
  Rng rng(3);
  const VectorXd x = gaussian_vector<double>(10, rng);
  // dense reference: A_f x − B_gᵀ A_g⁻¹ C_f via a full-pivot LU
  const VectorXd want =
      p->A_f() * x - p->B_g().transpose() * p->A_g().fullPivLu().solve(p->C_f());
  EXPECT_LE((grad_L_reference(*p, x) - want).norm(), 1e-10 * want.norm());
}

TEST(GradLReference, ZeroAtMinimizer) {
  const auto p = gen_quadratic<double>(10, 8, 20, 5, 4);
  EXPECT_LE(grad_L_reference(*p, *p->x_star()).norm(), 1e-10);
}

TEST(GradLReference, NonconvexFormula) {
  const auto p = gen_nonconvex<double>(9, 6, 1.5, 10, 2);
  Rng rng(4);
  const VectorXd x = gaussian_vector<double>(9, rng);
  const VectorXd z_star = -p->A_g().fullPivLu().solve(p->C_f());
  const VectorXd want =
      (-1.5 * x.array().sin()).matrix() + p->B_g().transpose() * z_star;
  EXPECT_LE((grad_L_reference(*p, x) - want).norm(), 1e-10 * want.norm());
}

TEST(GradLReference, NeedsClosedForms) {
  BareOracle o(3);
  EXPECT_THROW(grad_L_reference<double>(o, VectorXd::Zero(3)), UnsupportedOperation);
}

TEST(OracleSession, CountsBatchWeighted) {
  const auto p = gen_quadratic<double>(4, 3, 2, 2, 1);
  OracleCounter c;
  const OracleSession<double> s(*p, nullptr, c);
  const VectorXd x = VectorXd::Ones(4), y = VectorXd::Ones(3);
  s.grad_f(x, y, 3);
  s.grad_gy(x, y, 5);
  s.hvp_gyy(x, y, y, 7);
  s.jvp_gxy(x, y, y, 2);
  EXPECT_EQ(c.n_grad_f, 3);
  EXPECT_EQ(c.n_grad_g, 5);
  EXPECT_EQ(c.n_hvp, 7);
  EXPECT_EQ(c.n_jvp, 2);
  EXPECT_EQ(c.total(), 17);
  s.exact().hvp_gyy(x, y, y, 1);
  EXPECT_EQ(c.n_hvp, 8);
}
