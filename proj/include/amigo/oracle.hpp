#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "amigo/core.hpp"
#include "amigo/counter.hpp"

namespace amigo {

/// Regularity constants of a bilevel problem: inner strong convexity and
/// smoothness, cross-Lipschitz constant of the inner gradient in x, Lipschitz
/// constant of the second derivatives of g, smoothness of f, and a bound on
/// the inner partial gradient of f.
///
/// `L_exact` optionally carries the true smoothness of the outer objective
/// when the problem knows it (e.g. the Hessian of a quadratic). It is always
/// no larger than the generic bound produced by derive_constants.
template <typename Scalar>
struct SmoothnessConstants {
  Scalar mu_g = 1;
  Scalar L_g = 1;
  Scalar Lg_prime = 0;
  Scalar M_g = 0;
  Scalar L_f = 0;
  Scalar B = 0;
  std::optional<Scalar> L_exact;

  void validate() const {
    const Scalar fields[] = {mu_g, L_g, Lg_prime, M_g, L_f, B};
    for (Scalar v : fields) {
      if (!std::isfinite(static_cast<double>(v)) || v < 0) {
        throw InvalidConstants("smoothness constants must be finite and nonnegative");
      }
    }
    if (!(mu_g > 0)) throw InvalidConstants("mu_g must be positive");
    if (L_g < mu_g) throw InvalidConstants("L_g must be at least mu_g");
    if (L_exact && !(*L_exact > 0)) throw InvalidConstants("L_exact must be positive");
  }
};

template <typename Scalar>
struct DerivedConstants {
  Scalar L_y = 0;
  Scalar L_z = 0;
  Scalar L_psi = 0;
  Scalar L = 0;
  Scalar kappa_g = 1;
  std::optional<Scalar> kappa_L;
  std::optional<Scalar> L_exact;

  /// Smoothness used for outer step sizes: the exact Hessian bound when the
  /// problem provides one, the generic bound otherwise.
  Scalar outer_smoothness() const { return L_exact.value_or(L); }
};

/// Lipschitz constants of y*, z*, the hypergradient map and the bias of the
/// implicit-gradient potential, all in terms of the raw constants.
template <typename Scalar>
DerivedConstants<Scalar> derive_constants(const SmoothnessConstants<Scalar>& c,
                                          std::optional<Scalar> mu_outer = std::nullopt) {
  c.validate();
  const Scalar inv_mu = Scalar(1) / c.mu_g;
  DerivedConstants<Scalar> d;
  d.L_y = inv_mu * c.Lg_prime;
  d.L_z = inv_mu * inv_mu * c.M_g * c.B + inv_mu * c.L_f;
  d.L_psi = std::max(c.L_f + c.M_g * inv_mu * c.B + c.Lg_prime * d.L_z, c.Lg_prime);
  d.L = (c.L_f + inv_mu * inv_mu * c.Lg_prime * c.M_g * c.B +
         inv_mu * (c.Lg_prime * c.L_f + c.M_g * c.B)) *
        (Scalar(1) + inv_mu * c.Lg_prime);
  d.kappa_g = c.L_g / c.mu_g;
  if (mu_outer && *mu_outer > 0) d.kappa_L = d.L / *mu_outer;
  d.L_exact = c.L_exact;
  return d;
}

/// Variance descriptors of the stochastic oracles, before division by the
/// batch size. `bounded_hessian_noise` requests that every sampled inner
/// Hessian stays positive definite.
template <typename Scalar>
struct NoiseSpec {
  Scalar sigma_f = 0;
  Scalar sigma_g = 0;
  Scalar sigma_gxy = 0;
  Scalar sigma_gyy = 0;
  bool bounded_hessian_noise = true;

  bool is_zero() const { return sigma_f == 0 && sigma_g == 0 && sigma_gxy == 0 && sigma_gyy == 0; }
};

template <typename Scalar>
struct GradF {
  Vector<Scalar> gx;
  Vector<Scalar> gy;
};

template <typename Scalar>
class ClosedForms;

/// Query surface of a bilevel problem min_x f(x, y*(x)) s.t. y*(x) = argmin_y g(x, y).
///
/// Every query takes a batch size and an optional random stream. A null
/// stream, or a problem with zero variance, returns the exact quantity; the
/// deterministic setting is the zero-variance case of the same path.
/// Implementations are immutable and may be queried from several threads.
template <typename Scalar>
class BilevelOracle {
 public:
  using Vec = Vector<Scalar>;

  virtual ~BilevelOracle() = default;

  virtual Dims dims() const = 0;

  virtual Scalar f(const Vec& x, const Vec& y) const = 0;
  virtual Scalar g(const Vec& x, const Vec& y) const = 0;

  /// Joint (∂_x f, ∂_y f) on one batch.
  virtual GradF<Scalar> grad_f(const Vec& x, const Vec& y, std::int64_t batch, Rng* rng) const = 0;
  virtual Vec grad_gy(const Vec& x, const Vec& y, std::int64_t batch, Rng* rng) const = 0;
  /// ∂_yy g(x, y) v.
  virtual Vec hvp_gyy(const Vec& x, const Vec& y, const Vec& v, std::int64_t batch,
                      Rng* rng) const = 0;
  /// ∂_xy g(x, y) z, mapping the inner space to the outer one.
  virtual Vec jvp_gxy(const Vec& x, const Vec& y, const Vec& z, std::int64_t batch,
                      Rng* rng) const = 0;

  virtual SmoothnessConstants<Scalar> constants() const = 0;
  virtual NoiseSpec<Scalar> noise() const { return {}; }

  /// Exact references, when the problem has them.
  virtual const ClosedForms<Scalar>* closed_forms() const { return nullptr; }

  Vec grad_fx(const Vec& x, const Vec& y) const { return grad_f(x, y, 1, nullptr).gx; }
  Vec grad_fy(const Vec& x, const Vec& y) const { return grad_f(x, y, 1, nullptr).gy; }
};

/// Exact solution maps of a problem: y*(x), z*(x, y) = -∂_yy g^{-1} ∂_y f,
/// the outer loss and, when unique and known, its minimizer.
template <typename Scalar>
class ClosedForms {
 public:
  using Vec = Vector<Scalar>;

  virtual ~ClosedForms() = default;

  virtual Vec y_star(const Vec& x) const = 0;
  virtual Vec z_star(const Vec& x, const Vec& y) const = 0;
  virtual Scalar loss(const Vec& x) const = 0;
  virtual std::optional<Vec> x_star() const { return std::nullopt; }
  virtual std::optional<Scalar> loss_star() const { return std::nullopt; }
  /// Strong-convexity modulus of the outer loss; absent when non-convex or unknown.
  virtual std::optional<Scalar> mu_outer() const { return std::nullopt; }
};

/// A counted, stream-bound view of an oracle. Solvers and drivers query
/// through a session so every call lands in the run's counter.
template <typename Scalar>
class OracleSession {
 public:
  using Vec = Vector<Scalar>;

  OracleSession(const BilevelOracle<Scalar>& oracle, Rng* rng, OracleCounter& counter)
      : oracle_(&oracle), rng_(rng), counter_(&counter), dims_(oracle.dims()) {}

  const BilevelOracle<Scalar>& oracle() const { return *oracle_; }
  const Dims& dims() const { return dims_; }
  OracleCounter& counter() const { return *counter_; }
  bool stochastic() const { return rng_ != nullptr && !oracle_->noise().is_zero(); }

  /// Same counter, exact queries.
  OracleSession exact() const { return OracleSession(*oracle_, nullptr, *counter_); }

  GradF<Scalar> grad_f(const Vec& x, const Vec& y, std::int64_t batch) const {
    check_xy(x, y, "grad_f");
    counter_->n_grad_f += batch;
    return oracle_->grad_f(x, y, batch, rng_);
  }

  Vec grad_gy(const Vec& x, const Vec& y, std::int64_t batch) const {
    check_xy(x, y, "grad_gy");
    counter_->n_grad_g += batch;
    return oracle_->grad_gy(x, y, batch, rng_);
  }

  Vec hvp_gyy(const Vec& x, const Vec& y, const Vec& v, std::int64_t batch) const {
    check_xy(x, y, "hvp_gyy");
    check_dim(v.size(), dims_.dy, "hvp_gyy vector");
    counter_->n_hvp += batch;
    return oracle_->hvp_gyy(x, y, v, batch, rng_);
  }

  Vec jvp_gxy(const Vec& x, const Vec& y, const Vec& z, std::int64_t batch) const {
    check_xy(x, y, "jvp_gxy");
    check_dim(z.size(), dims_.dy, "jvp_gxy vector");
    counter_->n_jvp += batch;
    return oracle_->jvp_gxy(x, y, z, batch, rng_);
  }

 private:
  void check_xy(const Vec& x, const Vec& y, const char* what) const {
    if (x.size() != dims_.dx || y.size() != dims_.dy) {
      throw DimensionMismatch(std::string(what) + ": got (" + std::to_string(x.size()) + ", " +
                              std::to_string(y.size()) + "), oracle expects (" +
                              std::to_string(dims_.dx) + ", " + std::to_string(dims_.dy) + ")");
    }
  }

  const BilevelOracle<Scalar>* oracle_;
  Rng* rng_;
  OracleCounter* counter_;
  Dims dims_;
};

/// Hypergradient estimate ∂_x f̂(x, y) + ∂_xy ĝ(x, y) z on fresh batches.
template <typename Scalar>
Vector<Scalar> psi_hat(const OracleSession<Scalar>& session, const Vector<Scalar>& x,
                       const Vector<Scalar>& y, const Vector<Scalar>& z, std::int64_t batch_f,
                       std::int64_t batch_gxy) {
  check_dim(z.size(), session.dims().dy, "psi_hat z");
  Vector<Scalar> u = session.grad_f(x, y, batch_f).gx;
  u += session.jvp_gxy(x, y, z, batch_gxy);
  return u;
}

/// Convenience overload: exact, uncounted.
template <typename Scalar>
Vector<Scalar> psi_hat(const BilevelOracle<Scalar>& oracle, const Vector<Scalar>& x,
                       const Vector<Scalar>& y, const Vector<Scalar>& z) {
  OracleCounter scratch;
  return psi_hat(OracleSession<Scalar>(oracle, nullptr, scratch), x, y, z, 1, 1);
}

/// Exact bilevel gradient ∇L(x) = ∂_x f(x, y*) + ∂_xy g(x, y*) z*(x, y*),
/// from the problem's closed forms.
template <typename Scalar>
Vector<Scalar> grad_L_reference(const BilevelOracle<Scalar>& oracle, const Vector<Scalar>& x) {
  const ClosedForms<Scalar>* cf = oracle.closed_forms();
  if (cf == nullptr) throw UnsupportedOperation("grad_L_reference: problem has no closed forms");
  check_dim(x.size(), oracle.dims().dx, "grad_L_reference x");
  const Vector<Scalar> y = cf->y_star(x);
  const Vector<Scalar> z = cf->z_star(x, y);
  return psi_hat(oracle, x, y, z);
}

}  // namespace amigo
