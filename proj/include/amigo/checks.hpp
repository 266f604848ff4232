#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "amigo/oracle.hpp"
#include "amigo/problems.hpp"

namespace amigo {

/// Central differences of a scalar function, one coordinate at a time.
template <typename Scalar>
Vector<Scalar> central_difference(const std::function<Scalar(const Vector<Scalar>&)>& fn,
                                  const Vector<Scalar>& x, Scalar h) {
  Vector<Scalar> grad(x.size());
  Vector<Scalar> xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const Scalar up = fn(xp);
    xp(i) = x(i) - h;
    const Scalar down = fn(xp);
    xp(i) = x(i);
    grad(i) = (up - down) / (2 * h);
  }
  return grad;
}

template <typename Scalar>
Scalar relative_error(const Vector<Scalar>& got, const Vector<Scalar>& want) {
  const Scalar denom = std::max(want.norm(), std::numeric_limits<Scalar>::min());
  return (got - want).norm() / denom;
}

/// ‖∇_FD L(x) − ∇L(x)‖ / ‖∇L(x)‖ at the given point, with L evaluated through
/// the exact inner solution.
template <typename Scalar>
Scalar fd_gradient_error(const BilevelOracle<Scalar>& oracle, const Vector<Scalar>& x, Scalar h) {
  const ClosedForms<Scalar>* cf = oracle.closed_forms();
  if (cf == nullptr) throw UnsupportedOperation("finite-difference check needs closed forms");
  const std::function<Scalar(const Vector<Scalar>&)> loss = [cf](const Vector<Scalar>& p) {
    return cf->loss(p);
  };
  return relative_error(central_difference(loss, x, h), grad_L_reference(oracle, x));
}

/// Extremes of vᵀ ∂_yy g(x, y) v over random unit probes.
template <typename Scalar>
std::pair<Scalar, Scalar> hvp_rayleigh_range(const BilevelOracle<Scalar>& oracle,
                                             const Vector<Scalar>& x, const Vector<Scalar>& y,
                                             int probes, Rng& rng) {
  std::normal_distribution<Scalar> normal(0, 1);
  Scalar lo = std::numeric_limits<Scalar>::infinity();
  Scalar hi = -lo;
  for (int i = 0; i < probes; ++i) {
    Vector<Scalar> v(y.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = normal(rng);
    v.normalize();
    const Scalar q = v.dot(oracle.hvp_gyy(x, y, v, 1, nullptr));
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  return {lo, hi};
}

enum class QueryKind { grad_f, grad_g, jvp, hvp };

inline std::string to_string(QueryKind q) {
  switch (q) {
    case QueryKind::grad_f: return "grad_f";
    case QueryKind::grad_g: return "grad_g";
    case QueryKind::jvp: return "jvp";
    case QueryKind::hvp: return "hvp";
  }
  return "unknown";
}

/// Monte-Carlo moments of one stochastic query around its exact value.
template <typename Scalar>
struct NoiseMoments {
  /// max_i |mean_i − exact_i| / (std_i / √draws); unbiasedness means this stays below ~4.
  Scalar max_bias_z = 0;
  /// ‖mean(q̂) − q‖ over the draws.
  Scalar mean_dev_norm = 0;
  /// Empirical E‖q̂ − q‖².
  Scalar mean_sq_dev = 0;
  /// The construction's target σ̃²‖·‖²/batch for this query.
  Scalar expected_sq_dev = 0;
};

template <typename Scalar>
NoiseMoments<Scalar> noise_moments(const BilevelOracle<Scalar>& oracle, QueryKind kind,
                                   const Vector<Scalar>& x, const Vector<Scalar>& y,
                                   const Vector<Scalar>& probe, std::int64_t batch, int draws,
                                   Rng& rng) {
  const auto query = [&](Rng* r) -> Vector<Scalar> {
    switch (kind) {
      case QueryKind::grad_f: {
        GradF<Scalar> gf = oracle.grad_f(x, y, batch, r);
        Vector<Scalar> out(gf.gx.size() + gf.gy.size());
        out << gf.gx, gf.gy;
        return out;
      }
      case QueryKind::grad_g: return oracle.grad_gy(x, y, batch, r);
      case QueryKind::jvp: return oracle.jvp_gxy(x, y, probe, batch, r);
      case QueryKind::hvp: return oracle.hvp_gyy(x, y, probe, batch, r);
    }
    return {};
  };
  const Vector<Scalar> exact = query(nullptr);
  Vector<Scalar> sum = Vector<Scalar>::Zero(exact.size());
  Vector<Scalar> sum_sq = Vector<Scalar>::Zero(exact.size());
  for (int i = 0; i < draws; ++i) {
    const Vector<Scalar> dev = query(&rng) - exact;
    sum += dev;
    sum_sq += dev.cwiseAbs2();
  }
  const Scalar n = Scalar(draws);
  const Vector<Scalar> mean = sum / n;
  const Vector<Scalar> var = (sum_sq / n - mean.cwiseAbs2()) * (n / (n - 1));

  NoiseMoments<Scalar> m;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const Scalar sd = std::sqrt(std::max(var(i), Scalar(0)));
    if (sd > 0) m.max_bias_z = std::max(m.max_bias_z, std::abs(mean(i)) / (sd / std::sqrt(n)));
    else if (mean(i) != 0) m.max_bias_z = std::numeric_limits<Scalar>::infinity();
  }
  m.mean_dev_norm = mean.norm();
  m.mean_sq_dev = sum_sq.sum() / n;

  const NoiseSpec<Scalar> ns = oracle.noise();
  const Scalar b = Scalar(batch);
  switch (kind) {
    case QueryKind::grad_f: m.expected_sq_dev = ns.sigma_f * ns.sigma_f / b; break;
    case QueryKind::grad_g: m.expected_sq_dev = ns.sigma_g * ns.sigma_g / b; break;
    case QueryKind::hvp:
      m.expected_sq_dev = ns.sigma_gyy * ns.sigma_gyy * probe.squaredNorm() / b;
      break;
    case QueryKind::jvp:
      if (const auto* sp = dynamic_cast<const StochasticProblem<Scalar>*>(&oracle)) {
        m.expected_sq_dev = ns.sigma_gxy * ns.sigma_gxy *
                            (sp->jacobian_noise_direction() * probe).squaredNorm() / b;
      } else {
        m.expected_sq_dev = 0;
      }
      break;
  }
  return m;
}

}  // namespace amigo
