#pragma once

#include <cmath>
#include <cstdio>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "amigo/oracle.hpp"

namespace amigo {

enum class LinearSolverKind { sgd, cg, fixed_point, neumann };

inline std::string to_string(LinearSolverKind k) {
  switch (k) {
    case LinearSolverKind::sgd: return "sgd";
    case LinearSolverKind::cg: return "cg";
    case LinearSolverKind::fixed_point: return "fixed_point";
    case LinearSolverKind::neumann: return "neumann";
  }
  return "unknown";
}

template <typename Scalar>
struct InnerResult {
  Vector<Scalar> value;
  std::int64_t iterations_used = 0;
  /// ‖Hz + v‖ for the linear solvers that track it.
  std::optional<Scalar> final_residual;
};

namespace detail {

/// Reported once per solver per process; grid searches hit this on purpose.
inline void warn_step(const char* solver, double step, double bound) {
  static std::mutex mutex;
  static std::set<std::string> seen;
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (!seen.insert(solver).second) return;
  }
  std::fprintf(stderr, "warning: %s step %.6g exceeds the stable bound %.6g\n", solver, step,
               bound);
}

template <typename Scalar>
void require_finite(const Vector<Scalar>& v, const char* where, std::int64_t step) {
  if (!v.allFinite()) throw DivergenceError(where, step);
}

}  // namespace detail

/// T steps of stochastic gradient descent on y ↦ g(x, y) from y0, a fresh
/// batch per step.
template <typename Scalar>
InnerResult<Scalar> solve_inner_sgd(const OracleSession<Scalar>& session, const Vector<Scalar>& x,
                                    const Vector<Scalar>& y0, Scalar alpha, std::int64_t T,
                                    std::int64_t batch_g) {
  check_dim(y0.size(), session.dims().dy, "solve_inner_sgd y0");
  const Scalar L_g = session.oracle().constants().L_g;
  if (alpha > Scalar(1) / L_g * (1 + 1e-12)) detail::warn_step("inner sgd", alpha, 1 / L_g);
  InnerResult<Scalar> out{y0, 0, std::nullopt};
  for (std::int64_t t = 1; t <= T; ++t) {
    out.value -= alpha * session.grad_gy(x, out.value, batch_g);
    detail::require_finite(out.value, "solve_inner_sgd", t);
  }
  out.iterations_used = T;
  return out;
}

/// N steps of z ← z − β(∂_yy ĝ(x, y) z + v) with v held fixed and a fresh
/// Hessian batch per step.
template <typename Scalar>
InnerResult<Scalar> solve_linear_sgd(const OracleSession<Scalar>& session, const Vector<Scalar>& x,
                                     const Vector<Scalar>& y, const Vector<Scalar>& v,
                                     const Vector<Scalar>& z0, Scalar beta, std::int64_t N,
                                     std::int64_t batch_gyy) {
  check_dim(v.size(), session.dims().dy, "solve_linear_sgd v");
  check_dim(z0.size(), session.dims().dy, "solve_linear_sgd z0");
  const Scalar L_g = session.oracle().constants().L_g;
  if (beta > Scalar(1) / (2 * L_g) * (1 + 1e-12)) {
    detail::warn_step("linear sgd", beta, 1 / (2 * L_g));
  }
  InnerResult<Scalar> out{z0, 0, std::nullopt};
  for (std::int64_t n = 1; n <= N; ++n) {
    Vector<Scalar> grad = session.hvp_gyy(x, y, out.value, batch_gyy);
    grad += v;
    out.value -= beta * grad;
    detail::require_finite(out.value, "solve_linear_sgd", n);
  }
  out.iterations_used = N;
  return out;
}

/// Deterministic fixed-point iteration for ∂_yy g z = −v; the exact-query
/// case of solve_linear_sgd. Cold start uses z0 = 0.
template <typename Scalar>
InnerResult<Scalar> solve_linear_fixed_point(const OracleSession<Scalar>& session,
                                             const Vector<Scalar>& x, const Vector<Scalar>& y,
                                             const Vector<Scalar>& v, Scalar beta, std::int64_t N,
                                             const Vector<Scalar>& z0) {
  const Scalar L_g = session.oracle().constants().L_g;
  if (beta > Scalar(1) / L_g * (1 + 1e-12)) detail::warn_step("fixed point", beta, 1 / L_g);
  // the 1/(2 L_g) warning of the stochastic iteration does not apply here
  InnerResult<Scalar> out{z0, 0, std::nullopt};
  const OracleSession<Scalar> exact = session.exact();
  check_dim(z0.size(), session.dims().dy, "solve_linear_fixed_point z0");
  check_dim(v.size(), session.dims().dy, "solve_linear_fixed_point v");
  for (std::int64_t n = 1; n <= N; ++n) {
    Vector<Scalar> grad = exact.hvp_gyy(x, y, out.value, 1);
    grad += v;
    out.value -= beta * grad;
    detail::require_finite(out.value, "solve_linear_fixed_point", n);
  }
  out.iterations_used = N;
  return out;
}

template <typename Scalar>
InnerResult<Scalar> solve_linear_fixed_point(const OracleSession<Scalar>& session,
                                             const Vector<Scalar>& x, const Vector<Scalar>& y,
                                             const Vector<Scalar>& v, Scalar beta,
                                             std::int64_t N) {
  return solve_linear_fixed_point(session, x, y, v, beta, N,
                                  Vector<Scalar>::Zero(session.dims().dy).eval());
}

/// Truncated Neumann series z = −β Σ_{i<N} (I − β ∂_yy g)^i v. The last term
/// needs no product, so N terms cost N − 1 Hessian-vector products.
template <typename Scalar>
InnerResult<Scalar> solve_linear_neumann(const OracleSession<Scalar>& session,
                                         const Vector<Scalar>& x, const Vector<Scalar>& y,
                                         const Vector<Scalar>& v, Scalar beta, std::int64_t N) {
  check_dim(v.size(), session.dims().dy, "solve_linear_neumann v");
  const Scalar L_g = session.oracle().constants().L_g;
  if (beta > Scalar(1) / L_g * (1 + 1e-12)) detail::warn_step("neumann", beta, 1 / L_g);
  const OracleSession<Scalar> exact = session.exact();
  Vector<Scalar> term = v;
  Vector<Scalar> sum = Vector<Scalar>::Zero(v.size());
  for (std::int64_t i = 0; i < N; ++i) {
    sum += term;
    if (i + 1 < N) {
      term -= beta * exact.hvp_gyy(x, y, term, 1);
      detail::require_finite(term, "solve_linear_neumann", i + 1);
    }
  }
  return {(-beta * sum).eval(), N, std::nullopt};
}

/// Conjugate gradient on ∂_yy g z = −v with exact Hessian-vector products.
/// Stops when ‖Hz + v‖ ≤ tol·max(1, ‖v‖) or after max_iter iterations. The
/// initial residual costs one product unless z0 is exactly zero.
template <typename Scalar>
InnerResult<Scalar> solve_linear_cg(const OracleSession<Scalar>& session, const Vector<Scalar>& x,
                                    const Vector<Scalar>& y, const Vector<Scalar>& v,
                                    const Vector<Scalar>& z0, Scalar tol, std::int64_t max_iter) {
  using Vec = Vector<Scalar>;
  check_dim(v.size(), session.dims().dy, "solve_linear_cg v");
  check_dim(z0.size(), session.dims().dy, "solve_linear_cg z0");
  const OracleSession<Scalar> exact = session.exact();
  const Scalar threshold = tol * std::max(Scalar(1), v.norm());

  InnerResult<Scalar> out{z0, 0, std::nullopt};
  Vec r = -v;
  if (!z0.isZero(0)) r -= exact.hvp_gyy(x, y, z0, 1);
  Scalar rr = r.squaredNorm();
  if (!std::isfinite(static_cast<double>(rr))) throw DivergenceError("solve_linear_cg", 0);
  Vec p = r;
  std::int64_t it = 0;
  while (std::sqrt(rr) > threshold && it < max_iter) {
    const Vec hp = exact.hvp_gyy(x, y, p, 1);
    ++it;
    const Scalar php = p.dot(hp);
    if (!(php > 0) || !std::isfinite(static_cast<double>(php))) {
      throw DivergenceError("solve_linear_cg breakdown", it);
    }
    const Scalar step = rr / php;
    out.value += step * p;
    r -= step * hp;
    const Scalar rr_next = r.squaredNorm();
    detail::require_finite(out.value, "solve_linear_cg", it);
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    if (rr == 0) break;
  }
  out.iterations_used = it;
  out.final_residual = std::sqrt(rr);
  return out;
}

}  // namespace amigo
