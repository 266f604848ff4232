#pragma once

#include <vector>

#include "amigo/oracle.hpp"

namespace amigo {

/// Inner iterates y^0 … y^{T−1} recorded by the forward pass.
template <typename Scalar>
struct UnrollTape {
  std::vector<Vector<Scalar>> iterates;
  Vector<Scalar> x;
  Scalar alpha = 0;

  std::size_t length() const { return iterates.size(); }
};

template <typename Scalar>
struct ItdResult {
  Vector<Scalar> grad;
  Vector<Scalar> y_final;
  std::size_t tape_length = 0;
};

/// Exact gradient of the unrolled surrogate x ↦ f(x, y^T(x)) where y^T is T
/// steps of gradient descent on g(x, ·) from y0, by reverse accumulation:
///
///   p ← ∂_y f(x, y^T),  g ← ∂_x f(x, y^T)
///   for t = T … 1:  g ← g − α ∂_xy g(x, y^{t−1}) p;  p ← p − α ∂_yy g(x, y^{t−1}) p
///
/// Queries are exact regardless of the session's stream.
template <typename Scalar>
ItdResult<Scalar> itd_hypergradient(const OracleSession<Scalar>& session, const Vector<Scalar>& x,
                                    const Vector<Scalar>& y0, Scalar alpha, std::int64_t T) {
  check_dim(x.size(), session.dims().dx, "itd_hypergradient x");
  check_dim(y0.size(), session.dims().dy, "itd_hypergradient y0");
  const OracleSession<Scalar> exact = session.exact();

  UnrollTape<Scalar> tape;
  tape.x = x;
  tape.alpha = alpha;
  tape.iterates.reserve(static_cast<std::size_t>(std::max<std::int64_t>(T, 0)));
  Vector<Scalar> y = y0;
  for (std::int64_t t = 1; t <= T; ++t) {
    tape.iterates.push_back(y);
    y -= alpha * exact.grad_gy(x, y, 1);
    if (!y.allFinite()) throw DivergenceError("itd_hypergradient forward", t);
  }

  GradF<Scalar> gf = exact.grad_f(x, y, 1);
  Vector<Scalar> grad = std::move(gf.gx);
  Vector<Scalar> p = std::move(gf.gy);
  for (std::int64_t t = T; t >= 1; --t) {
    const Vector<Scalar>& y_prev = tape.iterates[static_cast<std::size_t>(t - 1)];
    grad -= alpha * exact.jvp_gxy(x, y_prev, p, 1);
    p -= alpha * exact.hvp_gyy(x, y_prev, p, 1);
    if (!p.allFinite() || !grad.allFinite()) throw DivergenceError("itd_hypergradient reverse", t);
  }
  return {std::move(grad), std::move(y), tape.length()};
}

}  // namespace amigo
