#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "amigo/counter.hpp"
#include "amigo/oracle.hpp"

namespace amigo {

template <typename Scalar>
struct MetricRow {
  std::int64_t k = 0;
  /// (L(x_k) − L*) / (L(x_0) − L*).
  std::optional<Scalar> rel_error;
  Scalar grad_norm_sq = std::numeric_limits<Scalar>::quiet_NaN();
  /// min(L(x_k) − L*, ½μ‖x_k − x*‖²).
  std::optional<Scalar> combined_sc;
  /// (1/k) Σ_{i=1..k} grad_norm_sq(i); equals grad_norm_sq at k = 0.
  Scalar avg_grad_norm_sq = std::numeric_limits<Scalar>::quiet_NaN();
  std::optional<Scalar> energy_x;
  std::int64_t cost_so_far = 0;
  /// L(x_k) − L*, kept for seed-averaged comparisons.
  std::optional<Scalar> loss_gap;
};

/// Parameters of the outer energy and the strongly convex metrics.
template <typename Scalar>
struct MetricSettings {
  std::optional<Scalar> mu_outer;
  Scalar gamma = 1;
  /// Outer smoothness L used by the step size.
  Scalar L_outer = 1;
  int u = 0;
};

/// Oracle cost of k outer iterations: k (T|D_g| + N|D_gyy| + |D_gxy| + |D_f|).
inline std::int64_t complexity_formula(std::int64_t k, std::int64_t T, std::int64_t N,
                                       std::int64_t batch_g, std::int64_t batch_gyy,
                                       std::int64_t batch_gxy, std::int64_t batch_f) {
  return k * (T * batch_g + N * batch_gyy + batch_gxy + batch_f);
}

/// All metrics of a single point except the running average. `initial_gap`
/// is L(x_0) − L*, needed for the relative error.
template <typename Scalar>
MetricRow<Scalar> compute_metrics(const BilevelOracle<Scalar>& oracle, const Vector<Scalar>& x,
                                  const OracleCounter& counter,
                                  const MetricSettings<Scalar>& settings,
                                  std::optional<Scalar> initial_gap) {
  MetricRow<Scalar> row;
  row.cost_so_far = counter.total();
  const ClosedForms<Scalar>* cf = oracle.closed_forms();
  if (cf == nullptr) return row;

  row.grad_norm_sq = grad_L_reference(oracle, x).squaredNorm();
  row.avg_grad_norm_sq = row.grad_norm_sq;

  const std::optional<Scalar> loss_star = cf->loss_star();
  const std::optional<Vector<Scalar>> x_star = cf->x_star();
  if (loss_star) {
    row.loss_gap = cf->loss(x) - *loss_star;
    if (initial_gap && *initial_gap > 0) row.rel_error = *row.loss_gap / *initial_gap;
  }

  if (settings.mu_outer) {
    const Scalar mu = *settings.mu_outer;
    if (mu >= 0) {
      if (x_star && row.loss_gap) {
        const Scalar dist_sq = (x - *x_star).squaredNorm();
        // δ = μγ at the constant-step fixed point, so δ/(2γ) = μ/2
        row.energy_x = Scalar(0.5) * mu * dist_sq + Scalar(1 - settings.u) * *row.loss_gap;
        if (mu > 0) row.combined_sc = std::min(*row.loss_gap, Scalar(0.5) * mu * dist_sq);
      }
    } else {
      // δ = Lγ, so δ/(2γL²) = 1/(2L)
      row.energy_x = row.grad_norm_sq / (2 * settings.L_outer);
    }
  }
  return row;
}

/// Per-run metric state: remembers L(x_0) − L* and the running gradient sum.
template <typename Scalar>
class MetricTracker {
 public:
  MetricTracker(const BilevelOracle<Scalar>& oracle, const Vector<Scalar>& x0,
                MetricSettings<Scalar> settings)
      : oracle_(&oracle), settings_(settings) {
    const ClosedForms<Scalar>* cf = oracle.closed_forms();
    if (cf != nullptr && cf->loss_star()) initial_gap_ = cf->loss(x0) - *cf->loss_star();
  }

  MetricRow<Scalar> operator()(std::int64_t k, const Vector<Scalar>& x,
                               const OracleCounter& counter) {
    MetricRow<Scalar> row = compute_metrics(*oracle_, x, counter, settings_, initial_gap_);
    row.k = k;
    // (1/k) Σ_{i≤k}, with the k = 0 row reporting its own value
    grad_sum_ += row.grad_norm_sq;
    row.avg_grad_norm_sq = k == 0 ? row.grad_norm_sq : grad_sum_ / Scalar(k);
    return row;
  }

  const MetricSettings<Scalar>& settings() const { return settings_; }

 private:
  const BilevelOracle<Scalar>* oracle_;
  MetricSettings<Scalar> settings_;
  std::optional<Scalar> initial_gap_;
  Scalar grad_sum_ = 0;
};

}  // namespace amigo
