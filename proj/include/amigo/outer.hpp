#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amigo/hypergrad.hpp"
#include "amigo/inner.hpp"
#include "amigo/metrics.hpp"
#include "amigo/oracle.hpp"

namespace amigo {

/// Constant step sizes, inner iteration counts, batch sizes and warm-start
/// flags of one outer run.
template <typename Scalar>
struct SolverConfig {
  Scalar alpha = 1;
  Scalar beta = Scalar(0.5);
  Scalar gamma = 1;
  std::int64_t T = 1;
  std::int64_t N = 1;
  std::int64_t batch_f = 1;
  std::int64_t batch_g = 1;
  std::int64_t batch_gxy = 1;
  std::int64_t batch_gyy = 1;
  bool warm_y = true;
  bool warm_z = true;
  LinearSolverKind linear_solver = LinearSolverKind::sgd;
  Scalar cg_tol = Scalar(1e-10);
  std::int64_t K = 100;
  /// Averaging switch: 1 tracks the averaged iterate x̂_k.
  int u = 0;
  std::optional<Scalar> mu_outer;
  /// ITD only: T_k = ceil(T log(k + 2)) instead of a fixed T.
  bool increasing_T = false;

  void validate() const {
    if (!(alpha > 0) || !(beta > 0) || !(gamma > 0)) throw ConfigError("step sizes must be positive");
    if (T < 0 || N < 0) throw ConfigError("T and N must be nonnegative");
    if (batch_f < 1 || batch_g < 1 || batch_gxy < 1 || batch_gyy < 1) {
      throw ConfigError("batch sizes must be positive");
    }
    if (K < 0) throw ConfigError("K must be nonnegative");
    if (u != 0 && u != 1) throw ConfigError("u must be 0 or 1");
    if (!(cg_tol >= 0)) throw ConfigError("cg_tol must be nonnegative");
  }
};

/// Exact inner iteration counts and the constants they come from.
template <typename Scalar>
struct ExactIterationCounts {
  Scalar C1 = 0, C2 = 0, C3 = 0;
  Scalar C1p = 0, C2p = 0, C3p = 0;
  std::int64_t T = 0;
  std::int64_t N = 0;
};

template <typename Scalar>
struct ScheduleDiagnostics {
  Scalar delta = 0;
  Scalar eta = 0;
  std::optional<ExactIterationCounts<Scalar>> exact_TN;
};

template <typename Scalar>
struct Schedule {
  SolverConfig<Scalar> config;
  ScheduleDiagnostics<Scalar> diagnostics;
};

/// Constant-step fixed point of the outer rate sequence: (η, δ) = (μ, μγ)
/// when μ > 0, (L, Lγ) otherwise.
template <typename Scalar>
ScheduleDiagnostics<Scalar> outer_rate(std::optional<Scalar> mu_outer, Scalar L, Scalar gamma) {
  ScheduleDiagnostics<Scalar> d;
  if (mu_outer && *mu_outer > 0) {
    d.eta = *mu_outer;
  } else {
    d.eta = L;
  }
  d.delta = d.eta * gamma;
  return d;
}

/// Step sizes α = 1/L_g, β = 1/(2L_g), γ = 1/L and inner counts
/// T = ⌈c_T κ_g⌉, N = ⌈c_N κ_g⌉. With `exact_mode`, also evaluates the
/// explicit logarithmic constants and the iteration counts they imply, using
/// ρ = 1/2, r = θ = 1, v = 1 and the batch-divided variances of `noise`.
template <typename Scalar>
Schedule<Scalar> theorem1_schedule(const SmoothnessConstants<Scalar>& c,
                                   std::optional<Scalar> mu_outer, Scalar c_T = 1,
                                   Scalar c_N = 1, bool exact_mode = false,
                                   const NoiseSpec<Scalar>& noise = {}) {
  const DerivedConstants<Scalar> d = derive_constants(c, mu_outer);
  const Scalar L = d.outer_smoothness();
  Schedule<Scalar> s;
  s.config.alpha = Scalar(1) / c.L_g;
  s.config.beta = Scalar(1) / (2 * c.L_g);
  s.config.gamma = Scalar(1) / L;
  s.config.T = static_cast<std::int64_t>(std::ceil(c_T * d.kappa_g - Scalar(1e-12)));
  s.config.N = static_cast<std::int64_t>(std::ceil(c_N * d.kappa_g - Scalar(1e-12)));
  s.config.mu_outer = mu_outer;
  s.diagnostics = outer_rate(mu_outer, L, s.config.gamma);
  if (!exact_mode) return s;

  std::string missing;
  const bool strongly_convex = mu_outer && *mu_outer > 0;
  if (!mu_outer) missing += " mu";
  if (!(d.L_y > 0)) missing += " L'_g";
  if (!(d.L_z > 0)) missing += " L_f|M_g";
  if (!missing.empty()) throw ConfigError("exact T,N needs nonzero constants:" + missing);

  const Scalar eta0 = s.diagnostics.eta;
  const Scalar gamma = s.config.gamma;
  const Scalar zeta0 = strongly_convex ? 2 * L * (L / eta0) : 2 * L;
  const Scalar sig_gxy = noise.sigma_gxy * noise.sigma_gxy / Scalar(s.config.batch_gxy);
  const Scalar sig_gyy = noise.sigma_gyy * noise.sigma_gyy / Scalar(s.config.batch_gyy);
  const Scalar Lgp2 = c.Lg_prime * c.Lg_prime;
  const Scalar sigma_x2 = 2 * sig_gxy + 2 * Lgp2 / (c.mu_g * c.mu_g) * sig_gyy;
  const Scalar Lpsi2 = d.L_psi * d.L_psi;
  const Scalar Ly2 = d.L_y * d.L_y;
  const Scalar Lz2 = d.L_z * d.L_z;
  using std::log;
  using std::max;

  ExactIterationCounts<Scalar> e;
  e.C1 = 1 + 2 * log(6 + 24 * Lpsi2 / eta0);
  e.C2 = 2 * log(1 + 4 * Ly2 / (L * L) * max(eta0, 8 * zeta0));
  e.C3 = max({Scalar(0), -2 * log(5 * Lpsi2 / eta0), -2 * log(L / (4 * Ly2))});
  e.C1p = 1 + 2 * log(4 + 12 / eta0 * (2 * Lpsi2 + sigma_x2));
  e.C2p = 2 * log(1 + 2 * Lz2 / Ly2 * (1 + 16 * Ly2));
  e.C3p = max({Scalar(0), -2 * log(Lpsi2 / (4 * Lz2 * eta0)), -2 * log(gamma * (sig_gxy + Lgp2))});
  const Scalar cmax = max({e.C1, e.C2, e.C3});
  const Scalar cpmax = max({e.C1p, e.C2p, e.C3p});
  e.T = static_cast<std::int64_t>(std::floor(cmax / (s.config.alpha * c.mu_g))) + 1;
  e.N = static_cast<std::int64_t>(std::floor(2 * (cmax + cpmax) / (s.config.beta * c.mu_g))) + 1;
  s.diagnostics.exact_TN = e;

  if (c.L_g > 0 && noise.sigma_gyy > 0) {
    const Scalar need = noise.sigma_gyy * noise.sigma_gyy / (c.mu_g * c.L_g);
    if (Scalar(s.config.batch_gyy) < need) {
      std::fprintf(stderr, "warning: Hessian batch %lld is below sigma_gyy^2/(mu_g L_g) = %.4g\n",
                   static_cast<long long>(s.config.batch_gyy), static_cast<double>(need));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Drivers.
// ---------------------------------------------------------------------------

/// What a driver exposes at iteration k. Pointers are null on the final row
/// (k = K), where no step is taken. `counter` is the cost spent to reach x_k.
template <typename Scalar>
struct IterateView {
  std::int64_t k = 0;
  const Vector<Scalar>* x = nullptr;
  const Vector<Scalar>* x_hat = nullptr;
  const Vector<Scalar>* y = nullptr;
  const Vector<Scalar>* z = nullptr;
  const Vector<Scalar>* psi = nullptr;
  /// Initial points handed to the inner and linear solvers.
  const Vector<Scalar>* y_start = nullptr;
  const Vector<Scalar>* z_start = nullptr;
  OracleCounter counter;
};

template <typename Scalar>
struct HookResult {
  std::optional<MetricRow<Scalar>> metrics;
  bool stop = false;
};

template <typename Scalar>
using IterationHook = std::function<HookResult<Scalar>(const IterateView<Scalar>&)>;

template <typename Scalar>
struct RunRow {
  std::int64_t k = 0;
  OracleCounter counter;
  double wall_s = 0;
  std::optional<MetricRow<Scalar>> metrics;
};

template <typename Scalar>
struct RunRecord {
  std::vector<RunRow<Scalar>> rows;
  Vector<Scalar> x;
  Vector<Scalar> y;
  Vector<Scalar> z;
  std::optional<Vector<Scalar>> x_hat;
  SolverConfig<Scalar> config;
  bool stopped_early = false;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <typename Scalar>
bool record_row(RunRecord<Scalar>& rec, const IterationHook<Scalar>& hook,
                const IterateView<Scalar>& view, const Stopwatch& clock) {
  RunRow<Scalar> row;
  row.k = view.k;
  row.counter = view.counter;
  bool stop = false;
  if (hook) {
    HookResult<Scalar> r = hook(view);
    row.metrics = std::move(r.metrics);
    stop = r.stop;
  }
  row.wall_s = clock.seconds();
  rec.rows.push_back(std::move(row));
  return stop;
}

[[noreturn]] inline void rethrow_at(const DivergenceError& e, std::int64_t k) {
  throw DivergenceError("outer iteration " + std::to_string(k) + " (" + e.where() + ", inner step " +
                            std::to_string(e.step()) + ")",
                        k);
}

template <typename Scalar>
void update_average(Vector<Scalar>& x_hat, const Vector<Scalar>& x, int u, Scalar delta) {
  // x̂_k = u(1 − δ) x̂_{k−1} + (1 − u(1 − δ)) x_k
  const Scalar keep = Scalar(u) * (1 - delta);
  x_hat = keep * x_hat + (1 - keep) * x;
}

}  // namespace detail

/// The approximate-implicit-differentiation loop shared by AmIGO and the AID
/// baselines. Per outer iteration: y_k from the inner SGD, (u_k, v_k) from one
/// gradient of f, z_k from the configured linear solver, w_k from one
/// Jacobian-vector product, then x_{k+1} = x_k − γ(u_k + w_k).
template <typename Scalar>
RunRecord<Scalar> aid_family_run(const BilevelOracle<Scalar>& oracle,
                                 const SolverConfig<Scalar>& config, const Vector<Scalar>& x0,
                                 const Vector<Scalar>& y_init, const Vector<Scalar>& z_init,
                                 Rng* rng, const IterationHook<Scalar>& hook = {}) {
  using Vec = Vector<Scalar>;
  config.validate();
  const Dims dims = oracle.dims();
  check_dim(x0.size(), dims.dx, "x0");
  check_dim(y_init.size(), dims.dy, "y_init");
  check_dim(z_init.size(), dims.dy, "z_init");

  OracleCounter counter;
  const OracleSession<Scalar> session(oracle, rng, counter);
  const Scalar delta = config.mu_outer && *config.mu_outer > 0 ? *config.mu_outer * config.gamma
                                                               : Scalar(0);
  const int u = config.mu_outer && *config.mu_outer > 0 ? config.u : 0;
  const Vec z_cold = Vec::Zero(dims.dy);

  RunRecord<Scalar> rec;
  rec.config = config;
  rec.rows.reserve(static_cast<std::size_t>(config.K + 1));
  Vec x = x0;
  Vec x_hat = x0;
  Vec y_prev = y_init;
  Vec z_prev = z_init;
  detail::Stopwatch clock;

  for (std::int64_t k = 0;; ++k) {
    IterateView<Scalar> view;
    view.k = k;
    view.x = &x;
    view.x_hat = &x_hat;
    view.counter = counter;
    if (k == config.K) {
      detail::record_row(rec, hook, view, clock);
      break;
    }
    try {
      const Vec& y_start = config.warm_y ? y_prev : y_init;
      const Vec& z_start = config.warm_z ? z_prev : z_cold;
      Vec y = solve_inner_sgd(session, x, y_start, config.alpha, config.T, config.batch_g).value;
      GradF<Scalar> gf = session.grad_f(x, y, config.batch_f);
      Vec z;
      switch (config.linear_solver) {
        case LinearSolverKind::sgd:
          z = solve_linear_sgd(session, x, y, gf.gy, z_start, config.beta, config.N,
                               config.batch_gyy)
                  .value;
          break;
        case LinearSolverKind::fixed_point:
          z = solve_linear_fixed_point(session, x, y, gf.gy, config.beta, config.N, z_start).value;
          break;
        case LinearSolverKind::neumann:
          z = solve_linear_neumann(session, x, y, gf.gy, config.beta, config.N).value;
          break;
        case LinearSolverKind::cg:
          z = solve_linear_cg(session, x, y, gf.gy, z_start, config.cg_tol, config.N).value;
          break;
      }
      Vec psi = std::move(gf.gx);
      psi += session.jvp_gxy(x, y, z, config.batch_gxy);

      view.y = &y;
      view.z = &z;
      view.psi = &psi;
      view.y_start = &y_start;
      view.z_start = &z_start;
      if (detail::record_row(rec, hook, view, clock)) {
        rec.stopped_early = true;
        y_prev = std::move(y);
        z_prev = std::move(z);
        break;
      }

      x -= config.gamma * psi;
      if (!x.allFinite()) throw DivergenceError("outer update", k + 1);
      detail::update_average(x_hat, x, u, delta);
      y_prev = std::move(y);
      z_prev = std::move(z);
    } catch (const DivergenceError& e) {
      detail::rethrow_at(e, k);
    }
  }

  rec.x = std::move(x);
  rec.y = std::move(y_prev);
  rec.z = std::move(z_prev);
  if (config.u == 1) rec.x_hat = std::move(x_hat);
  return rec;
}

/// AmIGO: warm starts for both the inner and the linear solver.
template <typename Scalar>
RunRecord<Scalar> amigo_run(const BilevelOracle<Scalar>& oracle, const SolverConfig<Scalar>& config,
                            const Vector<Scalar>& x0, const Vector<Scalar>& y_init,
                            const Vector<Scalar>& z_init, Rng* rng,
                            const IterationHook<Scalar>& hook = {}) {
  if (!config.warm_y || !config.warm_z) {
    throw ConfigError("amigo_run requires warm starts for both inner solvers");
  }
  return aid_family_run(oracle, config, x0, y_init, z_init, rng, hook);
}

/// AID baselines: warm_z = false restarts the linear solver at z = 0 each
/// outer iteration; warm_y = false restarts the inner solver at y_init.
template <typename Scalar>
RunRecord<Scalar> aid_run(const BilevelOracle<Scalar>& oracle, const SolverConfig<Scalar>& config,
                          const Vector<Scalar>& x0, const Vector<Scalar>& y_init, Rng* rng,
                          const IterationHook<Scalar>& hook = {}) {
  return aid_family_run(oracle, config, x0, y_init,
                        Vector<Scalar>::Zero(oracle.dims().dy).eval(), rng, hook);
}

/// Inner iteration count of the ITD driver at outer iteration k.
inline std::int64_t itd_inner_steps(std::int64_t T, bool increasing, std::int64_t k) {
  if (!increasing) return T;
  return static_cast<std::int64_t>(std::ceil(double(T) * std::log(double(k) + 2.0)));
}

/// Iterative differentiation: x_{k+1} = x_k − γ ∇L̃(x_k) with L̃ the unrolled
/// surrogate, inner iterate warm-started across outer iterations.
template <typename Scalar>
RunRecord<Scalar> itd_run(const BilevelOracle<Scalar>& oracle, const SolverConfig<Scalar>& config,
                          const Vector<Scalar>& x0, const Vector<Scalar>& y_init,
                          const IterationHook<Scalar>& hook = {}) {
  using Vec = Vector<Scalar>;
  config.validate();
  if (!oracle.noise().is_zero()) throw ConfigError("itd_run requires a deterministic oracle");
  check_dim(x0.size(), oracle.dims().dx, "x0");
  check_dim(y_init.size(), oracle.dims().dy, "y_init");

  OracleCounter counter;
  const OracleSession<Scalar> session(oracle, nullptr, counter);
  RunRecord<Scalar> rec;
  rec.config = config;
  rec.rows.reserve(static_cast<std::size_t>(config.K + 1));
  Vec x = x0;
  Vec y_prev = y_init;
  detail::Stopwatch clock;

  for (std::int64_t k = 0;; ++k) {
    IterateView<Scalar> view;
    view.k = k;
    view.x = &x;
    view.x_hat = &x;
    view.counter = counter;
    if (k == config.K) {
      detail::record_row(rec, hook, view, clock);
      break;
    }
    try {
      const Vec y_start = y_prev;
      const std::int64_t T_k = itd_inner_steps(config.T, config.increasing_T, k);
      ItdResult<Scalar> r = itd_hypergradient(session, x, y_start, config.alpha, T_k);
      view.y = &r.y_final;
      view.psi = &r.grad;
      view.y_start = &y_start;
      if (detail::record_row(rec, hook, view, clock)) {
        rec.stopped_early = true;
        y_prev = std::move(r.y_final);
        break;
      }
      x -= config.gamma * r.grad;
      if (!x.allFinite()) throw DivergenceError("outer update", k + 1);
      y_prev = std::move(r.y_final);
    } catch (const DivergenceError& e) {
      detail::rethrow_at(e, k);
    }
  }
  rec.x = std::move(x);
  rec.y = std::move(y_prev);
  rec.z = Vec::Zero(oracle.dims().dy);
  return rec;
}

}  // namespace amigo
