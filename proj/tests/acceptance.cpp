// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "amigo/amigo.hpp"
#include "amigo/experiment.hpp"

using namespace amigo;
namespace ex = amigo::experiment;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, double limit_s, const std::function<Verdict()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < limit_s;
  const bool pass = v.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s %2d %s: %s [%.2f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", id, name,
              v.detail.c_str(), secs, limit_s, in_time ? "" : ", over time");
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Mean of a metric over the last fifth of the recorded rows.
double tail_mean(const std::vector<ex::CsvRow>& rows,
                 const std::function<double(const MetricRow<double>&)>& metric) {
  const std::size_t start = rows.size() - rows.size() / 5;
  double sum = 0;
  for (std::size_t i = start; i < rows.size(); ++i) sum += metric(rows[i].metrics);
  return sum / double(rows.size() - start);
}

std::string csv_of(const ex::RunOutput& r) {
  std::ostringstream s;
  ex::write_csv_header(s);
  ex::write_csv_rows(s, r);
  return s.str();
}

Verdict implicit_gradient_exactness() {
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    const auto p = gen_quadratic<double>(50, 50, 100, 10, 1000 + i);
    Rng rng(mix_seed(i, 7));
    const VectorXd x = gaussian_vector<double>(50, rng);
    const auto llt = p->A_g().llt();
    const VectorXd y = -llt.solve(p->B_g() * x);
    const VectorXd z = -llt.solve(p->C_f());
    // dense reference ∇L = A_f x − B_gᵀ A_g⁻¹ C_f through a different factorization
    const VectorXd g =
        p->A_f() * x - p->B_g().transpose() * p->A_g().fullPivLu().solve(p->C_f());
    worst = std::max(worst, relative_error(psi_hat(*p, x, y, z), g));
  }
  return {worst <= 1e-10, "max relative error " + fmt(worst) + " (<= 1e-10)"};
}

Verdict finite_difference_validation() {
  struct Case {
    std::string name;
    io::ProblemPtr p;
  };
  const std::vector<Case> cases = {
      {"quadratic", gen_quadratic<double>(30, 20, 10, 10, 21)},
      {"ridge", gen_ridge_hpo<double>(200, 200, 20, 0.1, 22)},
      {"nonconvex", gen_nonconvex<double>(30, 20, 1.0, 10, 23)},
  };
  std::string detail;
  bool pass = true;
  for (const Case& c : cases) {
    const auto* cf = c.p->closed_forms();
    const Dims d = c.p->dims();
    const std::function<double(const VectorXd&)> loss = [cf](const VectorXd& v) {
      return cf->loss(v);
    };
    Rng rng(mix_seed(31, d.dx));
    double worst_ref = 0, worst_itd = 0;
    for (int i = 0; i < 5; ++i) {
      const VectorXd x = 0.5 * gaussian_vector<double>(d.dx, rng);
      const VectorXd fd = central_difference(loss, x, 1e-5);
      worst_ref = std::max(worst_ref, relative_error(grad_L_reference(*c.p, x), fd));
      double L_g = c.p->constants().L_g;
      if (const auto* r = dynamic_cast<const RidgeHPOProblem<double>*>(c.p.get())) {
        L_g = r->constants_at(x).L_g;
      }
      OracleCounter counter;
      const auto itd = itd_hypergradient(OracleSession<double>(*c.p, nullptr, counter), x,
                                         VectorXd::Zero(d.dy).eval(), 1 / L_g, 400);
      worst_itd = std::max(worst_itd, relative_error(itd.grad, fd));
    }
    pass = pass && worst_ref <= 1e-5 && worst_itd <= 1e-5;
    detail += c.name + " ref " + fmt(worst_ref) + " itd " + fmt(worst_itd) + "; ";
  }
  return {pass, detail + "limit 1e-5"};
}

// Criteria 3 and 4 share one deterministic run.
struct LinearRun {
  std::vector<double> rel;
  double worst_slack = -std::numeric_limits<double>::infinity();
  bool computed = false;
};

LinearRun& linear_run() {
  static LinearRun out;
  if (out.computed) return out;
  ex::ExperimentConfig c = ex::config_from_json(json::parse(
      R"({"problem": {"family": "quadratic", "dx": 200, "dy": 100, "kappa_g": 10,
                      "kappa_L": 10, "seed": 5},
          "method": "amigo-gd", "solver": {"schedule": "theorem1", "K": 200}})"));
  const io::ProblemPtr p = ex::build_problem(c);
  const SolverConfig<double> s = ex::resolve_solver_config(c, *p);
  const ClosedForms<double>* cf = p->closed_forms();
  const double L_psi = derive_constants(p->constants()).L_psi;
  const double loss_star = *cf->loss_star();
  Rng rng(mix_seed(c.seed, 101));
  const VectorXd x0 = gaussian_vector<double>(200, rng);
  const double gap0 = cf->loss(x0) - loss_star;

  const IterationHook<double> hook = [&](const IterateView<double>& v) {
    out.rel.push_back((cf->loss(*v.x) - loss_star) / gap0);
    if (v.k >= 5 && v.psi != nullptr) {
      const VectorXd& x = *v.x;
      const double lhs = (*v.psi - grad_L_reference(*p, x)).norm();
      const double rhs = L_psi * ((*v.y - cf->y_star(x)).norm() + (*v.z - cf->z_star(x, *v.y)).norm());
      out.worst_slack = std::max(out.worst_slack, lhs - rhs);
    }
    return HookResult<double>{};
  };
  amigo_run<double>(*p, s, x0, VectorXd::Zero(100), VectorXd::Zero(100), nullptr, hook);
  out.computed = true;
  return out;
}

Verdict theorem1_linear_rate() {
  const LinearRun& r = linear_run();
  const double rate = std::pow(r.rel[100] / r.rel[10], 1.0 / 90);
  const double final_rel = r.rel[200];
  return {rate <= 0.9601 && final_rel <= 1e-4,
          "contraction " + fmt(rate) + " (<= 0.9601), rel_error(200) " + fmt(final_rel) +
              " (<= 1e-4)"};
}

Verdict bias_inheritance_bound() {
  const LinearRun& r = linear_run();
  return {r.worst_slack <= 1e-12,
          "max of lhs - L_psi*(|y-y*|+|z-z*|) over k>=5: " + fmt(r.worst_slack) + " (<= 1e-12)"};
}

Verdict linear_solver_identities() {
  Rng rng(51);
  // β up to 1/(2 L_g), the stable range of the stochastic iteration
  std::uniform_real_distribution<double> beta_dist(0.05, 0.5);
  std::uniform_int_distribution<int> n_dist(1, 60);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = gen_quadratic<double>(8, 15, 30, 5, 500 + trial);
    Rng vr(mix_seed(trial, 3));
    const VectorXd x = gaussian_vector<double>(8, vr);
    const VectorXd y = gaussian_vector<double>(15, vr);
    const VectorXd v = gaussian_vector<double>(15, vr);
    const double beta = beta_dist(rng);
    const int N = n_dist(rng);
    OracleCounter counter;
    const OracleSession<double> s(*p, nullptr, counter);
    const VectorXd a = solve_linear_neumann(s, x, y, v, beta, N).value;
    const VectorXd b = solve_linear_fixed_point(s, x, y, v, beta, N).value;
    const VectorXd c =
        solve_linear_sgd(s, x, y, v, VectorXd::Zero(15).eval(), beta, N, 1).value;
    const double scale = std::max(1.0, a.norm());
    worst = std::max({worst, (a - b).norm() / scale, (a - c).norm() / scale});
  }
  // CG: finite termination within dy steps, on mildly conditioned systems
  double worst_res = 0;
  std::int64_t worst_iter = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = gen_quadratic<double>(4, 20, 10, 2, 700 + trial);
    Rng vr(mix_seed(trial, 4));
    const VectorXd x = gaussian_vector<double>(4, vr);
    const VectorXd y = gaussian_vector<double>(20, vr);
    const VectorXd v = gaussian_vector<double>(20, vr);
    OracleCounter counter;
    const auto r = solve_linear_cg(OracleSession<double>(*p, nullptr, counter), x, y, v,
                                   VectorXd::Zero(20).eval(), 1e-10, 20);
    worst_res = std::max(worst_res, (p->A_g() * r.value + v).norm() / std::max(1.0, v.norm()));
    worst_iter = std::max(worst_iter, r.iterations_used);
  }
  return {worst <= 1e-12 && worst_res <= 1e-10 && worst_iter <= 20,
          "Neumann/fixed-point/SGD max gap " + fmt(worst) + " (<= 1e-12); CG at dy=20, "
          "kappa_g=10: residual " + fmt(worst_res) + " (<= 1e-10) in " +
              std::to_string(worst_iter) + " <= 20 iterations"};
}

Verdict warm_start_advantage() {
  ex::ExperimentConfig c = ex::config_from_json(json::parse(R"({
      "problem": {"family": "quadratic", "dx": 200, "dy": 100, "kappa_g": 1000, "kappa_L": 10,
                  "seed": 0},
      "solver": {"schedule": "synthetic", "K": 1000000},
      "stop": {"metric": 1e-12, "max_cost": 100000},
      "eps": [1e-6, 1e-12],
      "sweep": {"methods": ["amigo-gd", "amigo-cg", "aid-gd", "aid-fp", "aid-n", "aid-cg"],
                "T": [1, 10, 100, 1000], "N": [1, 10, 100, 1000], "seeds": [0]}})"));
  const ex::SweepResult r = ex::run_sweep(c, 0);
  std::map<std::pair<std::string, double>, double> best;
  for (const json& b : r.best) {
    const double cost =
        b["cost"].is_null() ? std::numeric_limits<double>::infinity() : b["cost"].get<double>();
    best[{b["method"].get<std::string>(), b["eps"].get<double>()}] = cost;
  }
  const auto at = [&](const char* m, double e) { return best.at({m, e}); };
  bool pass = at("amigo-gd", 1e-6) < at("aid-gd", 1e-6);
  for (const char* m : {"amigo-gd", "aid-gd", "aid-fp", "aid-n", "amigo-cg"}) {
    pass = pass && at("amigo-cg", 1e-6) <= at(m, 1e-6);
  }
  // cold, unaccelerated linear solves must not reach 1e-12; some other method must
  bool any_reached = false;
  for (const char* m : {"amigo-gd", "amigo-cg", "aid-cg"}) {
    any_reached = any_reached || std::isfinite(at(m, 1e-12));
  }
  for (const char* m : {"aid-gd", "aid-fp", "aid-n"}) pass = pass && !std::isfinite(at(m, 1e-12));
  pass = pass && any_reached;
  std::string detail = "best C(1e-6) / C(1e-12):";
  for (const char* m : {"amigo-cg", "amigo-gd", "aid-cg", "aid-gd", "aid-fp", "aid-n"}) {
    detail += std::string(" ") + m + " " + fmt(at(m, 1e-6)) + "/" + fmt(at(m, 1e-12));
  }
  return {pass, detail + " (budget 1e5)"};
}

Verdict variance_floor_scaling() {
  std::vector<double> floors;
  for (const int b : {1, 4, 16}) {
    std::vector<double> per_seed;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ex::ExperimentConfig c = ex::config_from_json(json::parse(R"({
          "problem": {"family": "quadratic", "dx": 50, "dy": 30, "kappa_g": 10, "kappa_L": 10,
                      "seed": 8},
          "noise": {"sigma_f": 1, "sigma_g": 1},
          "method": "amigo-gd", "solver": {"schedule": "theorem1", "K": 600, "u": 1}})"));
      c.batch_f = c.batch_g = c.batch_gxy = c.batch_gyy = b;
      c.seed = seed;
      const ex::RunOutput r = ex::run_one(c);
      if (r.status != "ok") return {false, "run diverged: " + r.error};
      per_seed.push_back(
          tail_mean(r.rows, [](const MetricRow<double>& m) { return *m.loss_gap; }));
    }
    floors.push_back(median(per_seed));
  }
  const bool pass = floors[1] < floors[0] && floors[2] < floors[1] && floors[2] <= 0.5 * floors[0];
  return {pass, "median floor of L(x_hat)-L* at b=1,4,16: " + fmt(floors[0]) + ", " +
                    fmt(floors[1]) + ", " + fmt(floors[2]) + " (decreasing, b16 <= b1/2)"};
}

Verdict nonconvex_stationarity() {
  const char* base = R"({
      "problem": {"family": "nonconvex", "dx": 50, "dy": 30, "kappa_g": 10, "rho": 1, "seed": 9},
      "method": "amigo-gd", "solver": {"schedule": "theorem1", "K": 1000}})";
  const ex::RunOutput det = ex::run_one(ex::config_from_json(json::parse(base)));
  if (det.status != "ok") return {false, "deterministic run diverged: " + det.error};
  const double a100 = det.rows[100].metrics.avg_grad_norm_sq;
  const double a1000 = det.rows[1000].metrics.avg_grad_norm_sq;
  const double final_det = det.rows.back().metrics.grad_norm_sq;

  std::vector<double> floors;
  for (const int b : {1, 16}) {
    std::vector<double> per_seed;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ex::ExperimentConfig c = ex::config_from_json(json::parse(base));
      c.noise.sigma_f = c.noise.sigma_g = 1;
      c.batch_f = c.batch_g = c.batch_gxy = c.batch_gyy = b;
      c.seed = seed;
      const ex::RunOutput r = ex::run_one(c);
      if (r.status != "ok") return {false, "stochastic run diverged: " + r.error};
      per_seed.push_back(
          tail_mean(r.rows, [](const MetricRow<double>& m) { return m.grad_norm_sq; }));
    }
    floors.push_back(median(per_seed));
  }
  const bool rate_ok = a1000 <= 0.1 * a100;
  const bool floor_ok = floors[0] > 0 && floors[1] > 0 && floors[1] < floors[0] &&
                        floors[1] > final_det;
  return {rate_ok && floor_ok,
          "avg |grad L|^2 at k=100 " + fmt(a100) + ", k=1000 " + fmt(a1000) + " (ratio " +
              fmt(a1000 / a100) + " <= 0.1); stochastic floor b=1 " + fmt(floors[0]) +
              ", b=16 " + fmt(floors[1]) + " (positive, shrinking; deterministic " +
              fmt(final_det) + ")"};
}

Verdict complexity_accounting() {
  const auto p = gen_quadratic<double>(6, 12, 5, 3, 61);
  Rng rng(62);
  std::uniform_int_distribution<int> small(1, 6), batch(1, 4), outer(1, 8);
  int checked = 0;
  for (int trial = 0; trial < 5; ++trial) {
    SolverConfig<double> cfg;
    cfg.T = small(rng);
    cfg.N = small(rng);
    cfg.K = outer(rng);
    cfg.batch_g = batch(rng);
    cfg.batch_gyy = batch(rng);
    cfg.batch_gxy = batch(rng);
    cfg.batch_f = batch(rng);
    cfg.beta = 0.5;
    cfg.cg_tol = 0;
    const std::int64_t T = cfg.T, N = cfg.N, bg = cfg.batch_g, bgyy = cfg.batch_gyy,
                       bgxy = cfg.batch_gxy, bf = cfg.batch_f;
    const VectorXd x0 = VectorXd::Ones(6), y0 = VectorXd::Zero(12);

    struct Driver {
      std::string name;
      std::function<RunRecord<double>()> run;
      std::function<std::int64_t(std::int64_t)> cost;
    };
    const auto aid = [&](bool warm_z, LinearSolverKind kind) {
      SolverConfig<double> c = cfg;
      c.warm_z = warm_z;
      c.linear_solver = kind;
      return aid_family_run<double>(*p, c, x0, y0, VectorXd::Zero(12).eval(), nullptr);
    };
    const std::int64_t outer_part = T * bg + bf + bgxy;
    const std::vector<Driver> drivers = {
        {"amigo-gd", [&] { return amigo_run<double>(*p, cfg, x0, y0, y0, nullptr); },
         [&](std::int64_t k) { return complexity_formula(k, T, N, bg, bgyy, bgxy, bf); }},
        {"aid-gd", [&] { return aid(false, LinearSolverKind::sgd); },
         [&](std::int64_t k) { return k * (outer_part + N * bgyy); }},
        {"aid-fp", [&] { return aid(false, LinearSolverKind::fixed_point); },
         [&](std::int64_t k) { return k * (outer_part + N); }},
        {"aid-n", [&] { return aid(false, LinearSolverKind::neumann); },
         [&](std::int64_t k) { return k * (outer_part + N - 1); }},
        {"aid-cg", [&] { return aid(false, LinearSolverKind::cg); },
         [&](std::int64_t k) { return k * (outer_part + N); }},
        // a nonzero warm start adds the initial-residual product from k = 1 on
        {"amigo-cg", [&] { return aid(true, LinearSolverKind::cg); },
         [&](std::int64_t k) { return k * (outer_part + N) + std::max<std::int64_t>(k - 1, 0); }},
        {"itd",
         [&] {
           SolverConfig<double> c = cfg;
           return itd_run<double>(*p, c, x0, y0);
         },
         [&](std::int64_t k) { return k * (3 * T + 1); }},
        {"reverse",
         [&] {
           SolverConfig<double> c = cfg;
           c.increasing_T = true;
           return itd_run<double>(*p, c, x0, y0);
         },
         [&](std::int64_t k) {
           std::int64_t total = 0;
           for (std::int64_t i = 0; i < k; ++i) total += 3 * itd_inner_steps(T, true, i) + 1;
           return total;
         }},
    };
    for (const Driver& d : drivers) {
      const RunRecord<double> rec = d.run();
      for (const auto& row : rec.rows) {
        const std::int64_t want = d.cost(row.k);
        if (row.counter.total() != want) {
          return {false, d.name + " trial " + std::to_string(trial) + " k=" +
                             std::to_string(row.k) + ": counter " +
                             std::to_string(row.counter.total()) + " != " + std::to_string(want)};
        }
        ++checked;
      }
    }
  }
  return {true, std::to_string(checked) + " rows over 8 drivers x 5 configs match exactly"};
}

Verdict noise_contract() {
  const ex::ExperimentConfig c = ex::config_from_json(json::parse(R"({
      "problem": {"family": "quadratic", "dx": 20, "dy": 10, "kappa_g": 10, "seed": 12},
      "noise": {"sigma_f": 1, "sigma_g": 1, "sigma_gxy": 0.5, "sigma_gyy": 0.05}})"));
  const auto lines = ex::run_checks(c, 10000);
  bool pass = true;
  int n = 0;
  std::string worst;
  double worst_var_dev = 0;
  for (const auto& l : lines) {
    const bool noise_line = l.name.find("_bias") != std::string::npos ||
                            l.name.find("_variance") != std::string::npos;
    if (!noise_line) continue;
    ++n;
    pass = pass && l.pass;
    if (!l.pass) worst += " " + l.name + "=" + fmt(l.value);
    if (l.name.find("_variance") != std::string::npos) {
      worst_var_dev = std::max(worst_var_dev, std::abs(l.value / l.threshold - 1));
    }
  }
  pass = pass && n == 16;
  return {pass, std::to_string(n) + " bias/variance checks over 4 queries at b=1,16, 1e4 draws; "
                "max |variance ratio - 1| " + fmt(worst_var_dev) + (worst.empty() ? "" : ";" + worst)};
}

Verdict determinism() {
  ex::ExperimentConfig c = ex::config_from_json(json::parse(R"({
      "problem": {"family": "quadratic", "dx": 40, "dy": 30, "kappa_g": 50, "seed": 13},
      "noise": {"sigma_f": 0.5, "sigma_g": 0.5},
      "method": "amigo-gd", "seed": 14, "solver": {"K": 100, "u": 1}})"));
  const std::string a = csv_of(ex::run_one(c)), b = csv_of(ex::run_one(c));
  c.method = "itd";
  c.noise = {};
  const std::string d = csv_of(ex::run_one(c)), e = csv_of(ex::run_one(c));
  return {a == b && d == e, "stochastic amigo-gd and itd CSVs byte-identical across repeats"};
}

}  // namespace

int main() {
  // the run that criteria 3 and 4 share is timed under criterion 3
  report(1, "implicit-gradient exactness", 1, implicit_gradient_exactness);
  report(2, "finite-difference validation", 10, finite_difference_validation);
  report(3, "linear rate under the default schedule", 5, theorem1_linear_rate);
  report(4, "bias inheritance bound", 5, bias_inheritance_bound);
  report(5, "linear-solver identities", 2, linear_solver_identities);
  report(6, "warm-start complexity advantage", 180, warm_start_advantage);
  report(7, "stochastic variance-floor scaling", 120, variance_floor_scaling);
  report(8, "non-convex stationarity", 60, nonconvex_stationarity);
  report(9, "complexity accounting", 10, complexity_accounting);
  report(10, "oracle noise contract", 30, noise_contract);
  report(11, "determinism", 5, determinism);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
