#include "amigo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <thread>
#include <tuple>

#include "amigo/checks.hpp"

namespace amigo::experiment {

using json = nlohmann::json;

const std::vector<MethodSpec>& method_table() {
  using K = LinearSolverKind;
  static const std::vector<MethodSpec> table = {
      {"amigo-gd", Driver::aid, true, true, K::sgd, false},
      {"amigo-cg", Driver::aid, true, true, K::cg, false},
      {"aid-gd", Driver::aid, true, false, K::sgd, false},
      {"aid-cg", Driver::aid, true, false, K::cg, false},
      {"aid-cg-ws", Driver::aid, false, true, K::cg, false},
      {"aid-fp", Driver::aid, true, false, K::fixed_point, false},
      {"aid-n", Driver::aid, true, false, K::neumann, false},
      {"itd", Driver::itd, true, false, K::sgd, false},
      {"reverse", Driver::itd, true, false, K::sgd, true},
  };
  return table;
}

const MethodSpec& find_method(const std::string& name) {
  for (const MethodSpec& m : method_table()) {
    if (m.name == name) return m;
  }
  std::string known;
  for (const MethodSpec& m : method_table()) known += " " + m.name;
  throw ConfigError("unknown method '" + name + "' (known:" + known + ")");
}

// ---------------------------------------------------------------------------
// Config.
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  find_method(method);
  if (schedule != "theorem1" && schedule != "synthetic") {
    throw ConfigError("schedule must be 'theorem1' or 'synthetic'");
  }
  if (!(c_T > 0) || !(c_N > 0)) throw ConfigError("c_T and c_N must be positive");
  if (T && *T < 0) throw ConfigError("T must be nonnegative");
  if (N && *N < 0) throw ConfigError("N must be nonnegative");
  if (batch_f < 1 || batch_g < 1 || batch_gxy < 1 || batch_gyy < 1) {
    throw ConfigError("batch sizes must be positive");
  }
  if (K < 0) throw ConfigError("K must be nonnegative");
  if (u != 0 && u != 1) throw ConfigError("u must be 0 or 1");
  for (double e : eps) {
    if (!(e > 0)) throw ConfigError("eps targets must be positive");
  }
  if (problem.family != ProblemFamily::ridge) {
    check_kappa(problem.kappa_g, "kappa_g");
    if (problem.family == ProblemFamily::quadratic) check_kappa(problem.kappa_L, "kappa_L");
  }
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j,
                   {"problem", "noise", "method", "solver", "seed", "eps", "stop", "x0_scale",
                    "timing", "sweep", "workers"},
                   "config");
    if (j.contains("problem")) {
      const json& p = j.at("problem");
      reject_unknown(p,
                     {"family", "dx", "dy", "d", "n_tr", "n_val", "kappa_g", "kappa_L", "rho",
                      "label_noise", "seed", "file"},
                     "problem");
      c.problem = io::header_from_json(p);
      read_opt(p, "file", c.problem_file);
    } else {
      c.problem = io::header_from_json(json::object());
    }
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      reject_unknown(n, {"sigma_f", "sigma_g", "sigma_gxy", "sigma_gyy", "bounded_hessian_noise"},
                     "noise");
      read(n, "sigma_f", c.noise.sigma_f);
      read(n, "sigma_g", c.noise.sigma_g);
      read(n, "sigma_gxy", c.noise.sigma_gxy);
      read(n, "sigma_gyy", c.noise.sigma_gyy);
      read(n, "bounded_hessian_noise", c.noise.bounded_hessian_noise);
    }
    read(j, "method", c.method);
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      reject_unknown(s,
                     {"schedule", "c_T", "c_N", "exact_TN", "T", "N", "alpha", "beta", "gamma",
                      "batch", "batch_f", "batch_g", "batch_gxy", "batch_gyy", "K", "u",
                      "cg_tol", "mu_outer"},
                     "solver");
      read(s, "schedule", c.schedule);
      read(s, "c_T", c.c_T);
      read(s, "c_N", c.c_N);
      read(s, "exact_TN", c.exact_TN);
      read_opt(s, "T", c.T);
      read_opt(s, "N", c.N);
      read_opt(s, "alpha", c.alpha);
      read_opt(s, "beta", c.beta);
      read_opt(s, "gamma", c.gamma);
      if (s.contains("batch")) {
        const auto b = s.at("batch").get<std::int64_t>();
        c.batch_f = c.batch_g = c.batch_gxy = c.batch_gyy = b;
      }
      read(s, "batch_f", c.batch_f);
      read(s, "batch_g", c.batch_g);
      read(s, "batch_gxy", c.batch_gxy);
      read(s, "batch_gyy", c.batch_gyy);
      read(s, "K", c.K);
      read(s, "u", c.u);
      read(s, "cg_tol", c.cg_tol);
      read_opt(s, "mu_outer", c.mu_outer);
    }
    read(j, "seed", c.seed);
    read(j, "eps", c.eps);
    if (j.contains("stop")) {
      const json& s = j.at("stop");
      reject_unknown(s, {"metric", "max_cost"}, "stop");
      read_opt(s, "metric", c.stop_metric);
      read_opt(s, "max_cost", c.max_cost);
    }
    read(j, "x0_scale", c.x0_scale);
    read(j, "timing", c.timing);
    read(j, "workers", c.workers);
    if (j.contains("sweep")) {
      const json& s = j.at("sweep");
      reject_unknown(s, {"methods", "kappa_g", "T", "N", "batch", "seeds"}, "sweep");
      read(s, "methods", c.sweep.methods);
      read(s, "kappa_g", c.sweep.kappa_g);
      read(s, "T", c.sweep.T);
      read(s, "N", c.sweep.N);
      read(s, "batch", c.sweep.batch);
      if (s.contains("seeds")) {
        c.sweep.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
        if (c.sweep.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["problem"] = io::header_to_json(c.problem);
  if (c.problem_file) j["problem"]["file"] = *c.problem_file;
  j["noise"] = {{"sigma_f", c.noise.sigma_f},
                {"sigma_g", c.noise.sigma_g},
                {"sigma_gxy", c.noise.sigma_gxy},
                {"sigma_gyy", c.noise.sigma_gyy},
                {"bounded_hessian_noise", c.noise.bounded_hessian_noise}};
  j["method"] = c.method;
  json s = {{"schedule", c.schedule}, {"c_T", c.c_T},         {"c_N", c.c_N},
            {"exact_TN", c.exact_TN}, {"batch_f", c.batch_f}, {"batch_g", c.batch_g},
            {"batch_gxy", c.batch_gxy}, {"batch_gyy", c.batch_gyy}, {"K", c.K},
            {"u", c.u},               {"cg_tol", c.cg_tol}};
  if (c.T) s["T"] = *c.T;
  if (c.N) s["N"] = *c.N;
  if (c.alpha) s["alpha"] = *c.alpha;
  if (c.beta) s["beta"] = *c.beta;
  if (c.gamma) s["gamma"] = *c.gamma;
  if (c.mu_outer) s["mu_outer"] = *c.mu_outer;
  j["solver"] = s;
  j["seed"] = c.seed;
  j["eps"] = c.eps;
  json stop = json::object();
  if (c.stop_metric) stop["metric"] = *c.stop_metric;
  if (c.max_cost) stop["max_cost"] = *c.max_cost;
  j["stop"] = stop;
  j["x0_scale"] = c.x0_scale;
  j["timing"] = c.timing;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Single runs.
// ---------------------------------------------------------------------------

io::ProblemPtr build_problem(const ExperimentConfig& c) {
  io::ProblemPtr base = c.problem_file ? io::read_problem(*c.problem_file) : io::generate(c.problem);
  if (c.noise.is_zero()) return base;
  const auto seed = mix_seed(static_cast<std::uint64_t>(c.problem.seed), 303);
  return make_stochastic<double>(base, c.noise, seed);
}

std::optional<double> resolve_mu_outer(const ExperimentConfig& c, const BilevelOracle<double>& p) {
  if (c.mu_outer) return c.mu_outer;
  if (const ClosedForms<double>* cf = p.closed_forms()) {
    if (auto mu = cf->mu_outer()) return mu;
  }
  if (c.problem.family == ProblemFamily::nonconvex) return -1.0;
  return std::nullopt;
}

SolverConfig<double> resolve_solver_config(const ExperimentConfig& c,
                                           const BilevelOracle<double>& p) {
  c.validate();
  const MethodSpec& m = find_method(c.method);
  const SmoothnessConstants<double> k = p.constants();
  const std::optional<double> mu = resolve_mu_outer(c, p);

  SolverConfig<double> s;
  if (c.schedule == "theorem1") {
    // the exact constants use batch-divided variances
    NoiseSpec<double> eff = c.noise;
    eff.sigma_gxy /= std::sqrt(double(c.batch_gxy));
    eff.sigma_gyy /= std::sqrt(double(c.batch_gyy));
    const Schedule<double> sched = theorem1_schedule(k, mu, c.c_T, c.c_N, c.exact_TN, eff);
    s = sched.config;
    if (sched.diagnostics.exact_TN) {
      s.T = sched.diagnostics.exact_TN->T;
      s.N = sched.diagnostics.exact_TN->N;
    }
  } else {
    const DerivedConstants<double> d = derive_constants(k, mu);
    s.alpha = 1 / k.L_g;
    s.beta = 1 / k.L_g;
    s.gamma = 1 / d.outer_smoothness();
    s.T = static_cast<std::int64_t>(std::ceil(c.c_T * d.kappa_g - 1e-12));
    s.N = static_cast<std::int64_t>(std::ceil(c.c_N * d.kappa_g - 1e-12));
  }
  if (c.T) s.T = *c.T;
  if (c.N) s.N = *c.N;
  if (c.alpha) s.alpha = *c.alpha;
  if (c.beta) s.beta = *c.beta;
  if (c.gamma) s.gamma = *c.gamma;
  s.batch_f = c.batch_f;
  s.batch_g = c.batch_g;
  s.batch_gxy = c.batch_gxy;
  s.batch_gyy = c.batch_gyy;
  s.warm_y = m.warm_y;
  s.warm_z = m.warm_z;
  s.linear_solver = m.linear_solver;
  s.increasing_T = m.increasing_T;
  s.cg_tol = c.cg_tol;
  s.K = c.K;
  s.u = c.u;
  s.mu_outer = mu;
  s.validate();
  return s;
}

std::optional<double> target_metric(const MetricRow<double>& m) {
  if (m.rel_error) return m.rel_error;
  if (std::isfinite(m.grad_norm_sq)) return m.grad_norm_sq;
  return std::nullopt;
}

std::optional<std::int64_t> complexity_to_reach(const std::vector<CsvRow>& rows, double eps) {
  for (const CsvRow& r : rows) {
    const std::optional<double> t = target_metric(r.metrics);
    if (t && *t <= eps) return r.metrics.cost_so_far;
  }
  return std::nullopt;
}

RunOutput run_one(const ExperimentConfig& c, const BilevelOracle<double>& p) {
  RunOutput out;
  out.method = c.method;
  out.seed = c.seed;
  out.solver = resolve_solver_config(c, p);
  const SolverConfig<double>& s = out.solver;
  const MethodSpec& m = find_method(c.method);
  const Dims dims = p.dims();

  Rng x_rng(mix_seed(c.seed, 101));
  const VectorXd x0 = c.x0_scale * gaussian_vector<double>(dims.dx, x_rng);
  const VectorXd y0 = VectorXd::Zero(dims.dy);
  const VectorXd z0 = VectorXd::Zero(dims.dy);
  Rng run_rng(mix_seed(c.seed, 202));
  Rng* rng = p.noise().is_zero() ? nullptr : &run_rng;

  MetricSettings<double> settings;
  settings.mu_outer = s.mu_outer;
  settings.gamma = s.gamma;
  settings.L_outer = 1 / s.gamma;
  settings.u = s.mu_outer && *s.mu_outer > 0 ? s.u : 0;
  MetricTracker<double> tracker(p, x0, settings);
  const bool use_average = settings.u == 1;
  detail::Stopwatch clock;

  const IterationHook<double> hook = [&](const IterateView<double>& v) {
    const VectorXd& x = use_average && v.x_hat != nullptr ? *v.x_hat : *v.x;
    HookResult<double> r;
    r.metrics = tracker(v.k, x, v.counter);
    CsvRow row;
    row.k = v.k;
    row.metrics = *r.metrics;
    if (c.timing) row.wall_s = clock.seconds();
    out.rows.push_back(row);
    const std::optional<double> t = target_metric(row.metrics);
    if (c.stop_metric && t && *t <= *c.stop_metric) r.stop = true;
    if (c.max_cost && row.metrics.cost_so_far >= *c.max_cost) r.stop = true;
    return r;
  };

  try {
    if (m.driver == Driver::itd) {
      itd_run(p, s, x0, y0, hook);
    } else {
      aid_family_run(p, s, x0, y0, z0, rng, hook);
    }
  } catch (const DivergenceError& e) {
    out.status = "diverged";
    out.error = e.what();
    out.failed_iteration = e.step();
  }
  out.wall_s = clock.seconds();
  for (double e : c.eps) out.c_eps.push_back(complexity_to_reach(out.rows, e));
  return out;
}

RunOutput run_one(const ExperimentConfig& c) {
  const io::ProblemPtr p = build_problem(c);
  return run_one(c, *p);
}

// ---------------------------------------------------------------------------
// Output.
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string opt_field(const std::optional<double>& v) {
  return v && !std::isnan(*v) ? format_double(*v) : std::string();
}

json opt_json(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

std::string eps_key(double e) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", e);
  return buf;
}

}  // namespace

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n'; }

void write_csv_rows(std::ostream& out, const RunOutput& run, const std::string& prefix) {
  for (const CsvRow& r : run.rows) {
    const MetricRow<double>& m = r.metrics;
    out << prefix << run.method << ',' << run.seed << ',' << r.k << ',' << opt_field(m.rel_error)
        << ',' << opt_field(m.grad_norm_sq) << ',' << opt_field(m.avg_grad_norm_sq) << ','
        << opt_field(m.combined_sc) << ',' << opt_field(m.energy_x) << ',' << m.cost_so_far << ','
        << opt_field(r.wall_s) << '\n';
  }
}

json run_summary(const ExperimentConfig& c, const RunOutput& run) {
  json j;
  j["method"] = run.method;
  j["seed"] = run.seed;
  j["status"] = run.status;
  if (!run.error.empty()) j["error"] = run.error;
  if (run.failed_iteration) j["failed_iteration"] = *run.failed_iteration;
  j["problem"] = io::header_to_json(c.problem);
  const SolverConfig<double>& s = run.solver;
  j["solver"] = {{"alpha", s.alpha},         {"beta", s.beta},
                 {"gamma", s.gamma},         {"T", s.T},
                 {"N", s.N},                 {"batch_f", s.batch_f},
                 {"batch_g", s.batch_g},     {"batch_gxy", s.batch_gxy},
                 {"batch_gyy", s.batch_gyy}, {"K", s.K},
                 {"u", s.u},                 {"linear_solver", to_string(s.linear_solver)},
                 {"warm_y", s.warm_y},       {"warm_z", s.warm_z}};
  if (!run.rows.empty()) {
    const MetricRow<double>& m = run.rows.back().metrics;
    j["final"] = {{"k", run.rows.back().k},
                  {"rel_error", opt_json(m.rel_error)},
                  {"grad_norm_sq", opt_json(m.grad_norm_sq)},
                  {"avg_grad_norm_sq", opt_json(m.avg_grad_norm_sq)},
                  {"combined_sc", opt_json(m.combined_sc)},
                  {"energy_x", opt_json(m.energy_x)},
                  {"cost", m.cost_so_far}};
  }
  json ce = json::object();
  for (std::size_t i = 0; i < c.eps.size() && i < run.c_eps.size(); ++i) {
    ce[eps_key(c.eps[i])] = run.c_eps[i] ? json(*run.c_eps[i]) : json(nullptr);
  }
  j["C_eps"] = ce;
  j["wall_s"] = run.wall_s;
  return j;
}

// ---------------------------------------------------------------------------
// Sweeps.
// ---------------------------------------------------------------------------

int default_workers() {
  if (const char* env = std::getenv("AMIGO_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<SweepCell> sweep_cells(const ExperimentConfig& c) {
  const SweepAxes& a = c.sweep;
  const std::vector<std::string> methods = a.methods.empty() ? std::vector{c.method} : a.methods;
  const std::vector<double> kappas = a.kappa_g.empty() ? std::vector{c.problem.kappa_g} : a.kappa_g;
  const std::vector<std::uint64_t> seeds = a.seeds.empty() ? std::vector{c.seed} : a.seeds;
  const std::vector<std::int64_t> batches =
      a.batch.empty() ? std::vector<std::int64_t>{c.batch_g} : a.batch;
  // -1 marks "use the schedule's value"
  const std::vector<std::int64_t> Ts = a.T.empty() ? std::vector<std::int64_t>{-1} : a.T;
  const std::vector<std::int64_t> Ns = a.N.empty() ? std::vector<std::int64_t>{-1} : a.N;
  for (const std::string& m : methods) find_method(m);

  std::vector<SweepCell> cells;
  for (double kappa : kappas) {
    for (const std::string& m : methods) {
      // N does not enter the unrolled drivers, so their N axis collapses
      const bool unrolled = find_method(m).driver == Driver::itd;
      for (std::int64_t T : Ts) {
        for (std::size_t ni = 0; ni < (unrolled ? 1 : Ns.size()); ++ni) {
          for (std::int64_t b : batches) {
            for (std::uint64_t seed : seeds) {
              cells.push_back({m, kappa, T, unrolled ? -1 : Ns[ni], b, seed});
            }
          }
        }
      }
    }
  }
  return cells;
}

namespace {

ExperimentConfig cell_config(const ExperimentConfig& base, const SweepCell& cell) {
  ExperimentConfig c = base;
  c.method = cell.method;
  c.problem.kappa_g = cell.kappa_g;
  if (cell.T >= 0) c.T = cell.T;
  if (cell.N >= 0) c.N = cell.N;
  c.batch_f = c.batch_g = c.batch_gxy = c.batch_gyy = cell.batch;
  c.seed = cell.seed;
  return c;
}

double median_cost(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::infinity();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json best_cells(const ExperimentConfig& c, const std::vector<SweepCell>& cells,
                const std::vector<RunOutput>& runs) {
  struct Key {
    std::string method;
    double kappa;
    std::int64_t T, N, batch;
    bool operator<(const Key& o) const {
      return std::tie(method, kappa, T, N, batch) < std::tie(o.method, o.kappa, o.T, o.N, o.batch);
    }
  };
  json out = json::array();
  for (std::size_t ei = 0; ei < c.eps.size(); ++ei) {
    std::map<Key, std::vector<double>> costs;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const SweepCell& s = cells[i];
      const Key key{s.method, s.kappa_g, s.T, s.N, s.batch};
      const auto& ce = runs[i].c_eps;
      const double v = ei < ce.size() && ce[ei] ? double(*ce[ei])
                                                : std::numeric_limits<double>::infinity();
      costs[key].push_back(v);
    }
    std::map<std::pair<std::string, double>, std::pair<double, Key>> best;
    for (const auto& [key, v] : costs) {
      const double med = median_cost(v);
      const auto id = std::make_pair(key.method, key.kappa);
      auto it = best.find(id);
      if (it == best.end() || med < it->second.first) best[id] = {med, key};
    }
    for (const auto& [id, entry] : best) {
      const auto& [med, key] = entry;
      json row = {{"method", id.first}, {"kappa_g", id.second}, {"eps", c.eps[ei]}};
      if (std::isfinite(med)) {
        row["cost"] = med;
        row["T"] = key.T;
        row["N"] = key.N;
        row["batch"] = key.batch;
      } else {
        row["cost"] = nullptr;
      }
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& c, int workers) {
  SweepResult r;
  r.cells = sweep_cells(c);
  r.runs.resize(r.cells.size());
  if (workers <= 0) workers = c.workers > 0 ? c.workers : default_workers();
  workers = std::max(1, std::min<int>(workers, static_cast<int>(r.cells.size())));

  std::atomic<std::size_t> next{0};
  const auto work = [&]() {
    for (std::size_t i = next++; i < r.cells.size(); i = next++) {
      const SweepCell& cell = r.cells[i];
      RunOutput& out = r.runs[i];
      try {
        out = run_one(cell_config(c, cell));
      } catch (const std::exception& e) {
        out.method = cell.method;
        out.seed = cell.seed;
        out.status = "failed";
        out.error = e.what();
        out.c_eps.assign(c.eps.size(), std::nullopt);
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  r.best = best_cells(c, r.cells, r.runs);
  return r;
}

void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << kSweepCsvHeader << '\n';
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    const SweepCell& s = r.cells[i];
    const RunOutput& run = r.runs[i];
    const std::string prefix = format_double(s.kappa_g) + ',' + std::to_string(run.solver.T) + ',' +
                               std::to_string(run.solver.N) + ',' + std::to_string(s.batch) + ',';
    write_csv_rows(out, run, prefix);
  }
}

// ---------------------------------------------------------------------------
// Property checks.
// ---------------------------------------------------------------------------

std::vector<CheckLine> run_checks(const ExperimentConfig& c, int draws) {
  std::vector<CheckLine> lines;
  const io::ProblemPtr base =
      c.problem_file ? io::read_problem(*c.problem_file) : io::generate(c.problem);
  const io::ProblemPtr p = build_problem(c);
  const Dims dims = p->dims();
  const auto* ridge = dynamic_cast<const RidgeHPOProblem<double>*>(base.get());
  Rng rng(mix_seed(c.seed, 404));

  if (p->closed_forms() != nullptr) {
    const double tol = ridge != nullptr ? 1e-5 : 1e-6;
    double worst = 0;
    for (int i = 0; i < 5; ++i) {
      const VectorXd x = c.x0_scale * gaussian_vector<double>(dims.dx, rng);
      worst = std::max(worst, fd_gradient_error(*base, x, 1e-5));
    }
    lines.push_back({"fd_gradient", worst, tol, worst <= tol, "max relative error, 5 points"});
  }

  {
    const VectorXd x = c.x0_scale * gaussian_vector<double>(dims.dx, rng);
    const VectorXd y = gaussian_vector<double>(dims.dy, rng);
    const SmoothnessConstants<double> k = ridge != nullptr ? ridge->constants_at(x)
                                                           : base->constants();
    const auto [lo, hi] = hvp_rayleigh_range(*base, x, y, 50, rng);
    const double slack = 1e-9;
    lines.push_back({"hvp_lower", lo, k.mu_g, lo >= k.mu_g * (1 - slack), "min v'Hv >= mu_g"});
    lines.push_back({"hvp_upper", hi, k.L_g, hi <= k.L_g * (1 + slack), "max v'Hv <= L_g"});
  }

  const NoiseSpec<double> ns = p->noise();
  if (!ns.is_zero()) {
    const VectorXd x = c.x0_scale * gaussian_vector<double>(dims.dx, rng);
    const VectorXd y = gaussian_vector<double>(dims.dy, rng);
    VectorXd probe = gaussian_vector<double>(dims.dy, rng);
    probe.normalize();
    const std::pair<QueryKind, double> kinds[] = {{QueryKind::grad_f, ns.sigma_f},
                                                  {QueryKind::grad_g, ns.sigma_g},
                                                  {QueryKind::jvp, ns.sigma_gxy},
                                                  {QueryKind::hvp, ns.sigma_gyy}};
    for (const auto& [kind, sigma] : kinds) {
      if (sigma == 0) continue;
      for (std::int64_t b : {std::int64_t(1), std::int64_t(16)}) {
        const NoiseMoments<double> m = noise_moments(*p, kind, x, y, probe, b, draws, rng);
        const std::string tag = to_string(kind) + "_b" + std::to_string(b);
        const double bias_tol = 4 * std::sqrt(m.expected_sq_dev / draws);
        lines.push_back({tag + "_bias", m.mean_dev_norm, bias_tol, m.mean_dev_norm <= bias_tol,
                         "norm of the mean deviation"});
        const double ratio = m.expected_sq_dev > 0 ? m.mean_sq_dev / m.expected_sq_dev : 0;
        lines.push_back({tag + "_variance", m.mean_sq_dev, m.expected_sq_dev,
                         ratio >= 0.8 && ratio <= 1.2, "within [0.8, 1.2] of sigma^2/b"});
      }
    }
  }
  return lines;
}

}  // namespace amigo::experiment
