#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amigo/io.hpp"
#include "amigo/outer.hpp"

namespace amigo::experiment {

enum class Driver { aid, itd };

/// One row of the method table: which driver runs it, how the inner and
/// linear solvers are started, and which linear solver is used.
struct MethodSpec {
  std::string name;
  Driver driver = Driver::aid;
  bool warm_y = true;
  bool warm_z = true;
  LinearSolverKind linear_solver = LinearSolverKind::sgd;
  bool increasing_T = false;
};

const std::vector<MethodSpec>& method_table();
/// Throws ConfigError for unknown names.
const MethodSpec& find_method(const std::string& name);

struct SweepAxes {
  std::vector<std::string> methods;
  std::vector<double> kappa_g;
  std::vector<std::int64_t> T;
  std::vector<std::int64_t> N;
  /// Applied to all four batch sizes of a cell.
  std::vector<std::int64_t> batch;
  std::vector<std::uint64_t> seeds;
};

struct ExperimentConfig {
  ProblemHeader problem;
  /// Load the problem from a container instead of generating it.
  std::optional<std::string> problem_file;
  NoiseSpec<double> noise;

  std::string method = "amigo-gd";
  /// "theorem1" (α = 1/L_g, β = 1/(2L_g), T, N = ⌈c κ_g⌉) or "synthetic"
  /// (α = β = 1/L_g).
  std::string schedule = "theorem1";
  double c_T = 1;
  double c_N = 1;
  bool exact_TN = false;
  std::optional<std::int64_t> T, N;
  std::optional<double> alpha, beta, gamma;
  std::int64_t batch_f = 1, batch_g = 1, batch_gxy = 1, batch_gyy = 1;
  std::int64_t K = 100;
  int u = 0;
  double cg_tol = 1e-10;
  std::optional<double> mu_outer;

  std::uint64_t seed = 0;
  double x0_scale = 1;
  std::vector<double> eps = {1e-2, 1e-4, 1e-6};
  /// Early stops: target metric at or below this value, or cost at or above.
  std::optional<double> stop_metric;
  std::optional<std::int64_t> max_cost;
  /// Fill the wall_s column. Off by default so that CSV output is reproducible.
  bool timing = false;

  SweepAxes sweep;
  int workers = 0;

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

/// The oracle a config describes, with the noise wrapper applied when any
/// variance is positive.
io::ProblemPtr build_problem(const ExperimentConfig& c);

/// Effective outer strong-convexity modulus: config override, then the
/// problem's closed form, then −1 for the non-convex family.
std::optional<double> resolve_mu_outer(const ExperimentConfig& c, const BilevelOracle<double>& p);

SolverConfig<double> resolve_solver_config(const ExperimentConfig& c,
                                           const BilevelOracle<double>& p);

struct CsvRow {
  std::int64_t k = 0;
  MetricRow<double> metrics;
  std::optional<double> wall_s;
};

struct RunOutput {
  std::string method;
  std::uint64_t seed = 0;
  SolverConfig<double> solver;
  std::vector<CsvRow> rows;
  /// C(ε) per requested ε, absent when never reached.
  std::vector<std::optional<std::int64_t>> c_eps;
  std::string status = "ok";
  std::string error;
  std::optional<std::int64_t> failed_iteration;
  double wall_s = 0;
};

/// The metric C(ε) thresholds: rel_error where defined, else ‖∇L‖².
std::optional<double> target_metric(const MetricRow<double>& m);

/// Smallest recorded cost whose target metric is at or below eps.
std::optional<std::int64_t> complexity_to_reach(const std::vector<CsvRow>& rows, double eps);

RunOutput run_one(const ExperimentConfig& c, const BilevelOracle<double>& problem);
RunOutput run_one(const ExperimentConfig& c);

inline constexpr const char* kCsvHeader =
    "method,seed,k,rel_error,grad_norm_sq,avg_grad_norm_sq,combined_sc,energy_x,cost,wall_s";

void write_csv_header(std::ostream& out);
void write_csv_rows(std::ostream& out, const RunOutput& run, const std::string& prefix = "");
nlohmann::json run_summary(const ExperimentConfig& c, const RunOutput& run);

struct SweepCell {
  std::string method;
  double kappa_g = 0;
  std::int64_t T = 0;
  std::int64_t N = 0;
  std::int64_t batch = 1;
  std::uint64_t seed = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<RunOutput> runs;
  /// Per (method, κ_g): the grid cell with the smallest median C(ε) over
  /// seeds, for each ε.
  nlohmann::json best;
};

std::vector<SweepCell> sweep_cells(const ExperimentConfig& c);
/// workers <= 0 picks AMIGO_WORKERS, then the hardware concurrency.
SweepResult run_sweep(const ExperimentConfig& c, int workers);
int default_workers();

inline constexpr const char* kSweepCsvHeader =
    "kappa_g,T,N,batch,method,seed,k,rel_error,grad_norm_sq,avg_grad_norm_sq,combined_sc,"
    "energy_x,cost,wall_s";
void write_sweep_csv(std::ostream& out, const SweepResult& r);

struct CheckLine {
  std::string name;
  double value = 0;
  double threshold = 0;
  bool pass = false;
  std::string detail;
};

/// Oracle property suite: finite differences, HVP spectrum bounds and, for
/// noisy problems, unbiasedness and variance of every noisy query.
std::vector<CheckLine> run_checks(const ExperimentConfig& c, int draws = 10000);

std::string format_double(double v);

}  // namespace amigo::experiment
