// Command-line harness: generate | run | sweep | check | describe.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <typeinfo>

#include "CLI11.hpp"
#include "amigo/experiment.hpp"

namespace {

namespace ex = amigo::experiment;
using nlohmann::json;

struct Overrides {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> method;
  std::optional<double> kappa_g;
  std::optional<std::int64_t> T, N, K;
  std::vector<double> eps;
  std::optional<std::string> family;
  std::optional<std::string> problem_file;
  bool timing = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--out", o.out, "output path");
  cmd->add_option("--kappa-g", o.kappa_g, "inner condition number");
  cmd->add_option("--family", o.family, "quadratic | ridge | nonconvex");
}

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--method", o.method, "method name");
  cmd->add_option("--T", o.T, "inner iterations");
  cmd->add_option("--N", o.N, "linear-solver iterations");
  cmd->add_option("--K", o.K, "outer iterations");
  cmd->add_option("--eps", o.eps, "comma-separated targets for C(eps)")->delimiter(',');
  cmd->add_option("--problem", o.problem_file, "problem container to load");
  cmd->add_flag("--timing", o.timing, "fill the wall_s column");
}

ex::ExperimentConfig resolve(const Overrides& o) {
  ex::ExperimentConfig c = o.config_path.empty() ? ex::config_from_json(json::object())
                                                 : ex::load_config(o.config_path);
  if (o.family) {
    // family defaults replace the file's problem section, keeping the seed
    const std::int64_t seed = c.problem.seed;
    c.problem = amigo::io::header_from_json({{"family", *o.family}});
    c.problem.seed = seed;
  }
  if (o.kappa_g) c.problem.kappa_g = *o.kappa_g;
  if (o.method) c.method = *o.method;
  if (o.T) c.T = *o.T;
  if (o.N) c.N = *o.N;
  if (o.K) c.K = *o.K;
  if (!o.eps.empty()) c.eps = o.eps;
  if (o.problem_file) c.problem_file = *o.problem_file;
  if (o.workers) c.workers = *o.workers;
  if (o.timing) c.timing = true;
  return c;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw amigo::Error("cannot open '" + path + "' for writing");
  f << j.dump(2) << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw amigo::Error("cannot open '" + path + "' for writing");
  return f;
}

int cmd_generate(const Overrides& o) {
  ex::ExperimentConfig c = resolve(o);
  if (o.seed) c.problem.seed = static_cast<std::int64_t>(*o.seed);
  if (o.out.empty()) throw amigo::ConfigError("generate needs --out");
  const amigo::io::ProblemPtr p = amigo::io::generate(c.problem);
  amigo::io::write_problem(o.out, *p);
  write_json(o.out + ".json", amigo::io::header_to_json(amigo::io::header_of(*p)));
  return 0;
}

int cmd_run(const Overrides& o) {
  ex::ExperimentConfig c = resolve(o);
  if (o.seed) c.seed = *o.seed;
  const ex::RunOutput run = ex::run_one(c);
  const json summary = ex::run_summary(c, run);
  if (o.out.empty()) {
    ex::write_csv_header(std::cout);
    ex::write_csv_rows(std::cout, run);
    std::cerr << summary.dump(2) << '\n';
  } else {
    std::ofstream f = open_out(o.out);
    ex::write_csv_header(f);
    ex::write_csv_rows(f, run);
    write_json(sibling(o.out, ".summary.json"), summary);
  }
  return run.status == "ok" ? 0 : 3;
}

int cmd_sweep(const Overrides& o) {
  ex::ExperimentConfig c = resolve(o);
  if (o.seed) c.sweep.seeds = {*o.seed};
  const ex::SweepResult r = ex::run_sweep(c, o.workers.value_or(0));
  json failures = json::array();
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    if (r.runs[i].status == "ok") continue;
    const ex::SweepCell& s = r.cells[i];
    failures.push_back({{"method", s.method},
                        {"kappa_g", s.kappa_g},
                        {"T", s.T},
                        {"N", s.N},
                        {"batch", s.batch},
                        {"seed", s.seed},
                        {"status", r.runs[i].status},
                        {"error", r.runs[i].error}});
  }
  const json summary = {{"cells", r.cells.size()}, {"best", r.best}, {"failures", failures}};
  if (o.out.empty()) {
    ex::write_sweep_csv(std::cout, r);
    std::cerr << summary.dump(2) << '\n';
  } else {
    std::ofstream f = open_out(o.out);
    ex::write_sweep_csv(f, r);
    write_json(sibling(o.out, ".best.json"), summary);
  }
  return 0;
}

int cmd_check(const Overrides& o) {
  ex::ExperimentConfig c = resolve(o);
  if (o.seed) c.seed = *o.seed;
  const std::vector<ex::CheckLine> lines = ex::run_checks(c);
  for (const ex::CheckLine& l : lines) {
    std::printf("%s %-24s value=%-12.6g threshold=%-12.6g %s\n", l.pass ? "PASS" : "FAIL",
                l.name.c_str(), l.value, l.threshold, l.detail.c_str());
  }
  return 0;
}

int cmd_describe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw amigo::Error("cannot open '" + path + "'");
  std::cout << amigo::io::header_to_json(amigo::io::read_header(in)).dump(2) << '\n';
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const amigo::InvalidSpectrum*>(&e)) return "invalid_spectrum";
  if (dynamic_cast<const amigo::InvalidConstants*>(&e)) return "invalid_constants";
  if (dynamic_cast<const amigo::ConfigError*>(&e)) return "config";
  if (dynamic_cast<const amigo::DimensionMismatch*>(&e)) return "dimension_mismatch";
  if (dynamic_cast<const amigo::DivergenceError*>(&e)) return "divergence";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel optimization benchmark harness"};
  app.require_subcommand(1);
  Overrides o;

  CLI::App* gen = app.add_subcommand("generate", "write a problem container");
  add_common(gen, o);
  gen->add_option("--seed", o.seed, "problem seed");

  CLI::App* run = app.add_subcommand("run", "one (method, seed) run");
  add_common(run, o);
  add_run_flags(run, o);

  CLI::App* sweep = app.add_subcommand("sweep", "grid of runs");
  add_common(sweep, o);
  add_run_flags(sweep, o);
  sweep->add_option("--workers", o.workers, "concurrent cells (default: AMIGO_WORKERS or cores)");

  CLI::App* check = app.add_subcommand("check", "oracle property suite");
  add_common(check, o);
  check->add_option("--seed", o.seed, "probe seed");
  check->add_option("--problem", o.problem_file, "problem container to load");

  std::string describe_path;
  CLI::App* describe = app.add_subcommand("describe", "print a container header as JSON");
  describe->add_option("path", describe_path, "problem container")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(o);
    if (run->parsed()) return cmd_run(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (check->parsed()) return cmd_check(o);
    if (describe->parsed()) return cmd_describe(describe_path);
  } catch (const std::exception& e) {
    const json err = {{"error", {{"kind", error_kind(e)}, {"message", e.what()}}}};
    std::cerr << err.dump() << '\n';
    return 2;
  }
  return 0;
}
