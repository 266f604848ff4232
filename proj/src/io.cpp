#include "amigo/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace amigo::io {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw Error("problem file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[i]) << (8 * i);
  return v;
}

void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }
std::int64_t get_i64(std::istream& in) { return static_cast<std::int64_t>(get_u64(in)); }
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_matrix(std::ostream& out, const MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
}

MatrixXd get_matrix(std::istream& in, std::int64_t rows, std::int64_t cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get_f64(in);
  return m;
}

VectorXd get_vector(std::istream& in, std::int64_t n) { return get_matrix(in, n, 1).col(0); }

void put_header(std::ostream& out, const ProblemHeader& h) {
  out.write(kMagic, sizeof(kMagic));
  put_i64(out, kVersion);
  put_i64(out, static_cast<std::int64_t>(h.family));
  put_i64(out, h.dx);
  put_i64(out, h.dy);
  put_i64(out, h.seed);
  put_i64(out, h.n_tr);
  put_i64(out, h.n_val);
  put_f64(out, h.kappa_g);
  put_f64(out, h.kappa_L);
  put_f64(out, h.rho);
  put_f64(out, h.label_noise);
}

void check_sizes(const ProblemHeader& h) {
  constexpr std::int64_t limit = std::int64_t(1) << 24;
  const std::int64_t dims[] = {h.dx, h.dy, h.n_tr, h.n_val};
  for (std::int64_t d : dims) {
    if (d < 0 || d > limit) throw Error("problem file header has implausible dimensions");
  }
}

}  // namespace

ProblemPtr generate(const ProblemHeader& h) {
  const auto seed = static_cast<std::uint64_t>(h.seed);
  switch (h.family) {
    case ProblemFamily::quadratic:
      return gen_quadratic<double>(h.dx, h.dy, h.kappa_g, h.kappa_L, seed);
    case ProblemFamily::nonconvex:
      return gen_nonconvex<double>(h.dx, h.dy, h.rho, h.kappa_g, seed);
    case ProblemFamily::ridge:
      return gen_ridge_hpo<double>(h.n_tr, h.n_val, h.dx, h.label_noise, seed);
  }
  throw ConfigError("unknown problem family");
}

ProblemHeader header_of(const BilevelOracle<double>& problem) {
  if (const auto* q = dynamic_cast<const QuadraticProblem<double>*>(&problem)) return q->header();
  if (const auto* n = dynamic_cast<const NonconvexOuterProblem<double>*>(&problem)) {
    return n->header();
  }
  if (const auto* r = dynamic_cast<const RidgeHPOProblem<double>*>(&problem)) return r->header();
  throw UnsupportedOperation("only generated problems carry a header");
}

void write_problem(std::ostream& out, const BilevelOracle<double>& problem) {
  put_header(out, header_of(problem));
  if (const auto* q = dynamic_cast<const QuadraticProblem<double>*>(&problem)) {
    put_matrix(out, q->A_f());
    put_matrix(out, q->A_g());
    put_matrix(out, q->B_g());
    put_matrix(out, q->C_f());
  } else if (const auto* n = dynamic_cast<const NonconvexOuterProblem<double>*>(&problem)) {
    put_matrix(out, n->A_g());
    put_matrix(out, n->B_g());
    put_matrix(out, n->C_f());
  } else if (const auto* r = dynamic_cast<const RidgeHPOProblem<double>*>(&problem)) {
    put_matrix(out, r->A_tr());
    put_matrix(out, r->b_tr());
    put_matrix(out, r->A_val());
    put_matrix(out, r->b_val());
  }
  if (!out) throw Error("failed writing problem container");
}

void write_problem(const std::string& path, const BilevelOracle<double>& problem) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_problem(out, problem);
}

ProblemHeader read_header(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error("not a problem container (bad magic)");
  const std::int64_t version = get_i64(in);
  if (version != kVersion) throw Error("unsupported container version " + std::to_string(version));
  ProblemHeader h;
  const std::int64_t family = get_i64(in);
  if (family < 1 || family > 3) throw Error("unknown family tag " + std::to_string(family));
  h.family = static_cast<ProblemFamily>(family);
  h.dx = get_i64(in);
  h.dy = get_i64(in);
  h.seed = get_i64(in);
  h.n_tr = get_i64(in);
  h.n_val = get_i64(in);
  h.kappa_g = get_f64(in);
  h.kappa_L = get_f64(in);
  h.rho = get_f64(in);
  h.label_noise = get_f64(in);
  check_sizes(h);
  return h;
}

ProblemPtr read_problem(std::istream& in) {
  const ProblemHeader h = read_header(in);
  switch (h.family) {
    case ProblemFamily::quadratic: {
      MatrixXd A_f = get_matrix(in, h.dx, h.dx);
      MatrixXd A_g = get_matrix(in, h.dy, h.dy);
      MatrixXd B_g = get_matrix(in, h.dy, h.dx);
      VectorXd C_f = get_vector(in, h.dy);
      return std::make_shared<QuadraticProblem<double>>(std::move(A_f), std::move(C_f),
                                                        std::move(A_g), std::move(B_g), h);
    }
    case ProblemFamily::nonconvex: {
      MatrixXd A_g = get_matrix(in, h.dy, h.dy);
      MatrixXd B_g = get_matrix(in, h.dy, h.dx);
      VectorXd C_f = get_vector(in, h.dy);
      return std::make_shared<NonconvexOuterProblem<double>>(std::move(C_f), std::move(A_g),
                                                             std::move(B_g), h);
    }
    case ProblemFamily::ridge: {
      MatrixXd A_tr = get_matrix(in, h.n_tr, h.dx);
      VectorXd b_tr = get_vector(in, h.n_tr);
      MatrixXd A_val = get_matrix(in, h.n_val, h.dx);
      VectorXd b_val = get_vector(in, h.n_val);
      return std::make_shared<RidgeHPOProblem<double>>(std::move(A_tr), std::move(b_tr),
                                                       std::move(A_val), std::move(b_val), h);
    }
  }
  throw Error("unknown family");
}

ProblemPtr read_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_problem(in);
}

nlohmann::json header_to_json(const ProblemHeader& h) {
  return {{"family", to_string(h.family)}, {"dx", h.dx},
          {"dy", h.dy},                    {"seed", h.seed},
          {"n_tr", h.n_tr},                {"n_val", h.n_val},
          {"kappa_g", h.kappa_g},          {"kappa_L", h.kappa_L},
          {"rho", h.rho},                  {"label_noise", h.label_noise}};
}

ProblemHeader header_from_json(const nlohmann::json& j) {
  ProblemHeader h;
  h.family = parse_family(j.value("family", std::string("quadratic")));
  h.dx = j.value("dx", std::int64_t(200));
  h.dy = j.value("dy", std::int64_t(100));
  h.seed = j.value("seed", std::int64_t(0));
  h.kappa_g = j.value("kappa_g", 10.0);
  h.kappa_L = j.value("kappa_L", 10.0);
  h.rho = j.value("rho", 1.0);
  h.label_noise = j.value("label_noise", 0.1);
  if (h.family == ProblemFamily::ridge) {
    const std::int64_t d = j.value("d", j.value("dx", std::int64_t(20)));
    h.dx = h.dy = d;
    h.n_tr = j.value("n_tr", std::int64_t(200));
    h.n_val = j.value("n_val", std::int64_t(200));
  }
  return h;
}

}  // namespace amigo::io
