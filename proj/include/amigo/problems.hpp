#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "amigo/core.hpp"
#include "amigo/oracle.hpp"

namespace amigo {

enum class ProblemFamily : std::int64_t { quadratic = 1, ridge = 2, nonconvex = 3 };

inline std::string to_string(ProblemFamily f) {
  switch (f) {
    case ProblemFamily::quadratic: return "quadratic";
    case ProblemFamily::ridge: return "ridge";
    case ProblemFamily::nonconvex: return "nonconvex";
  }
  return "unknown";
}

inline ProblemFamily parse_family(const std::string& s) {
  if (s == "quadratic") return ProblemFamily::quadratic;
  if (s == "ridge") return ProblemFamily::ridge;
  if (s == "nonconvex") return ProblemFamily::nonconvex;
  throw ConfigError("unknown problem family '" + s + "'");
}

/// Generation parameters; also the header of the serialized container.
struct ProblemHeader {
  ProblemFamily family = ProblemFamily::quadratic;
  std::int64_t dx = 1;
  std::int64_t dy = 1;
  std::int64_t seed = 0;
  std::int64_t n_tr = 0;
  std::int64_t n_val = 0;
  double kappa_g = 1;
  double kappa_L = 1;
  double rho = 0;
  double label_noise = 0;
};

template <typename Scalar>
Matrix<Scalar> gaussian_matrix(std::int64_t rows, std::int64_t cols, Rng& rng) {
  std::normal_distribution<Scalar> normal(0, 1);
  Matrix<Scalar> m(rows, cols);
  // column-major fill order is part of the reproducibility contract
  for (std::int64_t j = 0; j < cols; ++j)
    for (std::int64_t i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

template <typename Scalar>
Vector<Scalar> gaussian_vector(std::int64_t n, Rng& rng) {
  return gaussian_matrix<Scalar>(n, 1, rng).col(0);
}

/// Haar-like random orthogonal matrix from the QR factorization of a Gaussian
/// matrix, with column signs fixed by the diagonal of R.
template <typename Scalar>
Matrix<Scalar> random_orthogonal(std::int64_t d, Rng& rng) {
  const Matrix<Scalar> g = gaussian_matrix<Scalar>(d, d, rng);
  Eigen::HouseholderQR<Matrix<Scalar>> qr(g);
  Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(d, d);
  const Matrix<Scalar>& r = qr.matrixQR();
  for (std::int64_t j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

/// Log-spaced spectrum on [mu, L] with both endpoints attained. A single
/// eigenvalue is placed at L.
template <typename Scalar>
Vector<Scalar> log_spaced_spectrum(std::int64_t d, Scalar mu, Scalar L) {
  Vector<Scalar> lambda(d);
  if (d == 1) {
    lambda(0) = L;
    return lambda;
  }
  const Scalar lo = std::log(mu);
  const Scalar hi = std::log(L);
  for (std::int64_t i = 0; i < d; ++i) {
    lambda(i) = std::exp(lo + (hi - lo) * Scalar(i) / Scalar(d - 1));
  }
  lambda(0) = mu;
  lambda(d - 1) = L;
  return lambda;
}

/// Symmetric positive-definite matrix Q diag(λ) Qᵀ with log-spaced λ on
/// [mu, L] and a seeded random orthogonal Q.
template <typename Scalar>
Matrix<Scalar> gen_spd(std::int64_t d, Scalar mu, Scalar L, std::uint64_t seed) {
  if (d < 1) throw InvalidSpectrum("gen_spd: dimension must be positive");
  if (!(mu > 0) || !std::isfinite(static_cast<double>(L)) || L < mu) {
    throw InvalidSpectrum("gen_spd: need 0 < mu <= L");
  }
  Rng rng(seed);
  const Matrix<Scalar> q = random_orthogonal<Scalar>(d, rng);
  const Vector<Scalar> lambda = log_spaced_spectrum<Scalar>(d, mu, L);
  Matrix<Scalar> m = q * lambda.asDiagonal() * q.transpose();
  return Scalar(0.5) * (m + m.transpose());
}

/// Operator norm of a dense matrix via the largest eigenvalue of the smaller Gram matrix.
template <typename Scalar>
Scalar operator_norm(const Matrix<Scalar>& m) {
  const Matrix<Scalar> gram =
      m.rows() <= m.cols() ? Matrix<Scalar>(m * m.transpose()) : Matrix<Scalar>(m.transpose() * m);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(es.eigenvalues().maxCoeff());
}

// ---------------------------------------------------------------------------
// Quadratic family: f(x, y) = ½xᵀA_f x + yᵀC_f, g(x, y) = ½yᵀA_g y + yᵀB_g x.
// ---------------------------------------------------------------------------

template <typename Scalar>
class QuadraticProblem final : public BilevelOracle<Scalar>, public ClosedForms<Scalar> {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  /// Matrices must follow the generator normalization: eigenvalues of A_g in [1/κ_g, 1],
  /// those of A_f in [1/κ_L, 1], ‖B_g‖ = 1. Constants are read off the header.
  QuadraticProblem(Mat A_f, Vec C_f, Mat A_g, Mat B_g, ProblemHeader header)
      : A_f_(std::move(A_f)), C_f_(std::move(C_f)), A_g_(std::move(A_g)), B_g_(std::move(B_g)),
        header_(header), A_g_llt_(A_g_), A_f_llt_(A_f_) {
    header_.family = ProblemFamily::quadratic;
    header_.dx = A_f_.rows();
    header_.dy = A_g_.rows();
    check_dim(B_g_.rows(), header_.dy, "QuadraticProblem B_g rows");
    check_dim(B_g_.cols(), header_.dx, "QuadraticProblem B_g cols");
    check_dim(C_f_.size(), header_.dy, "QuadraticProblem C_f");
    if (A_g_llt_.info() != Eigen::Success || A_f_llt_.info() != Eigen::Success) {
      throw InvalidSpectrum("QuadraticProblem: A_f and A_g must be positive definite");
    }
    z_star_ = -A_g_llt_.solve(C_f_);
    w_ = B_g_.transpose() * z_star_;
    x_star_ = -A_f_llt_.solve(w_);
    loss_star_ = loss(x_star_);
  }

  const Mat& A_f() const { return A_f_; }
  const Vec& C_f() const { return C_f_; }
  const Mat& A_g() const { return A_g_; }
  const Mat& B_g() const { return B_g_; }
  const ProblemHeader& header() const { return header_; }

  Dims dims() const override { return {header_.dx, header_.dy}; }

  Scalar f(const Vec& x, const Vec& y) const override {
    return Scalar(0.5) * x.dot(A_f_ * x) + y.dot(C_f_);
  }
  Scalar g(const Vec& x, const Vec& y) const override {
    return Scalar(0.5) * y.dot(A_g_ * y) + y.dot(B_g_ * x);
  }
  GradF<Scalar> grad_f(const Vec& x, const Vec&, std::int64_t, Rng*) const override {
    return {A_f_ * x, C_f_};
  }
  Vec grad_gy(const Vec& x, const Vec& y, std::int64_t, Rng*) const override {
    Vec r = A_g_ * y;
    r.noalias() += B_g_ * x;
    return r;
  }
  Vec hvp_gyy(const Vec&, const Vec&, const Vec& v, std::int64_t, Rng*) const override {
    return A_g_ * v;
  }
  Vec jvp_gxy(const Vec&, const Vec&, const Vec& z, std::int64_t, Rng*) const override {
    return B_g_.transpose() * z;
  }

  SmoothnessConstants<Scalar> constants() const override {
    SmoothnessConstants<Scalar> c;
    c.mu_g = Scalar(1) / Scalar(header_.kappa_g);
    c.L_g = 1;
    c.Lg_prime = 1;
    c.M_g = 0;
    c.L_f = 1;
    c.B = C_f_.norm();
    c.L_exact = Scalar(1);
    return c;
  }

  const ClosedForms<Scalar>* closed_forms() const override { return this; }

  Vec y_star(const Vec& x) const override { return -A_g_llt_.solve(B_g_ * x); }
  Vec z_star(const Vec&, const Vec&) const override { return z_star_; }
  Scalar loss(const Vec& x) const override { return Scalar(0.5) * x.dot(A_f_ * x) + x.dot(w_); }
  std::optional<Vec> x_star() const override { return x_star_; }
  std::optional<Scalar> loss_star() const override { return loss_star_; }
  std::optional<Scalar> mu_outer() const override { return Scalar(1) / Scalar(header_.kappa_L); }

  /// ∇L(x) = A_f x + B_gᵀ z*.
  Vec grad_loss(const Vec& x) const { return A_f_ * x + w_; }

 private:
  Mat A_f_;
  Vec C_f_;
  Mat A_g_;
  Mat B_g_;
  ProblemHeader header_;
  Eigen::LLT<Mat> A_g_llt_;
  Eigen::LLT<Mat> A_f_llt_;
  Vec z_star_;
  Vec w_;
  Vec x_star_;
  Scalar loss_star_ = 0;
};

inline void check_kappa(double kappa, const char* what) {
  if (!std::isfinite(kappa) || kappa < 1) {
    throw InvalidSpectrum(std::string(what) + " must be a finite value >= 1");
  }
}

inline void check_dims(std::int64_t dx, std::int64_t dy) {
  if (dx < 1 || dy < 1) throw ConfigError("problem dimensions must be positive");
}

template <typename Scalar>
std::shared_ptr<QuadraticProblem<Scalar>> gen_quadratic(std::int64_t dx, std::int64_t dy,
                                                        double kappa_g, double kappa_L,
                                                        std::uint64_t seed) {
  check_dims(dx, dy);
  check_kappa(kappa_g, "kappa_g");
  check_kappa(kappa_L, "kappa_L");
  Matrix<Scalar> A_g = gen_spd<Scalar>(dy, Scalar(1) / Scalar(kappa_g), 1, mix_seed(seed, 1));
  Matrix<Scalar> A_f = gen_spd<Scalar>(dx, Scalar(1) / Scalar(kappa_L), 1, mix_seed(seed, 2));
  Rng rng(mix_seed(seed, 3));
  Matrix<Scalar> B_g = gaussian_matrix<Scalar>(dy, dx, rng);
  B_g /= operator_norm(B_g);
  Vector<Scalar> C_f = gaussian_vector<Scalar>(dy, rng);
  C_f *= std::sqrt(Scalar(dy)) / C_f.norm();
  ProblemHeader h;
  h.family = ProblemFamily::quadratic;
  h.dx = dx;
  h.dy = dy;
  h.seed = static_cast<std::int64_t>(seed);
  h.kappa_g = kappa_g;
  h.kappa_L = kappa_L;
  return std::make_shared<QuadraticProblem<Scalar>>(std::move(A_f), std::move(C_f), std::move(A_g),
                                                    std::move(B_g), h);
}

// ---------------------------------------------------------------------------
// Ridge hyperparameter problem with per-coordinate log-regularizers x:
//   g(x, y) = 1/(2 n_tr) ‖A_tr y − b_tr‖² + 1/(2d) Σ exp(x_i) y_i²
//   f(x, y) = 1/(2 n_val) ‖A_val y − b_val‖²
// ---------------------------------------------------------------------------

template <typename Scalar>
class RidgeHPOProblem final : public BilevelOracle<Scalar>, public ClosedForms<Scalar> {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  RidgeHPOProblem(Mat A_tr, Vec b_tr, Mat A_val, Vec b_val, ProblemHeader header)
      : A_tr_(std::move(A_tr)), b_tr_(std::move(b_tr)), A_val_(std::move(A_val)),
        b_val_(std::move(b_val)), header_(header) {
    const std::int64_t d = A_tr_.cols();
    check_dim(A_val_.cols(), d, "RidgeHPOProblem A_val cols");
    check_dim(b_tr_.size(), A_tr_.rows(), "RidgeHPOProblem b_tr");
    check_dim(b_val_.size(), A_val_.rows(), "RidgeHPOProblem b_val");
    header_.family = ProblemFamily::ridge;
    header_.dx = header_.dy = d;
    header_.n_tr = A_tr_.rows();
    header_.n_val = A_val_.rows();
    const Scalar ntr = Scalar(header_.n_tr);
    const Scalar nval = Scalar(header_.n_val);
    gram_tr_ = A_tr_.transpose() * A_tr_ / ntr;
    gram_tr_ = (Scalar(0.5) * (gram_tr_ + gram_tr_.transpose())).eval();
    rhs_tr_ = A_tr_.transpose() * b_tr_ / ntr;
    gram_val_ = A_val_.transpose() * A_val_ / nval;
    gram_val_ = (Scalar(0.5) * (gram_val_ + gram_val_.transpose())).eval();
    rhs_val_ = A_val_.transpose() * b_val_ / nval;
    Eigen::SelfAdjointEigenSolver<Mat> es_tr(gram_tr_, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Mat> es_val(gram_val_, Eigen::EigenvaluesOnly);
    gram_tr_min_ = std::max(Scalar(0), es_tr.eigenvalues().minCoeff());
    gram_tr_max_ = es_tr.eigenvalues().maxCoeff();
    gram_val_max_ = es_val.eigenvalues().maxCoeff();
  }

  const Mat& A_tr() const { return A_tr_; }
  const Vec& b_tr() const { return b_tr_; }
  const Mat& A_val() const { return A_val_; }
  const Vec& b_val() const { return b_val_; }
  const ProblemHeader& header() const { return header_; }
  std::int64_t d() const { return header_.dx; }

  Dims dims() const override { return {header_.dx, header_.dy}; }

  Scalar f(const Vec&, const Vec& y) const override {
    return (A_val_ * y - b_val_).squaredNorm() / (2 * Scalar(header_.n_val));
  }
  Scalar g(const Vec& x, const Vec& y) const override {
    return (A_tr_ * y - b_tr_).squaredNorm() / (2 * Scalar(header_.n_tr)) +
           (x.array().exp() * y.array().square()).sum() / (2 * Scalar(d()));
  }
  GradF<Scalar> grad_f(const Vec& x, const Vec& y, std::int64_t, Rng*) const override {
    return {Vec::Zero(x.size()), gram_val_ * y - rhs_val_};
  }
  Vec grad_gy(const Vec& x, const Vec& y, std::int64_t, Rng*) const override {
    Vec r = gram_tr_ * y - rhs_tr_;
    r.array() += x.array().exp() * y.array() / Scalar(d());
    return r;
  }
  Vec hvp_gyy(const Vec& x, const Vec&, const Vec& v, std::int64_t, Rng*) const override {
    Vec r = gram_tr_ * v;
    r.array() += x.array().exp() * v.array() / Scalar(d());
    return r;
  }
  Vec jvp_gxy(const Vec& x, const Vec& y, const Vec& z, std::int64_t, Rng*) const override {
    return (x.array().exp() * y.array() * z.array() / Scalar(d())).matrix();
  }

  /// Local constants at the centre of the box.
  SmoothnessConstants<Scalar> constants() const override { return constants_at(Vec::Zero(d())); }

  /// Local constants at x over a ball of radius 2·max(1, ‖y*(x)‖) around the
  /// origin in y. Strong convexity and smoothness are exact at x; the
  /// remaining constants hold only locally.
  SmoothnessConstants<Scalar> constants_at(const Vec& x) const {
    const Scalar inv_d = Scalar(1) / Scalar(d());
    const Scalar e_min = x.array().exp().minCoeff();
    const Scalar e_max = x.array().exp().maxCoeff();
    const Scalar radius = 2 * std::max(Scalar(1), y_star(x).norm());
    SmoothnessConstants<Scalar> c;
    c.mu_g = gram_tr_min_ + inv_d * e_min;
    c.L_g = gram_tr_max_ + inv_d * e_max;
    c.Lg_prime = inv_d * e_max * radius;
    c.M_g = inv_d * e_max * radius;
    c.L_f = gram_val_max_;
    c.B = gram_val_max_ * radius + rhs_val_.norm();
    return c;
  }

  const ClosedForms<Scalar>* closed_forms() const override { return this; }

  Mat inner_hessian(const Vec& x) const {
    Mat h = gram_tr_;
    h.diagonal().array() += x.array().exp() / Scalar(d());
    return h;
  }

  Vec y_star(const Vec& x) const override { return inner_hessian(x).llt().solve(rhs_tr_); }
  Vec z_star(const Vec& x, const Vec& y) const override {
    return -inner_hessian(x).llt().solve(Vec(gram_val_ * y - rhs_val_));
  }
  Scalar loss(const Vec& x) const override { return f(x, y_star(x)); }

 private:
  Mat A_tr_;
  Vec b_tr_;
  Mat A_val_;
  Vec b_val_;
  ProblemHeader header_;
  Mat gram_tr_;
  Vec rhs_tr_;
  Mat gram_val_;
  Vec rhs_val_;
  Scalar gram_tr_min_ = 0;
  Scalar gram_tr_max_ = 0;
  Scalar gram_val_max_ = 0;
};

template <typename Scalar>
std::shared_ptr<RidgeHPOProblem<Scalar>> gen_ridge_hpo(std::int64_t n_tr, std::int64_t n_val,
                                                       std::int64_t d, double label_noise,
                                                       std::uint64_t seed) {
  if (n_tr < 1 || n_val < 1 || d < 1) throw ConfigError("ridge problem sizes must be positive");
  if (!(label_noise >= 0)) throw ConfigError("label_noise must be nonnegative");
  Rng rng(seed);
  const Vector<Scalar> planted = gaussian_vector<Scalar>(d, rng);
  Matrix<Scalar> A_tr = gaussian_matrix<Scalar>(n_tr, d, rng);
  Matrix<Scalar> A_val = gaussian_matrix<Scalar>(n_val, d, rng);
  Vector<Scalar> b_tr = A_tr * planted + Scalar(label_noise) * gaussian_vector<Scalar>(n_tr, rng);
  Vector<Scalar> b_val =
      A_val * planted + Scalar(label_noise) * gaussian_vector<Scalar>(n_val, rng);
  ProblemHeader h;
  h.family = ProblemFamily::ridge;
  h.seed = static_cast<std::int64_t>(seed);
  h.label_noise = label_noise;
  return std::make_shared<RidgeHPOProblem<Scalar>>(std::move(A_tr), std::move(b_tr),
                                                   std::move(A_val), std::move(b_val), h);
}

/// The weight vector the ridge targets were generated from.
template <typename Scalar>
Vector<Scalar> ridge_planted_weights(std::int64_t d, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_vector<Scalar>(d, rng);
}

// ---------------------------------------------------------------------------
// Non-convex outer family: f(x, y) = yᵀC_f + ρ Σ cos(x_i), quadratic inner g.
// ---------------------------------------------------------------------------

template <typename Scalar>
class NonconvexOuterProblem final : public BilevelOracle<Scalar>, public ClosedForms<Scalar> {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  NonconvexOuterProblem(Vec C_f, Mat A_g, Mat B_g, ProblemHeader header)
      : C_f_(std::move(C_f)), A_g_(std::move(A_g)), B_g_(std::move(B_g)), header_(header),
        A_g_llt_(A_g_) {
    header_.family = ProblemFamily::nonconvex;
    header_.dx = B_g_.cols();
    header_.dy = A_g_.rows();
    check_dim(B_g_.rows(), header_.dy, "NonconvexOuterProblem B_g rows");
    check_dim(C_f_.size(), header_.dy, "NonconvexOuterProblem C_f");
    if (!(header_.rho > 0)) throw ConfigError("rho must be positive");
    if (A_g_llt_.info() != Eigen::Success) {
      throw InvalidSpectrum("NonconvexOuterProblem: A_g must be positive definite");
    }
    z_star_ = -A_g_llt_.solve(C_f_);
    w_ = B_g_.transpose() * z_star_;
  }

  const Vec& C_f() const { return C_f_; }
  const Mat& A_g() const { return A_g_; }
  const Mat& B_g() const { return B_g_; }
  const ProblemHeader& header() const { return header_; }
  Scalar rho() const { return Scalar(header_.rho); }
  /// B_gᵀ z*, the constant part of ∇L.
  const Vec& linear_term() const { return w_; }

  Dims dims() const override { return {header_.dx, header_.dy}; }

  Scalar f(const Vec& x, const Vec& y) const override {
    return y.dot(C_f_) + rho() * x.array().cos().sum();
  }
  Scalar g(const Vec& x, const Vec& y) const override {
    return Scalar(0.5) * y.dot(A_g_ * y) + y.dot(B_g_ * x);
  }
  GradF<Scalar> grad_f(const Vec& x, const Vec&, std::int64_t, Rng*) const override {
    return {(-rho() * x.array().sin()).matrix(), C_f_};
  }
  Vec grad_gy(const Vec& x, const Vec& y, std::int64_t, Rng*) const override {
    Vec r = A_g_ * y;
    r.noalias() += B_g_ * x;
    return r;
  }
  Vec hvp_gyy(const Vec&, const Vec&, const Vec& v, std::int64_t, Rng*) const override {
    return A_g_ * v;
  }
  Vec jvp_gxy(const Vec&, const Vec&, const Vec& z, std::int64_t, Rng*) const override {
    return B_g_.transpose() * z;
  }

  SmoothnessConstants<Scalar> constants() const override {
    SmoothnessConstants<Scalar> c;
    c.mu_g = Scalar(1) / Scalar(header_.kappa_g);
    c.L_g = 1;
    c.Lg_prime = 1;
    c.M_g = 0;
    c.L_f = rho();
    c.B = C_f_.norm();
    c.L_exact = rho();
    return c;
  }

  const ClosedForms<Scalar>* closed_forms() const override { return this; }

  Vec y_star(const Vec& x) const override { return -A_g_llt_.solve(B_g_ * x); }
  Vec z_star(const Vec&, const Vec&) const override { return z_star_; }
  Scalar loss(const Vec& x) const override { return rho() * x.array().cos().sum() + x.dot(w_); }

  /// A stationary point: sin(x_i) = (B_gᵀz*)_i / ρ on the principal branch.
  Vec stationary_point() const { return (w_.array() / rho()).asin().matrix(); }

 private:
  Vec C_f_;
  Mat A_g_;
  Mat B_g_;
  ProblemHeader header_;
  Eigen::LLT<Mat> A_g_llt_;
  Vec z_star_;
  Vec w_;
};

template <typename Scalar>
std::shared_ptr<NonconvexOuterProblem<Scalar>> gen_nonconvex(std::int64_t dx, std::int64_t dy,
                                                             double rho, double kappa_g,
                                                             std::uint64_t seed) {
  check_dims(dx, dy);
  check_kappa(kappa_g, "kappa_g");
  if (!(rho > 0) || !std::isfinite(rho)) throw ConfigError("rho must be positive");
  Matrix<Scalar> A_g = gen_spd<Scalar>(dy, Scalar(1) / Scalar(kappa_g), 1, mix_seed(seed, 1));
  Rng rng(mix_seed(seed, 3));
  Matrix<Scalar> B_g = gaussian_matrix<Scalar>(dy, dx, rng);
  B_g /= operator_norm(B_g);
  Vector<Scalar> C_f = gaussian_vector<Scalar>(dy, rng);
  // scale C_f so that ‖B_gᵀ z*‖_∞ = ρ/2
  const Vector<Scalar> w = -(B_g.transpose() * A_g.llt().solve(C_f));
  C_f *= Scalar(rho) / (2 * w.cwiseAbs().maxCoeff());
  ProblemHeader h;
  h.family = ProblemFamily::nonconvex;
  h.dx = dx;
  h.dy = dy;
  h.seed = static_cast<std::int64_t>(seed);
  h.kappa_g = kappa_g;
  h.rho = rho;
  return std::make_shared<NonconvexOuterProblem<Scalar>>(std::move(C_f), std::move(A_g),
                                                         std::move(B_g), h);
}

// ---------------------------------------------------------------------------
// Stochastic wrapper.
// ---------------------------------------------------------------------------

/// Adds zero-mean noise to every query of a deterministic problem:
///  - gradients: Gaussian with per-sample E‖ε‖² = σ̃², averaged over the batch;
///  - Hessian-vector products: ∂_yy ĝ = ∂_yy g + σ̃_gyy ζ̄ I;
///  - Jacobian-vector products: ∂_xy ĝ = ∂_xy g + σ̃_gxy ζ̄' P with ‖P‖ = 1 fixed;
/// where ζ̄ is the mean of `batch` i.i.d. uniform draws on [−√3, √3].
template <typename Scalar>
class StochasticProblem final : public BilevelOracle<Scalar> {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  StochasticProblem(std::shared_ptr<const BilevelOracle<Scalar>> base, NoiseSpec<Scalar> noise,
                    std::uint64_t seed)
      : base_(std::move(base)), noise_(noise) {
    const Scalar sigmas[] = {noise_.sigma_f, noise_.sigma_g, noise_.sigma_gxy, noise_.sigma_gyy};
    for (Scalar s : sigmas) {
      if (!(s >= 0) || !std::isfinite(static_cast<double>(s))) {
        throw ConfigError("noise levels must be finite and nonnegative");
      }
    }
    if (noise_.bounded_hessian_noise &&
        !(noise_.sigma_gyy * std::sqrt(Scalar(3)) < base_->constants().mu_g)) {
      throw ConfigError("Hessian noise breaks positive definiteness: need sqrt(3)*sigma_gyy < mu_g");
    }
    const Dims d = base_->dims();
    Rng rng(mix_seed(seed, 17));
    jac_direction_ = gaussian_matrix<Scalar>(d.dx, d.dy, rng);
    jac_direction_ /= operator_norm(jac_direction_);
  }

  const BilevelOracle<Scalar>& base() const { return *base_; }
  const Mat& jacobian_noise_direction() const { return jac_direction_; }

  Dims dims() const override { return base_->dims(); }
  Scalar f(const Vec& x, const Vec& y) const override { return base_->f(x, y); }
  Scalar g(const Vec& x, const Vec& y) const override { return base_->g(x, y); }

  GradF<Scalar> grad_f(const Vec& x, const Vec& y, std::int64_t batch, Rng* rng) const override {
    GradF<Scalar> r = base_->grad_f(x, y, batch, nullptr);
    if (rng != nullptr && noise_.sigma_f > 0) {
      const std::int64_t dim = r.gx.size() + r.gy.size();
      const Scalar sd = noise_.sigma_f / std::sqrt(Scalar(dim) * Scalar(batch));
      add_gaussian(r.gx, sd, *rng);
      add_gaussian(r.gy, sd, *rng);
    }
    return r;
  }

  Vec grad_gy(const Vec& x, const Vec& y, std::int64_t batch, Rng* rng) const override {
    Vec r = base_->grad_gy(x, y, batch, nullptr);
    if (rng != nullptr && noise_.sigma_g > 0) {
      add_gaussian(r, noise_.sigma_g / std::sqrt(Scalar(r.size()) * Scalar(batch)), *rng);
    }
    return r;
  }

  Vec hvp_gyy(const Vec& x, const Vec& y, const Vec& v, std::int64_t batch,
              Rng* rng) const override {
    Vec r = base_->hvp_gyy(x, y, v, batch, nullptr);
    if (rng != nullptr && noise_.sigma_gyy > 0) {
      r += (noise_.sigma_gyy * mean_uniform(batch, *rng)) * v;
    }
    return r;
  }

  Vec jvp_gxy(const Vec& x, const Vec& y, const Vec& z, std::int64_t batch,
              Rng* rng) const override {
    Vec r = base_->jvp_gxy(x, y, z, batch, nullptr);
    if (rng != nullptr && noise_.sigma_gxy > 0) {
      r.noalias() += (noise_.sigma_gxy * mean_uniform(batch, *rng)) * (jac_direction_ * z);
    }
    return r;
  }

  SmoothnessConstants<Scalar> constants() const override { return base_->constants(); }
  NoiseSpec<Scalar> noise() const override { return noise_; }
  const ClosedForms<Scalar>* closed_forms() const override { return base_->closed_forms(); }

 private:
  static void add_gaussian(Vec& v, Scalar sd, Rng& rng) {
    std::normal_distribution<Scalar> normal(0, sd);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += normal(rng);
  }

  static Scalar mean_uniform(std::int64_t batch, Rng& rng) {
    const Scalar a = std::sqrt(Scalar(3));
    std::uniform_real_distribution<Scalar> uni(-a, a);
    Scalar s = 0;
    for (std::int64_t i = 0; i < batch; ++i) s += uni(rng);
    return s / Scalar(batch);
  }

  std::shared_ptr<const BilevelOracle<Scalar>> base_;
  NoiseSpec<Scalar> noise_;
  Mat jac_direction_;
};

template <typename Scalar>
std::shared_ptr<StochasticProblem<Scalar>> make_stochastic(
    std::shared_ptr<const BilevelOracle<Scalar>> base, const NoiseSpec<Scalar>& noise,
    std::uint64_t seed) {
  return std::make_shared<StochasticProblem<Scalar>>(std::move(base), noise, seed);
}

}  // namespace amigo
