#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace amigo {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// Random stream handle. Every stochastic query takes one explicitly so the
/// caller owns all mutation.
using Rng = std::mt19937_64;

/// Dimensions of the outer variable x and the inner variables y, z.
struct Dims {
  std::int64_t dx = 1;
  std::int64_t dy = 1;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConstants : public Error {
 public:
  using Error::Error;
};

class InvalidSpectrum : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when an iterate stops being finite. `step` is the index of the
/// offending step inside the solver that detected it.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& where, std::int64_t step)
      : Error(where + ": non-finite iterate at step " + std::to_string(step)),
        where_(where),
        step_(step) {}

  const std::string& where() const { return where_; }
  std::int64_t step() const { return step_; }

 private:
  std::string where_;
  std::int64_t step_;
};

/// splitmix64 finalizer; used to derive independent stream seeds from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

inline void check_dim(std::int64_t got, std::int64_t expected, const char* what) {
  if (got != expected) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(expected) +
                            ", got " + std::to_string(got));
  }
}

}  // namespace amigo
