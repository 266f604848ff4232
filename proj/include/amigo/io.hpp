#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "amigo/problems.hpp"

namespace amigo::io {

/// Container layout: the 8-byte magic, then the header as little-endian
/// int64 {version, family, dx, dy, seed, n_tr, n_val} and float64
/// {kappa_g, kappa_L, rho, label_noise}, then row-major little-endian float64
/// matrices in family order:
///   quadratic: A_f (dx×dx), A_g (dy×dy), B_g (dy×dx), C_f (dy)
///   nonconvex: A_g, B_g, C_f
///   ridge:     A_tr (n_tr×d), b_tr, A_val (n_val×d), b_val
inline constexpr char kMagic[8] = {'A', 'M', 'I', 'G', 'O', 'P', 'R', 'B'};
inline constexpr std::int64_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 8 + 7 * 8 + 4 * 8;

using ProblemPtr = std::shared_ptr<const BilevelOracle<double>>;

/// Generates the problem a header describes.
ProblemPtr generate(const ProblemHeader& header);

/// Header of a generated (unwrapped) problem; throws for other oracles.
ProblemHeader header_of(const BilevelOracle<double>& problem);

void write_problem(std::ostream& out, const BilevelOracle<double>& problem);
void write_problem(const std::string& path, const BilevelOracle<double>& problem);
ProblemPtr read_problem(std::istream& in);
ProblemPtr read_problem(const std::string& path);
ProblemHeader read_header(std::istream& in);

nlohmann::json header_to_json(const ProblemHeader& header);
ProblemHeader header_from_json(const nlohmann::json& j);

}  // namespace amigo::io
