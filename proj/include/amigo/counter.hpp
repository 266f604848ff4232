#pragma once

#include <cstdint>

namespace amigo {

/// Batch-weighted oracle call counts. A joint gradient of f counts once
/// toward n_grad_f; a query on a batch of size b counts b.
struct OracleCounter {
  std::int64_t n_grad_f = 0;
  std::int64_t n_grad_g = 0;
  std::int64_t n_jvp = 0;
  std::int64_t n_hvp = 0;

  std::int64_t total() const { return n_grad_f + n_grad_g + n_jvp + n_hvp; }

  friend bool operator==(const OracleCounter&, const OracleCounter&) = default;
};

}  // namespace amigo
