#pragma once

#include <stdexcept>
#include <string>

namespace stochhom {

// Invalid configuration or input data (bad parameter ranges, unknown keys,
// mismatched sizes). Raised before any numerics run.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mesh-level violations: misaligned levels, out-of-range element indices,
// patches that swallow the whole domain.
class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: factorization of a non-SPD matrix, singular saddle-point
// systems, residual checks that do not close.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File input/output failure (reports, caches, config files).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stochhom
