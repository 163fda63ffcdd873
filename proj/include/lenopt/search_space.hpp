#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lenopt/encoder.hpp"

namespace lenopt::hpo {

using model::LengthConfig;

/// Lowest admissible length for a maximum length and a per-layer drop ratio:
/// the midpoint of max·(1−p)^7 and max·(1−p)^6, rounded to the nearest integer.
/// 384 with p = 0.2 gives 91.
int lower_bound_from_drop_ratio(int max_len, double drop_ratio = 0.2);

/// Monotone integer lattice upper ≥ x0 ≥ x1 ≥ … ≥ x(n−1) ≥ lower.
struct SearchSpace {
  int num_vars = 6;
  int lower = 91;
  int upper = 384;

  bool feasible() const { return num_vars >= 1 && lower >= 1 && upper >= lower; }
  /// Throws ParameterError when infeasible.
  void require_feasible() const;

  bool operator==(const SearchSpace&) const = default;
};

/// Every violated inequality by name, e.g. "x2 > x1" or "x5 < lower bound 91".
/// Empty when the configuration is admissible.
std::vector<std::string> validate_config(const SearchSpace& space, const LengthConfig& config);

/// Draws num_vars values uniformly from [lower, upper] and sorts them descending.
LengthConfig sample_uniform(const SearchSpace& space, std::uint64_t seed);

/// Per-coordinate (x − lower) / (upper − lower); zeros for a degenerate range.
std::vector<double> normalize(const SearchSpace& space, const LengthConfig& config);

}  // namespace lenopt::hpo
