#include "lenopt/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "lenopt/errors.hpp"
#include "lenopt/seed.hpp"

namespace lenopt::hpo {

int lower_bound_from_drop_ratio(int max_len, double drop_ratio) {
  if (max_len < 1) throw ParameterError("max_len must be positive");
  if (!(drop_ratio >= 0.0 && drop_ratio < 1.0)) throw ParameterError("drop ratio must lie in [0, 1)");
  const double keep = 1.0 - drop_ratio;
  const double mid = (max_len * std::pow(keep, 7) + max_len * std::pow(keep, 6)) / 2.0;
  return std::max(1, static_cast<int>(std::lround(mid)));
}

void SearchSpace::require_feasible() const {
  if (num_vars < 1) throw ParameterError("search space needs at least one variable");
  if (lower < 1) throw ParameterError("search space lower bound must be >= 1, got " + std::to_string(lower));
  if (upper < lower)
    throw ParameterError("search space is empty: upper " + std::to_string(upper) + " < lower " +
                         std::to_string(lower));
}

std::vector<std::string> validate_config(const SearchSpace& space, const LengthConfig& config) {
  std::vector<std::string> out;
  if (config.size() != static_cast<std::size_t>(space.num_vars)) {
    out.push_back("expected " + std::to_string(space.num_vars) + " lengths, got " +
                  std::to_string(config.size()));
    return out;
  }
  for (std::size_t i = 0; i < config.size(); ++i) {
    const std::string x = "x" + std::to_string(i);
    if (config[i] < space.lower) out.push_back(x + " < lower bound " + std::to_string(space.lower));
    if (config[i] > space.upper) out.push_back(x + " > upper bound " + std::to_string(space.upper));
    if (i > 0 && config[i] > config[i - 1]) out.push_back(x + " > x" + std::to_string(i - 1));
  }
  return out;
}

LengthConfig sample_uniform(const SearchSpace& space, std::uint64_t seed) {
  space.require_feasible();
  std::mt19937_64 rng(mix64(seed));
  std::uniform_int_distribution<int> u(space.lower, space.upper);
  LengthConfig cfg;
  cfg.lengths.resize(static_cast<std::size_t>(space.num_vars));
  for (int& v : cfg.lengths) v = u(rng);
  std::sort(cfg.lengths.begin(), cfg.lengths.end(), std::greater<>());
  return cfg;
}

std::vector<double> normalize(const SearchSpace& space, const LengthConfig& config) {
  const double span = space.upper - space.lower;
  std::vector<double> out(config.size(), 0.0);
  if (span <= 0) return out;
  for (std::size_t i = 0; i < config.size(); ++i) out[i] = (config[i] - space.lower) / span;
  return out;
}

}  // namespace lenopt::hpo
