#include <algorithm>
#include <cmath>
#include <random>

#include "lenopt/errors.hpp"
#include "lenopt/length_drop.hpp"

namespace lenopt::model {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ParameterError(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
}

}  // namespace

LengthConfig length_drop_chain(int base_len, int num_layers, double p_length_drop,
                               const IntDraw& draw) {
  check_probability(p_length_drop, "LengthDrop probability");
  if (base_len < 1) throw ParameterError("base length must be positive");
  if (num_layers < 1) throw ParameterError("num_layers must be positive");
  LengthConfig cfg;
  cfg.lengths.reserve(static_cast<std::size_t>(num_layers));
  cfg.lengths.push_back(base_len);
  for (int i = 1; i < num_layers; ++i) {
    const int prev = cfg.lengths.back();
    // The 1e-9 slack keeps products such as 0.8 * 5 from rounding up past an integer.
    int lo = static_cast<int>(std::ceil((1.0 - p_length_drop) * prev - 1e-9));
    lo = std::clamp(lo, 1, prev);
    cfg.lengths.push_back(draw(lo, prev));
  }
  return cfg;
}

LengthConfig sample_length_config(int base_len, int num_layers, double p_length_drop,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return length_drop_chain(base_len, num_layers, p_length_drop, [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  });
}

std::vector<bool> sample_layer_mask(int num_layers, double p_layer_drop, std::uint64_t seed) {
  check_probability(p_layer_drop, "LayerDrop probability");
  if (num_layers < 1) throw ParameterError("num_layers must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bool> skip(static_cast<std::size_t>(num_layers));
  for (std::size_t i = 0; i < skip.size(); ++i) skip[i] = u(rng) < p_layer_drop;
  return skip;
}

}  // namespace lenopt::model
