#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lenopt/encoder.hpp"

namespace lenopt::model {

/// Draws an integer in [lo, hi].
using IntDraw = std::function<int(int lo, int hi)>;

/// LengthDrop: lengths[0] = base_len, lengths[i+1] in [ceil((1-p) * lengths[i]), lengths[i]],
/// never below 1.
LengthConfig sample_length_config(int base_len, int num_layers, double p_length_drop,
                                  std::uint64_t seed);
/// Same chain with a caller-supplied draw; lets tests force extreme draws.
LengthConfig length_drop_chain(int base_len, int num_layers, double p_length_drop,
                               const IntDraw& draw);

/// LayerDrop: each layer independently skipped with probability p.
std::vector<bool> sample_layer_mask(int num_layers, double p_layer_drop, std::uint64_t seed);

}  // namespace lenopt::model
