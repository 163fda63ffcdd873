#include "lenopt/metrics.hpp"

#include <algorithm>
#include <string>

#include "lenopt/errors.hpp"

namespace lenopt::eval {

double f1_span(int pred_start, int pred_end, int gold_start, int gold_end) {
  if (pred_start > pred_end || gold_start > gold_end)
    throw ContractError("span start must not exceed end: pred [" + std::to_string(pred_start) +
                        ", " + std::to_string(pred_end) + "], gold [" +
                        std::to_string(gold_start) + ", " + std::to_string(gold_end) + "]");
  const int overlap = std::min(pred_end, gold_end) - std::max(pred_start, gold_start) + 1;
  if (overlap <= 0) return 0.0;
  const double precision = static_cast<double>(overlap) / (pred_end - pred_start + 1);
  const double recall = static_cast<double>(overlap) / (gold_end - gold_start + 1);
  return 2.0 * precision * recall / (precision + recall);
}

double cost_flops(const model::EncoderArch& arch, const model::LengthConfig& config) {
  model::check_length_config(config, arch);
  const double h = arch.hidden;
  const double f = arch.ff;
  double total = 0.0;
  for (int n : config.lengths) {
    const double len = n;
    total += 4.0 * len * h * h + 2.0 * len * len * h + 2.0 * len * h * f;
  }
  return total;
}

double speedup(const model::EncoderArch& reference_arch, const model::LengthConfig& reference,
               const model::EncoderArch& arch, const model::LengthConfig& config) {
  return cost_flops(reference_arch, reference) / cost_flops(arch, config);
}

}  // namespace lenopt::eval
