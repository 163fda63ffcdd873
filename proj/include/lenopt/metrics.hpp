#pragma once

#include "lenopt/encoder.hpp"

namespace lenopt::eval {

/// Token-overlap F1 between two inclusive spans. Throws ContractError when start > end.
double f1_span(int pred_start, int pred_end, int gold_start, int gold_end);

/// Multiply-accumulate count of the encoder layers under `config`:
/// sum over layers of 4·n·h² + 2·n²·h + 2·n·h·f. Throws ConstraintError for invalid configs.
double cost_flops(const model::EncoderArch& arch, const model::LengthConfig& config);

/// cost of the reference over cost of the candidate.
double speedup(const model::EncoderArch& reference_arch, const model::LengthConfig& reference,
               const model::EncoderArch& arch, const model::LengthConfig& config);

}  // namespace lenopt::eval
