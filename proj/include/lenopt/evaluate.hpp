#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <utility>

#include "lenopt/encoder.hpp"
#include "lenopt/task.hpp"

namespace lenopt::eval {

struct EvalResult {
  double f1 = 0.0;
  double exact_match = 0.0;
  double cost_flops = 0.0;
  std::optional<double> wall_clock_ms;
  model::LengthConfig config;
};

struct WallClock {
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

/// Start = argmax of the start column; end = argmax of the end column over
/// positions >= start. Ties go to the lower position.
std::pair<int, int> decode_span(const ad::Tensor& logits);

/// Mean F1 / EM over the task with adaptive inference under `config`.
/// Throws ContractError on an empty task.
EvalResult evaluate_model(const model::EncoderModel& model, const model::LengthConfig& config,
                          const SpanTask& task);

/// Same metrics through forward_full; used to cross-check the adaptive path.
EvalResult evaluate_full(const model::EncoderModel& model, const SpanTask& task);

/// Times whole passes over the task after one untimed warm-up pass.
/// Throws ParameterError when repeats < 3.
WallClock measure_wall_clock(const model::EncoderModel& model, const model::LengthConfig& config,
                             const SpanTask& task, int repeats);

/// Appends `f1,em,flops,wall_ms,lengths`, writing the header when the file is new.
void append_eval_csv(const std::filesystem::path& path, const EvalResult& result);

}  // namespace lenopt::eval
