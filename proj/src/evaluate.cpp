#include "lenopt/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "lenopt/errors.hpp"
#include "lenopt/metrics.hpp"

namespace lenopt::eval {

namespace {

template <typename Forward>
EvalResult score(const SpanTask& task, Forward&& fwd) {
  if (task.empty()) throw ContractError("cannot evaluate on an empty task");
  double f1 = 0.0, em = 0.0;
  for (const auto& ex : task.examples) {
    auto [s, e] = decode_span(fwd(ex.tokens));
    f1 += f1_span(s, e, ex.start, ex.end);
    em += (s == ex.start && e == ex.end) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(task.size());
  EvalResult r;
  r.f1 = f1 / n;
  r.exact_match = em / n;
  return r;
}

}  // namespace

std::pair<int, int> decode_span(const ad::Tensor& logits) {
  if (logits.dim() != 2 || logits.cols() != 2 || logits.rows() == 0)
    throw DimensionError("span logits must be n x 2, got " + ad::shape_str(logits.shape()));
  const std::size_t n = logits.rows();
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (logits.at(i, 0) > logits.at(start, 0)) start = i;
  std::size_t end = start;
  for (std::size_t i = start + 1; i < n; ++i)
    if (logits.at(i, 1) > logits.at(end, 1)) end = i;
  return {static_cast<int>(start), static_cast<int>(end)};
}

EvalResult evaluate_model(const model::EncoderModel& model, const model::LengthConfig& config,
                          const SpanTask& task) {
  const double cost = cost_flops(model.arch(), config);
  EvalResult r = score(task, [&](const std::vector<int>& tokens) {
    return model::forward_adaptive(model, tokens, config).logits;
  });
  r.cost_flops = cost;
  r.config = config;
  return r;
}

EvalResult evaluate_full(const model::EncoderModel& model, const SpanTask& task) {
  const auto config = model::LengthConfig::full(model.arch().num_layers, model.arch().max_seq);
  EvalResult r = score(task, [&](const std::vector<int>& tokens) {
    return model::forward_full(model, tokens).logits;
  });
  r.cost_flops = cost_flops(model.arch(), config);
  r.config = config;
  return r;
}

WallClock measure_wall_clock(const model::EncoderModel& model, const model::LengthConfig& config,
                             const SpanTask& task, int repeats) {
  if (repeats < 3) throw ParameterError("wall-clock measurement needs at least 3 repeats");
  if (task.empty()) throw ContractError("cannot time an empty task");
  auto pass = [&] {
    for (const auto& ex : task.examples) (void)model::forward_adaptive(model, ex.tokens, config);
  };
  pass();
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    pass();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  auto quantile = [&](double q) {
    // nearest-rank
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(ms.size())));
    return ms[std::clamp<std::size_t>(rank, 1, ms.size()) - 1];
  };
  const std::size_t n = ms.size();
  const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return WallClock{median, std::max(median, quantile(0.95))};
}

void append_eval_csv(const std::filesystem::path& path, const EvalResult& result) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for appending");
  std::ostringstream row;
  row.precision(17);
  if (fresh) row << "f1,em,flops,wall_ms,lengths\n";
  row << result.f1 << ',' << result.exact_match << ',' << result.cost_flops << ',';
  if (result.wall_clock_ms) row << *result.wall_clock_ms;
  row << ',' << result.config.str() << '\n';
  out << row.str();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace lenopt::eval
