#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lenopt/encoder.hpp"
#include "lenopt/losses.hpp"
#include "lenopt/pipeline.hpp"
#include "lenopt/task.hpp"

namespace lenopt::distill {

enum class OptimizerKind { SGD, Adam };

struct TrainingConfig {
  double lr_id = 5e-5;
  double lr_pd = 3e-5;
  double lr_pd_length_drop = 2e-5;
  double lr_ft = 3e-5;
  int batch_size = 16;
  double p_length_drop = 0.2;
  double p_layer_drop = 0.2;
  int num_sandwiches = 2;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::SGD;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Multiplies every step's epoch count (rounded, at least 1).
  double epoch_scale = 1.0;

  /// Throws ParameterError for out-of-range fields.
  void validate() const;
  double learning_rate(const PipelineStep& step) const;
  int scaled_epochs(int epochs) const;
};

/// Updates a fixed list of parameters from their accumulated gradients.
class Optimizer {
 public:
  Optimizer(std::vector<ad::Tensor> params, const TrainingConfig& cfg);
  /// Applies one update; parameters without a gradient are left untouched.
  void step(double learning_rate);
  void zero_grad();

 private:
  std::vector<ad::Tensor> params_;
  OptimizerKind kind_;
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

struct LossBreakdown {
  double total = 0.0;
  double id = 0.0;
  double pd = 0.0;  // prediction-layer term; hard-label cross-entropy for FT steps
  double sandwich = 0.0;
};

/// Frozen teacher outputs for one example. Hidden/attention are kept only
/// for layers named by the layer map.
using TeacherTrace = model::ForwardTrace;

/// Everything one update needs besides the models.
struct StepContext {
  Method method = Method::PD;
  bool length_drop = false;
  const TrainingConfig* cfg = nullptr;
  const LayerMap* layer_map = nullptr;       // ID only
  ad::Tensor projection;                     // ID only; undefined means identity
  std::uint64_t stream = 0;                  // seeds the sandwiches of this update
};

/// One gradient update over `batch`. The full-length student pass is trained
/// on the step objective (ID/PD against the teacher, or hard labels for FT);
/// with LengthDrop on, num_sandwiches sub-models under freshly sampled length
/// configurations and LayerDrop masks are distilled against that full pass.
/// Returns losses averaged over the batch. Throws NumericError on a
/// non-finite loss.
LossBreakdown sandwich_step(model::EncoderModel& student,
                            std::span<const eval::SpanExample* const> batch,
                            std::span<const TeacherTrace* const> teacher, const StepContext& ctx,
                            Optimizer& optimizer, double learning_rate);

struct MetricsRow {
  std::string model;  // "teacher" or "student"
  int step_index = 0;  // 1-based within its pipeline
  int epoch = 0;       // 1-based within its step
  LossBreakdown loss;
  double dev_f1 = 0.0;
};

struct PipelineHooks {
  /// Called after every completed step with the trained model of that step.
  std::function<void(const std::string& role, int step_index, const model::EncoderModel&)> on_step;
  std::function<void(const MetricsRow&)> on_epoch;
};

struct PipelineResult {
  model::EncoderModel teacher;
  model::EncoderModel student;
  std::vector<MetricsRow> metrics;
};

/// Runs the teacher pipeline (FT steps only) first, then the student steps
/// in order, each continuing from the previous one's weights. Throws
/// ContractError for an FT step in the student pipeline or a distillation
/// step in the teacher pipeline.
PipelineResult run_pipeline(const PipelineSpec& spec, const model::EncoderModel& teacher,
                            const model::EncoderModel& student, const eval::SpanTask& train,
                            const eval::SpanTask& dev, const TrainingConfig& cfg,
                            const PipelineHooks& hooks = {});

/// CSV with header epoch,step_index,loss_total,loss_id,loss_pd,loss_sandwich,dev_f1,model.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

}  // namespace lenopt::distill
