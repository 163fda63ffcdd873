#include "lenopt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lenopt/errors.hpp"
#include "lenopt/evaluate.hpp"
#include "lenopt/length_drop.hpp"
#include "lenopt/seed.hpp"

namespace lenopt::distill {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " became non-finite");
}

std::vector<ad::Tensor> parameter_list(const model::EncoderModel& m) {
  std::vector<ad::Tensor> out;
  for (auto& [name, t] : m.named_parameters()) out.push_back(t);
  return out;
}

LayerMap identity_map(std::size_t layers) {
  LayerMap map;
  for (std::size_t i = 0; i < layers; ++i) map.emplace_back(i, i);
  return map;
}

TeacherTrace teacher_targets(const model::EncoderModel& teacher, std::span<const int> tokens,
                             const std::vector<bool>& keep_layer) {
  TeacherTrace t = model::forward_full(teacher, tokens);
  for (std::size_t i = 0; i < t.hidden.size(); ++i) {
    if (keep_layer[i]) continue;
    t.hidden[i] = ad::Tensor();
    t.attention[i].clear();
  }
  return t;
}

}  // namespace

// ---- configuration ---------------------------------------------------------

void TrainingConfig::validate() const {
  for (double lr : {lr_id, lr_pd, lr_pd_length_drop, lr_ft})
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("learning rates must be finite and >= 0");
  if (batch_size < 1) throw ParameterError("batch_size must be at least 1");
  if (!(p_length_drop >= 0.0 && p_length_drop <= 1.0))
    throw ParameterError("p_length_drop must lie in [0, 1]");
  if (!(p_layer_drop >= 0.0 && p_layer_drop <= 1.0))
    throw ParameterError("p_layer_drop must lie in [0, 1]");
  if (num_sandwiches < 0) throw ParameterError("num_sandwiches must be >= 0");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (!(epoch_scale > 0.0)) throw ParameterError("epoch_scale must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ParameterError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be positive");
}

double TrainingConfig::learning_rate(const PipelineStep& step) const {
  switch (step.method) {
    case Method::ID: return lr_id;
    case Method::PD: return step.length_drop ? lr_pd_length_drop : lr_pd;
    case Method::FT: return lr_ft;
  }
  return 0.0;
}

int TrainingConfig::scaled_epochs(int epochs) const {
  return std::max(1, static_cast<int>(std::lround(epochs * epoch_scale)));
}

// ---- optimizer -------------------------------------------------------------

Optimizer::Optimizer(std::vector<ad::Tensor> params, const TrainingConfig& cfg)
    : params_(std::move(params)),
      kind_(cfg.optimizer),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {
  if (kind_ == OptimizerKind::Adam) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    if (kind_ == OptimizerKind::SGD) {
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= learning_rate * g[j];
      continue;
    }
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

// ---- one update ------------------------------------------------------------

LossBreakdown sandwich_step(model::EncoderModel& student,
                            std::span<const eval::SpanExample* const> batch,
                            std::span<const TeacherTrace* const> teacher, const StepContext& ctx,
                            Optimizer& optimizer, double learning_rate) {
  if (ctx.cfg == nullptr) throw ContractError("sandwich_step needs a training config");
  const TrainingConfig& cfg = *ctx.cfg;
  if (cfg.num_sandwiches < 0) throw ParameterError("num_sandwiches must be >= 0");
  if (batch.empty()) throw ContractError("empty batch");
  if (ctx.method != Method::FT && teacher.size() != batch.size())
    throw ContractError("one teacher trace per batch example is required");
  if (ctx.method == Method::ID && ctx.layer_map == nullptr)
    throw ContractError("ID step without a layer map");

  const auto num_layers = static_cast<std::size_t>(student.arch().num_layers);
  const LayerMap self_map = identity_map(num_layers);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  optimizer.zero_grad();
  LossBreakdown sum;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = *batch[b];
    ad::Tape tape;
    ad::TapeScope scope(tape);

    model::ForwardTrace full = model::forward_full(student, ex.tokens);
    ad::Tensor objective;
    LossBreakdown parts;
    switch (ctx.method) {
      case Method::ID:
        objective = id_loss(full, *teacher[b], *ctx.layer_map, ctx.projection);
        parts.id = objective.item();
        break;
      case Method::PD:
        objective = span_pd_loss(full.logits, teacher[b]->logits, cfg.temperature);
        parts.pd = objective.item();
        break;
      case Method::FT:
        objective = span_ce_loss(full.logits, ex.start, ex.end);
        parts.pd = objective.item();
        break;
    }

    ad::Tensor total = objective;
    if (ctx.length_drop && cfg.num_sandwiches > 0) {
      const model::ForwardTrace target = detach_trace(full);
      const int n = static_cast<int>(ex.tokens.size());
      for (int k = 0; k < cfg.num_sandwiches; ++k) {
        const std::uint64_t s = derive_seed(ctx.stream, {b, static_cast<std::uint64_t>(k)});
        model::ForwardOptions opts;
        opts.config = model::sample_length_config(n, static_cast<int>(num_layers),
                                                  cfg.p_length_drop, derive_seed(s, {0}));
        opts.skip_layers = model::sample_layer_mask(static_cast<int>(num_layers),
                                                    cfg.p_layer_drop, derive_seed(s, {1}));
        model::ForwardTrace sub = model::forward(student, ex.tokens, opts);
        ad::Tensor term;
        if (ctx.method == Method::ID) {
          term = id_loss(sub, target, self_map, ad::Tensor());
        } else {
          // KL form: the target entropy is a constant, so gradients are unchanged.
          term = ad::add_scalar(span_pd_loss(sub.logits, target.logits, cfg.temperature),
                                -row_entropy(ad::transpose(target.logits), cfg.temperature));
        }
        parts.sandwich += term.item();
        total = ad::add(total, term);
      }
    }
    parts.total = total.item();
    require_finite(parts.total, "training loss");
    tape.backward(ad::scale(total, inv_batch));

    sum.total += parts.total;
    sum.id += parts.id;
    sum.pd += parts.pd;
    sum.sandwich += parts.sandwich;
  }
  optimizer.step(learning_rate);
  sum.total *= inv_batch;
  sum.id *= inv_batch;
  sum.pd *= inv_batch;
  sum.sandwich *= inv_batch;
  return sum;
}

// ---- pipelines -------------------------------------------------------------

namespace {

struct StepRunner {
  const eval::SpanTask& train;
  const eval::SpanTask& dev;
  const TrainingConfig& cfg;
  const PipelineHooks& hooks;
  std::vector<MetricsRow>& metrics;

  void run(model::EncoderModel& m, const std::string& role, int step_index,
           const PipelineStep& step, const std::vector<TeacherTrace>* teacher,
           const LayerMap* layer_map, ad::Tensor projection) {
    std::vector<ad::Tensor> params = parameter_list(m);
    if (projection.defined()) params.push_back(projection);
    Optimizer opt(params, cfg);
    StepContext ctx;
    ctx.method = step.method;
    ctx.length_drop = step.length_drop;
    ctx.cfg = &cfg;
    ctx.layer_map = layer_map;
    ctx.projection = projection;
    const double lr = cfg.learning_rate(step);
    const std::uint64_t role_tag = role == "teacher" ? 1 : 2;

    std::vector<std::size_t> order(train.size());
    const int epochs = cfg.scaled_epochs(step.epochs);
    for (int epoch = 1; epoch <= epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(cfg.seed, {role_tag, static_cast<std::uint64_t>(step_index),
                                                 static_cast<std::uint64_t>(epoch)}));
      std::shuffle(order.begin(), order.end(), rng);

      LossBreakdown acc;
      std::size_t seen = 0;
      std::uint64_t batch_no = 0;
      for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
        std::vector<const eval::SpanExample*> batch;
        std::vector<const TeacherTrace*> targets;
        for (std::size_t i = begin; i < end; ++i) {
          batch.push_back(&train.examples[order[i]]);
          if (teacher) targets.push_back(&(*teacher)[order[i]]);
        }
        ctx.stream = derive_seed(cfg.seed, {role_tag, static_cast<std::uint64_t>(step_index),
                                            static_cast<std::uint64_t>(epoch), batch_no++});
        LossBreakdown l;
        try {
          l = sandwich_step(m, batch, targets, ctx, opt, lr);
        } catch (const NumericError& e) {
          throw NumericError(role + " step " + std::to_string(step_index) + " (" +
                             std::string(method_name(step.method)) + ") epoch " +
                             std::to_string(epoch) + ": " + e.what());
        }
        const double w = static_cast<double>(batch.size());
        acc.total += l.total * w;
        acc.id += l.id * w;
        acc.pd += l.pd * w;
        acc.sandwich += l.sandwich * w;
        seen += batch.size();
      }
      const double inv = seen ? 1.0 / static_cast<double>(seen) : 0.0;
      MetricsRow row;
      row.model = role;
      row.step_index = step_index;
      row.epoch = epoch;
      row.loss = {acc.total * inv, acc.id * inv, acc.pd * inv, acc.sandwich * inv};
      row.dev_f1 = eval::evaluate_full(m, dev).f1;
      metrics.push_back(row);
      if (hooks.on_epoch) hooks.on_epoch(row);
    }
    m.zero_grad();
    if (projection.defined()) projection.zero_grad();
    if (hooks.on_step) hooks.on_step(role, step_index, m);
  }
};

}  // namespace

PipelineResult run_pipeline(const PipelineSpec& spec, const model::EncoderModel& teacher,
                            const model::EncoderModel& student, const eval::SpanTask& train,
                            const eval::SpanTask& dev, const TrainingConfig& cfg,
                            const PipelineHooks& hooks) {
  cfg.validate();
  if (spec.steps.empty()) throw ContractError("pipeline has no student steps");
  for (const auto& s : spec.steps)
    if (s.method == Method::FT)
      throw ContractError("FT steps train on gold labels and are allowed only in the teacher pipeline");
  for (const auto& s : spec.teacher_steps)
    if (s.method != Method::FT)
      throw ContractError("the teacher pipeline may contain only FT steps");
  if (train.empty()) throw ContractError("empty training task");
  if (dev.empty()) throw ContractError("empty dev task");

  PipelineResult result{teacher, student, {}};
  result.teacher.set_requires_grad(true);
  result.student.set_requires_grad(true);
  StepRunner runner{train, dev, cfg, hooks, result.metrics};

  for (std::size_t i = 0; i < spec.teacher_steps.size(); ++i)
    runner.run(result.teacher, "teacher", static_cast<int>(i + 1), spec.teacher_steps[i], nullptr,
               nullptr, ad::Tensor());

  const auto& sa = result.student.arch();
  const auto& ta = result.teacher.arch();
  const bool any_id = std::any_of(spec.steps.begin(), spec.steps.end(),
                                  [](const PipelineStep& s) { return s.method == Method::ID; });
  LayerMap layer_map;
  ad::Tensor projection;
  std::vector<bool> keep_layer(static_cast<std::size_t>(ta.num_layers), false);
  if (any_id) {
    layer_map = uniform_layer_map(sa.num_layers, ta.num_layers);
    for (const auto& [s, t] : layer_map) keep_layer[t] = true;
    const auto hs = static_cast<std::size_t>(sa.hidden);
    const auto ht = static_cast<std::size_t>(ta.hidden);
    projection = ad::Tensor({hs, ht}, 0.0, true);
    auto w = projection.mutable_data();
    if (hs == ht) {
      for (std::size_t i = 0; i < hs; ++i) w[i * ht + i] = 1.0;
    } else {
      std::mt19937_64 rng(derive_seed(cfg.seed, {0x70726f6aULL}));
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(hs)));
      for (double& v : w) v = dist(rng);
    }
  }

  // The teacher is frozen from here on, so its outputs are computed once.
  std::vector<TeacherTrace> cache;
  cache.reserve(train.size());
  for (const auto& ex : train.examples)
    cache.push_back(teacher_targets(result.teacher, ex.tokens, keep_layer));

  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    const auto& step = spec.steps[i];
    const bool id = step.method == Method::ID;
    runner.run(result.student, "student", static_cast<int>(i + 1), step, &cache,
               id ? &layer_map : nullptr, id ? projection : ad::Tensor());
  }
  return result;
}

// ---- metrics log -----------------------------------------------------------

std::string metrics_csv_header() {
  return "epoch,step_index,loss_total,loss_id,loss_pd,loss_sandwich,dev_f1,model";
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream out;
  out.precision(17);
  out << row.epoch << ',' << row.step_index << ',' << row.loss.total << ',' << row.loss.id << ','
      << row.loss.pd << ',' << row.loss.sandwich << ',' << row.dev_f1 << ',' << row.model;
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << metrics_csv_header() << '\n';
  for (const auto& r : rows) out << metrics_csv_row(r) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace lenopt::distill
