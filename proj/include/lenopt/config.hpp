#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lenopt/encoder.hpp"
#include "lenopt/search_space.hpp"
#include "lenopt/trainer.hpp"

namespace lenopt::cli {

inline constexpr int kConfigSchemaVersion = 1;

struct TaskSettings {
  int train_size = 1500;
  int dev_size = 300;
  std::uint64_t train_seed = 1;
  std::uint64_t dev_seed = 2;
  /// Optional JSONL files used instead of generating the task.
  std::optional<std::string> train_file;
  std::optional<std::string> dev_file;
};

struct TeacherSettings {
  /// Start from this checkpoint instead of a random teacher.
  std::optional<std::string> checkpoint;
  /// Fine-tuning epochs run before distillation when the pipeline has no
  /// teacher section and no checkpoint is given.
  int fine_tune_epochs = 5;
};

struct SearchSettings {
  std::string strategy = "bayesian";
  int budget = 150;
  /// Defaults: lower from the 0.2 drop ratio, upper = student max_seq.
  std::optional<int> lower;
  std::optional<int> upper;
  int batch_size = 4;
  int initial_samples = 10;
};

/// Everything a command needs besides its flags. Defaults are the desk-scale
/// setup: a 6-layer h=64 teacher and a 4-layer h=32 student on 32 tokens.
struct RunConfig {
  std::uint64_t seed = 3;
  model::EncoderArch teacher_arch{6, 64, 128, 4, 24, 32};
  model::EncoderArch student_arch{4, 32, 64, 4, 24, 32};
  TeacherSettings teacher;
  distill::TrainingConfig training = desk_training();
  TaskSettings task;
  SearchSettings search;

  /// Search space over the student's layers.
  hpo::SearchSpace search_space() const;
  /// Throws ParameterError for inconsistent settings.
  void validate() const;

  static distill::TrainingConfig desk_training();
};

/// Throws ParameterError for unknown fields, a wrong schema_version or an
/// ill-typed value; every field is optional.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);

/// Throws IoError when unreadable, ParseError (with byte offset) when not JSON.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace lenopt::cli
