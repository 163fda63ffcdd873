#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "lenopt/encoder.hpp"

namespace lenopt::model {

nlohmann::json arch_to_json(const EncoderArch& arch);
/// Throws IoError on missing or ill-typed fields.
EncoderArch arch_from_json(const nlohmann::json& j);

/// {"format": "lenopt-checkpoint", "version": 1, "arch": {...},
///  "tensors": {name: {"shape": [...], "data": [...]}}}
nlohmann::json model_to_json(const EncoderModel& model);
EncoderModel model_from_json(const nlohmann::json& j);

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path);
/// Throws IoError when the file is missing, truncated or inconsistent with its arch.
EncoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace lenopt::model
