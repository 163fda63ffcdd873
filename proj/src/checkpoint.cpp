#include "lenopt/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "lenopt/errors.hpp"

namespace lenopt::model {

namespace {

constexpr const char* kFormat = "lenopt-checkpoint";
constexpr int kVersion = 1;

}  // namespace

nlohmann::json arch_to_json(const EncoderArch& arch) {
  return {{"num_layers", arch.num_layers}, {"hidden", arch.hidden}, {"ff", arch.ff},
          {"heads", arch.heads},           {"vocab", arch.vocab},   {"max_seq", arch.max_seq}};
}

EncoderArch arch_from_json(const nlohmann::json& j) {
  try {
    EncoderArch a;
    a.num_layers = j.at("num_layers").get<int>();
    a.hidden = j.at("hidden").get<int>();
    a.ff = j.at("ff").get<int>();
    a.heads = j.at("heads").get<int>();
    a.vocab = j.at("vocab").get<int>();
    a.max_seq = j.at("max_seq").get<int>();
    a.validate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad arch block: ") + e.what());
  } catch (const ParameterError& e) {
    throw IoError(std::string("bad arch block: ") + e.what());
  }
}

nlohmann::json model_to_json(const EncoderModel& model) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : model.named_parameters()) {
    tensors[name] = {{"shape", t.shape()},
                     {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  return {{"format", kFormat}, {"version", kVersion}, {"arch", arch_to_json(model.arch())},
          {"tensors", std::move(tensors)}};
}

EncoderModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) throw IoError("not a lenopt checkpoint");
    if (j.at("version").get<int>() != kVersion)
      throw IoError("unsupported checkpoint version " + j.at("version").dump());
    EncoderModel model(arch_from_json(j.at("arch")));
    const auto& tensors = j.at("tensors");
    for (auto& [name, t] : model.named_parameters()) {
      if (!tensors.contains(name)) throw IoError("missing tensor " + name);
      const auto& block = tensors.at(name);
      if (block.at("shape").get<ad::Shape>() != t.shape())
        throw IoError("tensor " + name + " has shape " + block.at("shape").dump() +
                      ", expected " + ad::shape_str(t.shape()));
      auto values = block.at("data").get<std::vector<double>>();
      if (values.size() != t.size())
        throw IoError("tensor " + name + " holds " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(t.size()));
      std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
    if (tensors.size() != model.named_parameters().size())
      throw IoError("checkpoint holds unexpected tensors");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << model_to_json(model).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace lenopt::model
