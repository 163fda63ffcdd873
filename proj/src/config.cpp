#include "lenopt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lenopt/checkpoint.hpp"
#include "lenopt/errors.hpp"

namespace lenopt::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ParameterError("unknown field '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T value{};
  read(j, key, value, where);
  out = value;
}

model::EncoderArch read_arch(const json& j, const std::string& where, model::EncoderArch arch) {
  reject_unknown(j, where, {"num_layers", "hidden", "ff", "heads", "vocab", "max_seq"});
  read(j, "num_layers", arch.num_layers, where);
  read(j, "hidden", arch.hidden, where);
  read(j, "ff", arch.ff, where);
  read(j, "heads", arch.heads, where);
  read(j, "vocab", arch.vocab, where);
  read(j, "max_seq", arch.max_seq, where);
  return arch;
}

distill::TrainingConfig read_training(const json& j, distill::TrainingConfig t) {
  const std::string where = "training";
  reject_unknown(j, where,
                 {"lr_id", "lr_pd", "lr_pd_length_drop", "lr_ft", "batch_size", "p_length_drop",
                  "p_layer_drop", "num_sandwiches", "temperature", "optimizer", "adam_beta1",
                  "adam_beta2", "adam_eps", "epoch_scale"});
  read(j, "lr_id", t.lr_id, where);
  read(j, "lr_pd", t.lr_pd, where);
  read(j, "lr_pd_length_drop", t.lr_pd_length_drop, where);
  read(j, "lr_ft", t.lr_ft, where);
  read(j, "batch_size", t.batch_size, where);
  read(j, "p_length_drop", t.p_length_drop, where);
  read(j, "p_layer_drop", t.p_layer_drop, where);
  read(j, "num_sandwiches", t.num_sandwiches, where);
  read(j, "temperature", t.temperature, where);
  read(j, "adam_beta1", t.adam_beta1, where);
  read(j, "adam_beta2", t.adam_beta2, where);
  read(j, "adam_eps", t.adam_eps, where);
  read(j, "epoch_scale", t.epoch_scale, where);
  if (j.contains("optimizer")) {
    std::string name;
    read(j, "optimizer", name, where);
    if (name == "sgd") t.optimizer = distill::OptimizerKind::SGD;
    else if (name == "adam") t.optimizer = distill::OptimizerKind::Adam;
    else throw ParameterError("training.optimizer must be \"sgd\" or \"adam\", got \"" + name + "\"");
  }
  return t;
}

}  // namespace

distill::TrainingConfig RunConfig::desk_training() {
  distill::TrainingConfig t;
  t.optimizer = distill::OptimizerKind::Adam;
  t.lr_ft = 5e-4;
  t.lr_id = 1e-3;
  t.lr_pd = 1e-3;
  t.lr_pd_length_drop = 5e-4;
  return t;
}

hpo::SearchSpace RunConfig::search_space() const {
  hpo::SearchSpace space;
  space.num_vars = student_arch.num_layers;
  space.upper = search.upper.value_or(student_arch.max_seq);
  space.lower = search.lower.value_or(hpo::lower_bound_from_drop_ratio(student_arch.max_seq, 0.2));
  return space;
}

void RunConfig::validate() const {
  try {
    teacher_arch.validate();
    student_arch.validate();
  } catch (const std::exception& e) {
    throw ParameterError(std::string("invalid architecture: ") + e.what());
  }
  if (teacher_arch.vocab != student_arch.vocab || teacher_arch.max_seq != student_arch.max_seq)
    throw ParameterError("teacher and student must share vocab and max_seq");
  training.validate();
  if (task.train_size < 1 || task.dev_size < 1) throw ParameterError("task sizes must be positive");
  if (teacher.fine_tune_epochs < 0) throw ParameterError("teacher.fine_tune_epochs must be >= 0");
  if (search.budget < 1) throw ParameterError("search.budget must be at least 1");
  if (search.batch_size < 1) throw ParameterError("search.batch_size must be at least 1");
  if (search.initial_samples < 0) throw ParameterError("search.initial_samples must be >= 0");
  const auto space = search_space();
  if (space.upper > student_arch.max_seq)
    throw ParameterError("search.upper exceeds the student's max_seq");
  space.require_feasible();
}

RunConfig config_from_json(const json& j) {
  reject_unknown(j, "config",
                 {"schema_version", "seed", "teacher_arch", "student_arch", "teacher", "training",
                  "task", "search"});
  if (!j.contains("schema_version")) throw ParameterError("config is missing schema_version");
  int version = 0;
  read(j, "schema_version", version, "config");
  if (version != kConfigSchemaVersion)
    throw ParameterError("unsupported schema_version " + std::to_string(version) + ", expected " +
                         std::to_string(kConfigSchemaVersion));
  RunConfig c;
  read(j, "seed", c.seed, "config");
  if (j.contains("teacher_arch")) c.teacher_arch = read_arch(j["teacher_arch"], "teacher_arch", c.teacher_arch);
  if (j.contains("student_arch")) c.student_arch = read_arch(j["student_arch"], "student_arch", c.student_arch);
  if (j.contains("teacher")) {
    const auto& t = j["teacher"];
    reject_unknown(t, "teacher", {"checkpoint", "fine_tune_epochs"});
    read_optional(t, "checkpoint", c.teacher.checkpoint, "teacher");
    read(t, "fine_tune_epochs", c.teacher.fine_tune_epochs, "teacher");
  }
  if (j.contains("training")) c.training = read_training(j["training"], c.training);
  if (j.contains("task")) {
    const auto& t = j["task"];
    reject_unknown(t, "task", {"train_size", "dev_size", "train_seed", "dev_seed", "train_file", "dev_file"});
    read(t, "train_size", c.task.train_size, "task");
    read(t, "dev_size", c.task.dev_size, "task");
    read(t, "train_seed", c.task.train_seed, "task");
    read(t, "dev_seed", c.task.dev_seed, "task");
    read_optional(t, "train_file", c.task.train_file, "task");
    read_optional(t, "dev_file", c.task.dev_file, "task");
  }
  if (j.contains("search")) {
    const auto& s = j["search"];
    reject_unknown(s, "search", {"strategy", "budget", "lower", "upper", "batch_size", "initial_samples"});
    read(s, "strategy", c.search.strategy, "search");
    read(s, "budget", c.search.budget, "search");
    read_optional(s, "lower", c.search.lower, "search");
    read_optional(s, "upper", c.search.upper, "search");
    read(s, "batch_size", c.search.batch_size, "search");
    read(s, "initial_samples", c.search.initial_samples, "search");
  }
  c.training.seed = c.seed;
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& t = c.training;
  json training{{"lr_id", t.lr_id},
                {"lr_pd", t.lr_pd},
                {"lr_pd_length_drop", t.lr_pd_length_drop},
                {"lr_ft", t.lr_ft},
                {"batch_size", t.batch_size},
                {"p_length_drop", t.p_length_drop},
                {"p_layer_drop", t.p_layer_drop},
                {"num_sandwiches", t.num_sandwiches},
                {"temperature", t.temperature},
                {"optimizer", t.optimizer == distill::OptimizerKind::Adam ? "adam" : "sgd"},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"epoch_scale", t.epoch_scale}};
  json task{{"train_size", c.task.train_size},
            {"dev_size", c.task.dev_size},
            {"train_seed", c.task.train_seed},
            {"dev_seed", c.task.dev_seed}};
  if (c.task.train_file) task["train_file"] = *c.task.train_file;
  if (c.task.dev_file) task["dev_file"] = *c.task.dev_file;
  json teacher{{"fine_tune_epochs", c.teacher.fine_tune_epochs}};
  if (c.teacher.checkpoint) teacher["checkpoint"] = *c.teacher.checkpoint;
  json search{{"strategy", c.search.strategy},
              {"budget", c.search.budget},
              {"batch_size", c.search.batch_size},
              {"initial_samples", c.search.initial_samples}};
  if (c.search.lower) search["lower"] = *c.search.lower;
  if (c.search.upper) search["upper"] = *c.search.upper;
  return json{{"schema_version", kConfigSchemaVersion},
              {"seed", c.seed},
              {"teacher_arch", model::arch_to_json(c.teacher_arch)},
              {"student_arch", model::arch_to_json(c.student_arch)},
              {"teacher", teacher},
              {"training", training},
              {"task", task},
              {"search", search}};
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + " is not valid JSON: " + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  return config_from_json(j);
}

}  // namespace lenopt::cli
