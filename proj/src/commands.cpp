#include "lenopt/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lenopt/checkpoint.hpp"
#include "lenopt/csv.hpp"
#include "lenopt/errors.hpp"
#include "lenopt/evaluate.hpp"
#include "lenopt/format.hpp"
#include "lenopt/metrics.hpp"
#include "lenopt/plot.hpp"
#include "lenopt/search.hpp"
#include "lenopt/seed.hpp"
#include "lenopt/trainer.hpp"

#ifndef LENOPT_GIT_DESCRIBE
#define LENOPT_GIT_DESCRIBE "unknown"
#endif

namespace lenopt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + " is not valid JSON: " + e.what());
  }
}

/// Written before any work starts and completed once the command finishes.
class Manifest {
 public:
  Manifest(const CommandOptions& options, const RunConfig& config, std::vector<std::string> outputs)
      : path_(manifest_path(options)) {
    doc_ = json{{"format", "lenopt-manifest"},
                {"version", 1},
                {"command", options.command},
                {"options", options_to_json(options)},
                {"config", config_to_json(config)},
                {"seed", config.seed},
                {"git_describe", LENOPT_GIT_DESCRIBE},
                {"started_at", utc_now()},
                {"finished_at", nullptr},
                {"status", "running"},
                {"outputs", std::move(outputs)}};
    write_json(path_, doc_);
  }

  void finish() {
    doc_["finished_at"] = utc_now();
    doc_["status"] = "ok";
    write_json(path_, doc_);
  }

 private:
  fs::path path_;
  json doc_;
};

std::string to_string(const fs::path& p) { return p.string(); }

/// Throws ConstraintError naming every violated inequality.
model::LengthConfig parse_lengths(const std::string& text, const hpo::SearchSpace& space,
                                  const model::EncoderArch& arch) {
  const auto config = model::LengthConfig::parse(text);
  auto problems = hpo::validate_config(space, config);
  if (problems.empty()) problems = model::length_config_violations(config, arch);
  if (!problems.empty()) {
    std::string message = "invalid length configuration " + text + ":";
    for (const auto& p : problems) message += " " + p + ";";
    message.pop_back();
    throw ConstraintError(message);
  }
  return config;
}

eval::SpanTask load_or_generate_dev(const CommandOptions& options, const RunConfig& config) {
  if (options.task) return eval::load_task_jsonl(*options.task);
  if (config.task.dev_file) return eval::load_task_jsonl(*config.task.dev_file);
  return eval::generate_task(config.task.dev_seed, config.task.dev_size, config.student_arch.max_seq,
                             config.student_arch.vocab);
}

void check_task_fits(const eval::SpanTask& task, const model::EncoderArch& arch) {
  if (task.examples.empty()) throw ParameterError("task has no examples");
  if (task.seq_len != arch.max_seq)
    throw ParameterError("task sequence length " + std::to_string(task.seq_len) +
                         " does not match the model's max_seq " + std::to_string(arch.max_seq));
  if (task.vocab > arch.vocab)
    throw ParameterError("task vocabulary " + std::to_string(task.vocab) + " exceeds the model's " +
                         std::to_string(arch.vocab));
}

std::string percent(double f1) { return format_number(100.0 * f1); }

void cmd_train(const CommandOptions& options, std::ostream& out) {
  if (!options.pipeline) throw ParameterError("train needs --pipeline");
  const RunConfig config = resolve_config(options);
  distill::PipelineSpec spec = distill::parse_pipeline(*options.pipeline);
  const fs::path dir = options.out;

  std::vector<std::string> outputs{to_string(dir / "train.jsonl"), to_string(dir / "dev.jsonl"),
                                   to_string(dir / "metrics.csv"), to_string(dir / "teacher.json"),
                                   to_string(dir / "student.json"), to_string(dir / "checkpoints")};
  Manifest manifest(options, config, outputs);

  const eval::SpanTask train =
      config.task.train_file ? eval::load_task_jsonl(*config.task.train_file)
                             : eval::generate_task(config.task.train_seed, config.task.train_size,
                                                   config.student_arch.max_seq, config.student_arch.vocab);
  const eval::SpanTask dev = load_or_generate_dev(options, config);
  check_task_fits(train, config.student_arch);
  check_task_fits(dev, config.student_arch);
  eval::save_task_jsonl(train, dir / "train.jsonl");
  eval::save_task_jsonl(dev, dir / "dev.jsonl");

  model::EncoderModel teacher = config.teacher.checkpoint
                                    ? model::load_checkpoint(*config.teacher.checkpoint)
                                    : model::EncoderModel::random(config.teacher_arch, derive_seed(config.seed, {1}));
  check_task_fits(train, teacher.arch());
  if (!spec.has_teacher_pipeline() && !config.teacher.checkpoint && config.teacher.fine_tune_epochs > 0)
    spec.teacher_steps.push_back({distill::Method::FT, config.teacher.fine_tune_epochs, false});
  const auto student = model::EncoderModel::random(config.student_arch, derive_seed(config.seed, {2}));

  fs::create_directories(dir / "checkpoints");
  const fs::path metrics_path = dir / "metrics.csv";
  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics) throw IoError("cannot write " + metrics_path.string());
  metrics << distill::metrics_csv_header() << '\n';

  distill::PipelineHooks hooks;
  hooks.on_step = [&](const std::string& role, int step, const model::EncoderModel& m) {
    model::save_checkpoint(m, dir / "checkpoints" / (role + "_step" + std::to_string(step) + ".json"));
  };
  hooks.on_epoch = [&](const distill::MetricsRow& row) {
    metrics << distill::metrics_csv_row(row) << '\n';
    metrics.flush();
    out << row.model << " step " << row.step_index << " epoch " << row.epoch << ": loss "
        << format_number(row.loss.total) << ", dev F1 " << percent(row.dev_f1) << '\n';
  };
  const auto result = distill::run_pipeline(spec, teacher, student, train, dev, config.training, hooks);
  metrics.close();
  if (!metrics) throw IoError("cannot write " + metrics_path.string());

  model::save_checkpoint(result.teacher, dir / "teacher.json");
  model::save_checkpoint(result.student, dir / "student.json");
  out << "teacher dev F1 " << percent(eval::evaluate_full(result.teacher, dev).f1) << ", student dev F1 "
      << percent(eval::evaluate_full(result.student, dev).f1) << '\n';
  manifest.finish();
}

void cmd_search(const CommandOptions& options, std::ostream& out) {
  if (!options.checkpoint) throw ParameterError("search needs --checkpoint");
  RunConfig config = resolve_config(options);
  const auto student = model::load_checkpoint(*options.checkpoint);
  config.student_arch = student.arch();
  const auto space = config.search_space();
  space.require_feasible();
  if (space.upper > student.arch().max_seq) throw ParameterError("search upper bound exceeds the model's max_seq");
  const auto strategy = hpo::parse_strategy(config.search.strategy);
  const eval::SpanTask task = load_or_generate_dev(options, config);
  check_task_fits(task, student.arch());

  const fs::path dir = options.out;
  Manifest manifest(options, config,
                    {to_string(dir / "trials.csv"), to_string(dir / "pareto.csv"), to_string(dir / "reference.json")});

  const auto full = model::LengthConfig::full(student.arch().num_layers, student.arch().max_seq);
  const auto reference = eval::evaluate_model(student, full, task);
  write_json(dir / "reference.json", json{{"f1", reference.f1},
                                          {"exact_match", reference.exact_match},
                                          {"cost_flops", reference.cost_flops},
                                          {"lengths", full.lengths}});

  hpo::SearchOptions search_options;
  search_options.batch_size = config.search.batch_size;
  search_options.initial_samples = config.search.initial_samples;
  const auto result = hpo::run_search(
      strategy, config.search.budget,
      [&](const model::LengthConfig& c) {
        const auto r = eval::evaluate_model(student, c, task);
        return hpo::Evaluation{r.f1, r.cost_flops, std::nullopt};
      },
      space, config.seed, search_options);

  const int n = space.num_vars;
  hpo::write_trials_csv(dir / "trials.csv", result.trials, n, reference.cost_flops);
  hpo::write_trials_csv(dir / "pareto.csv", result.archive.sorted_by_cost(), n, reference.cost_flops);

  std::vector<CurvePoint> points;
  for (const auto& p : result.archive.points()) points.push_back({reference.cost_flops / p.cost, 100.0 * p.f1});
  const auto best = best_speedup_within(points, 100.0 * reference.f1);
  out << result.trials.size() << " trials, " << result.archive.size() << " on the Pareto front\n"
      << "full configuration F1 " << percent(reference.f1) << ", best speedup within 1 point: "
      << (best ? format_number(*best) + "x" : std::string("none")) << '\n';
  manifest.finish();
}

void cmd_eval(const CommandOptions& options, std::ostream& out) {
  if (!options.checkpoint) throw ParameterError("eval needs --checkpoint");
  if (!options.lengths) throw ParameterError("eval needs --lengths");
  RunConfig config = resolve_config(options);
  const auto model = model::load_checkpoint(*options.checkpoint);
  config.student_arch = model.arch();
  const auto config_lengths = parse_lengths(*options.lengths, config.search_space(), model.arch());
  const eval::SpanTask task = load_or_generate_dev(options, config);
  check_task_fits(task, model.arch());
  if (options.wall_clock_repeats != 0 && options.wall_clock_repeats < 3)
    throw ParameterError("--wall-clock needs at least 3 repeats");

  const fs::path dir = options.out;
  Manifest manifest(options, config, {to_string(dir / "eval.csv")});
  auto result = eval::evaluate_model(model, config_lengths, task);
  if (options.wall_clock_repeats > 0)
    result.wall_clock_ms =
        eval::measure_wall_clock(model, config_lengths, task, options.wall_clock_repeats).median_ms;
  const auto full = model::LengthConfig::full(model.arch().num_layers, model.arch().max_seq);
  const double speedup = eval::speedup(model.arch(), full, model.arch(), config_lengths);
  eval::append_eval_csv(dir / "eval.csv", result);
  out << "lengths " << config_lengths.str() << "\nf1 " << percent(result.f1) << "\nexact_match "
      << percent(result.exact_match) << "\nflops " << format_number(result.cost_flops) << "\nspeedup "
      << format_number(speedup) << "x\n";
  if (result.wall_clock_ms) out << "wall_ms " << format_number(*result.wall_clock_ms) << '\n';
  manifest.finish();
}

std::string curve_name(const fs::path& csv) {
  const std::string stem = csv.stem().string();
  if ((stem == "pareto" || stem == "trials") && csv.has_parent_path() && !csv.parent_path().filename().empty())
    return csv.parent_path().filename().string();
  return stem;
}

/// Full-model F1 (points) recorded by cmd_search next to the CSV, if any.
std::optional<double> reference_f1(const fs::path& csv) {
  const fs::path ref = csv.parent_path() / "reference.json";
  if (!fs::exists(ref)) return std::nullopt;
  const json j = read_json(ref);
  if (!j.contains("f1") || !j["f1"].is_number()) throw IoError(ref.string() + " has no numeric f1");
  return 100.0 * j["f1"].get<double>();
}

void cmd_plot(const CommandOptions& options, std::ostream& out) {
  if (options.inputs.empty()) throw ParameterError("plot needs at least one CSV");
  const RunConfig config = resolve_config(options);
  std::vector<Curve> curves;
  std::vector<CurveSummary> summaries;
  for (const auto& input : options.inputs) {
    const auto rows = hpo::read_trials_csv(input);
    if (rows.empty()) throw ParameterError("CSV " + input + " has no rows");
    Curve curve{curve_name(input), {}};
    for (const auto& r : rows) curve.points.push_back({r.speedup, 100.0 * r.trial.f1});
    const auto full = options.full_f1 ? options.full_f1 : reference_f1(input);
    summaries.push_back(summarize_curve(curve, full));
    curves.push_back(std::move(curve));
  }
  const fs::path svg_path = options.out;
  fs::path table_path = svg_path;
  table_path.replace_extension(".md");
  Manifest manifest(options, config, {to_string(svg_path), to_string(table_path)});
  write_text(svg_path, render_svg(curves, summaries.front().full_f1));
  const std::string table = markdown_table(summaries);
  write_text(table_path, table);
  out << table;
  manifest.finish();
}

void cmd_export(const CommandOptions& options, std::ostream& out) {
  if (!options.checkpoint) throw ParameterError("export needs --checkpoint");
  RunConfig config = resolve_config(options);
  const auto model = model::load_checkpoint(*options.checkpoint);
  config.student_arch = model.arch();
  const auto full = model::LengthConfig::full(model.arch().num_layers, model.arch().max_seq);
  const auto lengths = options.lengths ? parse_lengths(*options.lengths, config.search_space(), model.arch()) : full;
  Manifest manifest(options, config, {options.out});
  const double cost = eval::cost_flops(model.arch(), lengths);
  write_json(options.out, json{{"format", "lenopt-export"},
                               {"version", 1},
                               {"length_config", lengths.lengths},
                               {"cost_flops", cost},
                               {"speedup", eval::cost_flops(model.arch(), full) / cost},
                               {"model", model::model_to_json(model)}});
  out << "exported " << lengths.str() << " to " << options.out << '\n';
  manifest.finish();
}

}  // namespace

json options_to_json(const CommandOptions& o) {
  json j{{"command", o.command}, {"out", o.out}, {"inputs", o.inputs}, {"wall_clock_repeats", o.wall_clock_repeats}};
  auto put = [&](const char* key, const auto& value) {
    if (value) j[key] = *value;
  };
  put("config", o.config_path);
  put("pipeline", o.pipeline);
  put("strategy", o.strategy);
  put("budget", o.budget);
  put("seed", o.seed);
  put("lengths", o.lengths);
  put("checkpoint", o.checkpoint);
  put("task", o.task);
  put("full_f1", o.full_f1);
  return j;
}

CommandOptions options_from_json(const json& j) {
  try {
    CommandOptions o;
    o.command = j.at("command").get<std::string>();
    o.out = j.at("out").get<std::string>();
    o.inputs = j.value("inputs", std::vector<std::string>{});
    o.wall_clock_repeats = j.value("wall_clock_repeats", 0);
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<typename std::decay_t<decltype(field)>::value_type>();
    };
    get("config", o.config_path);
    get("pipeline", o.pipeline);
    get("strategy", o.strategy);
    get("budget", o.budget);
    get("seed", o.seed);
    get("lengths", o.lengths);
    get("checkpoint", o.checkpoint);
    get("task", o.task);
    get("full_f1", o.full_f1);
    return o;
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest options are malformed: ") + e.what());
  }
}

RunConfig resolve_config(const CommandOptions& options) {
  RunConfig config;
  if (options.config_snapshot) config = config_from_json(*options.config_snapshot);
  else if (options.config_path) config = load_config(*options.config_path);
  if (options.seed) {
    config.seed = *options.seed;
    config.training.seed = *options.seed;
  }
  if (options.strategy) config.search.strategy = *options.strategy;
  if (options.budget) config.search.budget = *options.budget;
  hpo::parse_strategy(config.search.strategy);
  config.validate();
  return config;
}

fs::path manifest_path(const CommandOptions& options) {
  if (options.out.empty()) throw ParameterError("--out is required");
  if (options.command == "plot" || options.command == "export") {
    fs::path p = options.out;
    p.replace_extension(".manifest.json");
    return p;
  }
  return fs::path(options.out) / "manifest.json";
}

void run_command(const CommandOptions& options, std::ostream& out) {
  if (options.out.empty()) throw ParameterError("--out is required");
  if (options.command == "train") return cmd_train(options, out);
  if (options.command == "search") return cmd_search(options, out);
  if (options.command == "eval") return cmd_eval(options, out);
  if (options.command == "plot") return cmd_plot(options, out);
  if (options.command == "export") return cmd_export(options, out);
  throw ParameterError("unknown command '" + options.command + "'");
}

void replay_manifest(const fs::path& manifest, const std::optional<std::string>& out_override, std::ostream& out) {
  const json doc = read_json(manifest);
  if (doc.value("format", "") != "lenopt-manifest") throw IoError(manifest.string() + " is not a run manifest");
  CommandOptions options = options_from_json(doc.at("options"));
  if (!doc.contains("config")) throw IoError(manifest.string() + " has no config snapshot");
  options.config_snapshot = doc.at("config");
  if (out_override) options.out = *out_override;
  run_command(options, out);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Length-adaptive encoder distillation and length-configuration search"};
  app.require_subcommand(1);
  CommandOptions o;
  std::string manifest;
  std::optional<std::string> replay_out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--seed", o.seed, "Overrides the config seed");
    sub->add_option("--out", o.out, "Output directory (file for plot and export)")->required();
  };
  auto* train = app.add_subcommand("train", "Train teacher and student along a pipeline");
  add_common(train);
  train->add_option("--pipeline", o.pipeline, "e.g. \"ID,20,F -> PD,10,T\" or a variant name")->required();
  auto* search = app.add_subcommand("search", "Search length configurations of a checkpoint");
  add_common(search);
  search->add_option("--checkpoint", o.checkpoint, "Trained model")->required();
  search->add_option("--task", o.task, "Dev task JSONL");
  search->add_option("--strategy", o.strategy, "random, evolutionary or bayesian");
  search->add_option("--budget", o.budget, "Number of evaluations (default 150)");
  auto* evalc = app.add_subcommand("eval", "Evaluate one length configuration");
  add_common(evalc);
  evalc->add_option("--checkpoint", o.checkpoint, "Trained model")->required();
  evalc->add_option("--task", o.task, "Dev task JSONL");
  evalc->add_option("--lengths", o.lengths, "Dash-joined lengths, e.g. 32-32-16-8")->required();
  evalc->add_option("--wall-clock", o.wall_clock_repeats, "Also time this many passes (>= 3)");
  auto* plot = app.add_subcommand("plot", "Pareto chart and summary table from search CSVs");
  add_common(plot);
  plot->add_option("csv", o.inputs, "Pareto or trial CSVs")->required();
  plot->add_option("--full-f1", o.full_f1, "Full-model F1 in points");
  auto* exportc = app.add_subcommand("export", "Write a checkpoint bundled with a length configuration");
  add_common(exportc);
  exportc->add_option("--checkpoint", o.checkpoint, "Trained model")->required();
  exportc->add_option("--lengths", o.lengths, "Dash-joined lengths (default: full)");
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--out", replay_out, "Write outputs here instead");

  std::vector<const char*> argv{"lenopt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (replay->parsed()) {
      replay_manifest(manifest, replay_out, out);
    } else {
      o.command = app.get_subcommands().front()->get_name();
      if (o.pipeline)
        if (auto named = distill::variant_pipeline(*o.pipeline)) o.pipeline = *named;
      run_command(o, out);
    }
    return kExitOk;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {  // parameter, constraint and shape errors
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace lenopt::cli
