#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "lenopt/checkpoint.hpp"
#include "lenopt/commands.hpp"
#include "lenopt/csv.hpp"
#include "lenopt/errors.hpp"
#include "lenopt/evaluate.hpp"
#include "lenopt/pipeline.hpp"
#include "lenopt/plot.hpp"
#include "lenopt/task.hpp"

using namespace lenopt;
using namespace lenopt::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

json tiny_config() {
  return json{{"schema_version", 1},
              {"seed", 5},
              {"teacher_arch", {{"num_layers", 2}, {"hidden", 16}, {"ff", 32}, {"heads", 2}, {"vocab", 12}, {"max_seq", 16}}},
              {"student_arch", {{"num_layers", 2}, {"hidden", 8}, {"ff", 16}, {"heads", 2}, {"vocab", 12}, {"max_seq", 16}}},
              {"teacher", {{"fine_tune_epochs", 1}}},
              {"task", {{"train_size", 40}, {"dev_size", 20}}},
              {"search", {{"budget", 12}}}};
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("lenopt_cli_" + std::string(
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_config("tiny.json", tiny_config());
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_config(const std::string& name, const json& j) const { std::ofstream(dir_ / name) << j.dump(); }

  CliRun cli(std::vector<std::string> args) const {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
  }

  CliRun train(const std::string& out, const std::string& pipeline = "ID,1,F -> PD,1,F") const {
    return cli({"train", "--config", path("tiny.json"), "--pipeline", pipeline, "--out", path(out)});
  }

  fs::path dir_;
};

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const RunConfig defaults;
  const RunConfig back = config_from_json(config_to_json(defaults));
  EXPECT_EQ(config_to_json(back), config_to_json(defaults));
  EXPECT_EQ(back.search.budget, 150);
  EXPECT_EQ(back.student_arch, defaults.student_arch);
}

TEST(Config, RejectsUnknownFieldsAndVersions) {
  json j = tiny_config();
  j["trainig"] = json::object();
  EXPECT_THROW(config_from_json(j), ParameterError);
  j = tiny_config();
  j["search"]["budgett"] = 3;
  EXPECT_THROW(config_from_json(j), ParameterError);
  j = tiny_config();
  j["schema_version"] = 2;
  EXPECT_THROW(config_from_json(j), ParameterError);
  j.erase("schema_version");
  EXPECT_THROW(config_from_json(j), ParameterError);
  j = tiny_config();
  j["seed"] = "seven";
  EXPECT_THROW(config_from_json(j), ParameterError);
  j = tiny_config();
  j["training"] = {{"optimizer", "rmsprop"}};
  EXPECT_THROW(config_from_json(j), ParameterError);
}

TEST(Config, MalformedFileReportsOffset) {
  const auto p = fs::temp_directory_path() / "lenopt_bad_config.json";
  std::ofstream(p) << "{\"schema_version\": 1,, }";
  try {
    load_config(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 21u);
  }
  EXPECT_THROW(load_config(fs::temp_directory_path() / "lenopt_missing.json"), IoError);
}

TEST(Config, DefaultBudgetIs150) {
  CommandOptions o;
  o.command = "search";
  EXPECT_EQ(resolve_config(o).search.budget, 150);
  o.budget = 7;
  EXPECT_EQ(resolve_config(o).search.budget, 7);
}

TEST(Plot, BestSpeedupWithinOnePoint) {
  const std::vector<CurvePoint> front{{2.0, 88.0}, {3.0, 87.6}, {3.5, 87.2}};
  EXPECT_EQ(best_speedup_within(front, 88.5), 3.0);
  EXPECT_FALSE(best_speedup_within(front, 95.0).has_value());
  const auto s = summarize_curve({"m", front}, 88.5);
  EXPECT_EQ(s.max_f1, 88.0);
  EXPECT_EQ(s.best_speedup, 3.0);
  EXPECT_NE(markdown_table({s}).find("| m | 88.00 | 88.50 | 3.00x |"), std::string::npos);
  EXPECT_THROW(summarize_curve({"empty", {}}), ParameterError);
}

TEST(Plot, SinglePointChart) {
  const std::string svg = render_svg({{"only", {{1.5, 80.0}}}}, 81.0);
  EXPECT_EQ(count(svg, "class=\"marker\""), 1u);
  EXPECT_EQ(count(svg, "class=\"reference\""), 2u);
  EXPECT_EQ(count(svg, "class=\"curve\""), 1u);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(Plot, TwoCurvesTwoLegendEntriesDeterministicColours) {
  const std::vector<Curve> curves{{"a", {{1.0, 80.0}, {2.0, 79.0}}}, {"b", {{1.2, 78.0}}}};
  const std::string svg = render_svg(curves, 80.0);
  EXPECT_EQ(count(svg, "class=\"legend\""), 2u);
  EXPECT_NE(curve_colour(0), curve_colour(1));
  EXPECT_NE(svg.find(curve_colour(0)), std::string::npos);
  EXPECT_NE(svg.find(curve_colour(1)), std::string::npos);
  EXPECT_EQ(svg, render_svg(curves, 80.0));
}

TEST_F(CliTest, TrainWritesCheckpointsAndMetrics) {
  const auto r = train("run");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("run/checkpoints/student_step1.json")));
  EXPECT_TRUE(fs::exists(path("run/checkpoints/student_step2.json")));
  EXPECT_FALSE(fs::exists(path("run/checkpoints/student_step3.json")));
  const std::string csv = slurp(path("run/metrics.csv"));
  EXPECT_EQ(count(csv, ",student\n"), 2u);
  EXPECT_EQ(csv.rfind(distill::metrics_csv_header() + "\n", 0), 0u);
  const json manifest = json::parse(slurp(path("run/manifest.json")));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["seed"], 5);
  EXPECT_TRUE(manifest.contains("git_describe"));
  EXPECT_TRUE(manifest["finished_at"].is_string());
  EXPECT_EQ(manifest["config"], config_to_json(config_from_json(tiny_config())));
}

TEST_F(CliTest, TrainIsByteIdenticalAcrossRunsAndReplay) {
  ASSERT_EQ(train("a").code, 0);
  ASSERT_EQ(train("b").code, 0);
  EXPECT_EQ(slurp(path("a/metrics.csv")), slurp(path("b/metrics.csv")));
  EXPECT_EQ(slurp(path("a/student.json")), slurp(path("b/student.json")));
  const auto r = cli({"replay", "--manifest", path("a/manifest.json"), "--out", path("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("a/metrics.csv")), slurp(path("c/metrics.csv")));
}

TEST_F(CliTest, NaiveVariantStringAcceptedVerbatim) {
  const std::string naive = "(1) ID,20,F -> (2) PD,10,F -> PD,10,T";
  EXPECT_EQ(distill::parse_pipeline(naive).steps.size(), 3u);
  json j = tiny_config();
  j["training"] = {{"epoch_scale", 0.05}};
  j["task"] = {{"train_size", 8}, {"dev_size", 4}};
  write_config("fast.json", j);
  const auto r = cli({"train", "--config", path("fast.json"), "--pipeline", naive, "--out", path("naive")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("naive/checkpoints/student_step3.json")));
}

TEST_F(CliTest, PipelineParseFailureExitsTwoWithOffset) {
  const auto r = train("bad", "ID,1,F -> XX,1,F");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("offset 10"), std::string::npos) << r.err;
}

TEST_F(CliTest, DivergenceExitsThreeNamingStepAndEpoch) {
  json j = tiny_config();
  j["training"] = {{"lr_id", 1e12}, {"optimizer", "sgd"}};
  j["teacher"] = {{"fine_tune_epochs", 0}};
  write_config("nan.json", j);
  const auto r = cli({"train", "--config", path("nan.json"), "--pipeline", "ID,5,F", "--out", path("nan")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("student step 1 (ID) epoch"), std::string::npos) << r.err;
  // The manifest was written before training started.
  EXPECT_EQ(json::parse(slurp(path("nan/manifest.json")))["status"], "running");
}

TEST_F(CliTest, SearchBudgetParetoAndReproducibility) {
  ASSERT_EQ(train("run").code, 0);
  const std::vector<std::string> base{"search", "--config", path("tiny.json"), "--checkpoint",
                                      path("run/student.json"), "--task", path("run/dev.jsonl"), "--strategy",
                                      "random", "--budget", "5", "--out"};
  auto args = base;
  args.push_back(path("s1"));
  const auto r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto trials = hpo::read_trials_csv(path("s1/trials.csv"));
  EXPECT_EQ(trials.size(), 5u);

  const auto pareto = hpo::read_trials_csv(path("s1/pareto.csv"));
  ASSERT_FALSE(pareto.empty());
  const hpo::SearchSpace space{2, hpo::lower_bound_from_drop_ratio(16, 0.2), 16};
  for (const auto& a : pareto) {
    EXPECT_TRUE(hpo::validate_config(space, a.trial.config).empty());
    for (const auto& b : pareto) EXPECT_FALSE(hpo::dominates(a.trial, b.trial));
  }
  for (const auto& t : trials) {
    bool dominated = false;
    for (const auto& p : pareto) dominated |= hpo::dominates(p.trial, t.trial);
    bool listed = false;
    for (const auto& p : pareto) listed |= p.trial.trial_index == t.trial.trial_index;
    EXPECT_TRUE(dominated || listed);
  }

  args = base;
  args.push_back(path("s2"));
  ASSERT_EQ(cli(args).code, 0);
  EXPECT_EQ(slurp(path("s1/trials.csv")), slurp(path("s2/trials.csv")));
  EXPECT_EQ(slurp(path("s1/pareto.csv")), slurp(path("s2/pareto.csv")));
  ASSERT_EQ(cli({"replay", "--manifest", path("s1/manifest.json"), "--out", path("s3")}).code, 0);
  EXPECT_EQ(slurp(path("s1/trials.csv")), slurp(path("s3/trials.csv")));
}

TEST_F(CliTest, SearchOnCorruptCheckpointExitsFour) {
  std::ofstream(path("broken.json")) << "{\"format\": \"lenopt-checkpoint\", \"version\": 1, \"arch\": ";
  EXPECT_EQ(cli({"search", "--checkpoint", path("broken.json"), "--out", path("s")}).code, 4);
  EXPECT_EQ(cli({"search", "--checkpoint", path("missing.json"), "--out", path("s")}).code, 4);
}

TEST_F(CliTest, EvalFullLengthsMatchFullForward) {
  ASSERT_EQ(train("run").code, 0);
  const auto r = cli({"eval", "--config", path("tiny.json"), "--checkpoint", path("run/student.json"), "--task",
                      path("run/dev.jsonl"), "--lengths", "16-16", "--out", path("e")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = model::load_checkpoint(path("run/student.json"));
  const auto full = eval::evaluate_full(model, eval::load_task_jsonl(path("run/dev.jsonl")));
  const std::string csv = slurp(path("e/eval.csv"));
  std::ostringstream f1;
  f1.precision(17);
  f1 << full.f1;
  EXPECT_NE(csv.find("\n" + f1.str() + ","), std::string::npos) << csv;
  EXPECT_NE(r.out.find("speedup 1x"), std::string::npos) << r.out;
}

TEST_F(CliTest, EvalRejectsInvalidLengths) {
  ASSERT_EQ(train("run").code, 0);
  const auto r = cli({"eval", "--checkpoint", path("run/student.json"), "--task", path("run/dev.jsonl"),
                      "--lengths", "8-16", "--out", path("e")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("x1 > x0"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"eval", "--checkpoint", path("run/student.json"), "--lengths", "16-x", "--out", path("e")}).code, 2);
}

TEST_F(CliTest, EvalAcceptsLowerBoundUnderDefaultSpace) {
  model::EncoderArch arch{6, 8, 16, 2, 12, 384};
  model::save_checkpoint(model::EncoderModel::random(arch, 1), path("wide.json"));
  eval::save_task_jsonl(eval::generate_task(3, 2, 384, 12), path("dev384.jsonl"));
  auto r = cli({"eval", "--checkpoint", path("wide.json"), "--task", path("dev384.jsonl"), "--lengths",
                "91-91-91-91-91-91", "--out", path("e")});
  EXPECT_EQ(r.code, 0) << r.err;
  r = cli({"eval", "--checkpoint", path("wide.json"), "--task", path("dev384.jsonl"), "--lengths",
           "384-300-91-91-91-90", "--out", path("e")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("x5 < lower bound 91"), std::string::npos) << r.err;
  r = cli({"eval", "--checkpoint", path("wide.json"), "--task", path("dev384.jsonl"), "--lengths",
           "300-384-91-91-91-91", "--out", path("e")});
  EXPECT_NE(r.err.find("x1 > x0"), std::string::npos) << r.err;
}

TEST_F(CliTest, PlotConsumesSearchOutputAndIsReproducible) {
  ASSERT_EQ(train("run").code, 0);
  for (const std::string strategy : {"random", "evolutionary"})
    ASSERT_EQ(cli({"search", "--config", path("tiny.json"), "--checkpoint", path("run/student.json"), "--task",
                   path("run/dev.jsonl"), "--strategy", strategy, "--budget", "8", "--out", path(strategy)})
                  .code,
              0);
  const auto r = cli({"plot", path("random/pareto.csv"), path("evolutionary/pareto.csv"), "--out",
                      path("plots/front.svg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = slurp(path("plots/front.svg"));
  EXPECT_EQ(count(svg, "class=\"legend\""), 2u);
  EXPECT_EQ(count(svg, "class=\"reference\""), 2u);
  EXPECT_NE(svg.find(">random<"), std::string::npos);
  EXPECT_NE(svg.find(">evolutionary<"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("plots/front.md")));
  EXPECT_TRUE(fs::exists(path("plots/front.manifest.json")));

  ASSERT_EQ(cli({"replay", "--manifest", path("plots/front.manifest.json"), "--out", path("plots/again.svg")}).code, 0);
  EXPECT_EQ(svg, slurp(path("plots/again.svg")));
  EXPECT_EQ(slurp(path("plots/front.md")), slurp(path("plots/again.md")));
}

TEST_F(CliTest, PlotRejectsEmptyCsv) {
  std::ofstream(path("empty.csv")) << "trial_index,strategy,x0,x1,f1,cost_flops,wall_ms,speedup\n";
  EXPECT_EQ(cli({"plot", path("empty.csv"), "--out", path("p.svg")}).code, 2);
  EXPECT_EQ(cli({"plot", path("absent.csv"), "--out", path("p.svg")}).code, 4);
}

TEST_F(CliTest, ExportBundlesLengths) {
  ASSERT_EQ(train("run").code, 0);
  ASSERT_EQ(cli({"export", "--checkpoint", path("run/student.json"), "--lengths", "16-8", "--out",
                 path("x/model.json")})
                .code,
            0);
  const json j = json::parse(slurp(path("x/model.json")));
  EXPECT_EQ(j["length_config"], json::array({16, 8}));
  EXPECT_GT(j["speedup"].get<double>(), 1.0);
  EXPECT_EQ(model::model_from_json(j["model"]).arch(), model::load_checkpoint(path("run/student.json")).arch());
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"search", "--checkpoint", "x"}).code, 2);
  EXPECT_EQ(cli({"search", "--checkpoint", path("x"), "--strategy", "annealing", "--out", path("o")}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}
