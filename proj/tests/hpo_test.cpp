#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "lenopt/csv.hpp"
#include "lenopt/errors.hpp"
#include "lenopt/gaussian_process.hpp"
#include "lenopt/pareto.hpp"
#include "lenopt/search.hpp"
#include "lenopt/search_space.hpp"
#include "lenopt/strategies.hpp"

using namespace lenopt;
using namespace lenopt::hpo;

namespace {

TrialRecord point(double f1, double cost, int index = 0) {
  TrialRecord r;
  r.f1 = f1;
  r.cost = cost;
  r.trial_index = index;
  r.config = LengthConfig{{1}};
  return r;
}

std::vector<TrialRecord> random_points(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TrialRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(point(u(rng), u(rng), i));
  return out;
}

bool same_set(std::vector<TrialRecord> a, std::vector<TrialRecord> b) {
  auto key = [](const TrialRecord& r) { return r.trial_index; };
  std::vector<int> ka, kb;
  for (auto& r : a) ka.push_back(key(r));
  for (auto& r : b) kb.push_back(key(r));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  return ka == kb;
}

Evaluation analytic(const LengthConfig& c, const SearchSpace& space) {
  double inv = 0.0, sum = 0.0;
  for (int v : c.lengths) {
    inv += 1.0 / v;
    sum += v;
  }
  return {1.0 - inv * space.lower / space.num_vars, sum, std::nullopt};
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "lenopt_hpo_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(LowerBound, RecomputedFromDropRatio) {
  const double exact = (384 * std::pow(0.8, 7) + 384 * std::pow(0.8, 6)) / 2.0;
  EXPECT_NEAR(exact, 90.597, 1e-3);
  EXPECT_EQ(lower_bound_from_drop_ratio(384, 0.2), 91);
  EXPECT_EQ(SearchSpace{}.lower, 91);
  EXPECT_EQ(SearchSpace{}.upper, 384);
  EXPECT_EQ(SearchSpace{}.num_vars, 6);
}

TEST(ValidateConfig, NamesViolatedInequalities) {
  const SearchSpace space;
  EXPECT_TRUE(validate_config(space, LengthConfig{{384, 300, 250, 200, 150, 91}}).empty());
  EXPECT_EQ(validate_config(space, LengthConfig{{300, 384, 250, 200, 150, 91}}),
            std::vector<std::string>{"x1 > x0"});
  EXPECT_EQ(validate_config(space, LengthConfig{{384, 300, 250, 200, 150, 90}}),
            std::vector<std::string>{"x5 < lower bound 91"});
  EXPECT_EQ(validate_config(space, LengthConfig{{385, 300, 250, 200, 150, 91}}),
            std::vector<std::string>{"x0 > upper bound 384"});
  EXPECT_EQ(validate_config(space, LengthConfig{{384, 300}}).size(), 1u);
}

TEST(SampleUniform, DegenerateLatticeAndInfeasibleSpace) {
  const SearchSpace point_space{3, 7, 7};
  EXPECT_EQ(sample_uniform(point_space, 1), (LengthConfig{{7, 7, 7}}));
  EXPECT_THROW(sample_uniform(SearchSpace{3, 8, 7}, 1), ParameterError);
  EXPECT_THROW(sample_uniform(SearchSpace{3, 0, 7}, 1), ParameterError);
}

TEST(SampleUniform, AlwaysValidAndDeterministic) {
  const SearchSpace space;
  for (std::uint64_t s = 0; s < 100000; ++s) {
    const auto c = sample_uniform(space, s);
    ASSERT_TRUE(validate_config(space, c).empty()) << c.str();
  }
  EXPECT_EQ(sample_uniform(space, 42), sample_uniform(space, 42));
}

TEST(SampleUniform, SortedDrawDistributionPassesChiSquare) {
  const SearchSpace space{2, 1, 3};
  // Sorted pairs of two independent uniform draws from {1,2,3}.
  const std::map<std::pair<int, int>, double> expected{
      {{1, 1}, 1.0 / 9}, {{2, 2}, 1.0 / 9}, {{3, 3}, 1.0 / 9},
      {{2, 1}, 2.0 / 9}, {{3, 1}, 2.0 / 9}, {{3, 2}, 2.0 / 9}};
  const int n = 90000;
  std::map<std::pair<int, int>, int> counts;
  for (int s = 0; s < n; ++s) {
    const auto c = sample_uniform(space, static_cast<std::uint64_t>(s));
    ++counts[{c[0], c[1]}];
  }
  ASSERT_EQ(counts.size(), 6u);
  double chi2 = 0.0;
  for (const auto& [pair, p] : expected) {
    const double e = p * n;
    chi2 += (counts[pair] - e) * (counts[pair] - e) / e;
  }
  EXPECT_LT(chi2, 15.086);  // 5 degrees of freedom, p = 0.01
}

TEST(Evolve, IdenticalParentsWithoutMutationReproduceTheParent) {
  const SearchSpace space;
  TrialRecord parent;
  parent.config = LengthConfig{{384, 300, 250, 200, 150, 91}};
  EvolveOptions off;
  off.mutation_prob = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(evolve({parent, parent}, space, s, off), parent.config);
}

TEST(Evolve, ChildrenAreValidAndDeterministic) {
  const SearchSpace space;
  std::vector<TrialRecord> parents;
  for (std::uint64_t s = 0; s < 5; ++s) {
    TrialRecord r;
    r.config = sample_uniform(space, s);
    parents.push_back(r);
  }
  EvolveOptions wild;
  wild.mutation_prob = 1.0;
  wild.max_step = 500;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    ASSERT_TRUE(validate_config(space, evolve(parents, space, s)).empty());
    ASSERT_TRUE(validate_config(space, evolve(parents, space, s, wild)).empty());
  }
  EXPECT_EQ(evolve(parents, space, 9), evolve(parents, space, 9));
  EXPECT_THROW(evolve({}, space, 1), ContractError);
}

TEST(Pareto, HandExamples) {
  ParetoArchive a;
  EXPECT_TRUE(a.update(point(0.9, 10, 0)));
  EXPECT_TRUE(a.update(point(0.8, 5, 1)));
  EXPECT_FALSE(pareto_update(a, point(0.85, 12, 2)));
  EXPECT_EQ(a.size(), 2u);
  EXPECT_TRUE(pareto_update(a, point(0.95, 4, 3)));
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.points()[0].trial_index, 3);
}

TEST(Pareto, StreamingEqualsBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pts = random_points(seed, 1000);
    ParetoArchive a;
    for (const auto& p : pts) {
      a.update(p);
      for (const auto& x : a.points())
        for (const auto& y : a.points()) ASSERT_FALSE(dominates(x, y));
    }
    EXPECT_TRUE(same_set(a.points(), non_dominated(pts))) << "seed " << seed;
  }
}

TEST(Hypervolume, HandExamples) {
  EXPECT_DOUBLE_EQ(hypervolume({point(1.0, 1.0)}, 0.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(hypervolume({}, 0.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(hypervolume({point(1.0, 1.0), point(0.5, 0.0)}, 0.0, 2.0), 1.5);
  EXPECT_THROW(hypervolume({point(1.0, 3.0)}, 0.0, 2.0), ContractError);
}

TEST(Hypervolume, MatchesMonteCarlo) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pts = random_points(100 + seed, 20);
    const double hv = hypervolume(pts, 0.0, 1.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int hit = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      const double f = u(rng), c = u(rng);
      for (const auto& p : pts)
        if (p.f1 >= f && p.cost <= c) {
          ++hit;
          break;
        }
    }
    EXPECT_NEAR(hv, static_cast<double>(hit) / n, 0.01 * hv) << "seed " << seed;
  }
}

TEST(Hypervolume, NonDecreasingAsPointsAccumulate) {
  const auto pts = random_points(7, 200);
  std::vector<TrialRecord> seen;
  double last = 0.0;
  for (const auto& p : pts) {
    seen.push_back(p);
    const double hv = hypervolume(seen, 0.0, 1.0);
    EXPECT_GE(hv, last * (1.0 - 1e-12));
    last = hv;
  }
}

TEST(GaussianProcessFit, InterpolatesTrainingData) {
  Eigen::MatrixXd x(6, 1);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    x(i, 0) = i / 5.0;
    y(i) = std::sin(3.0 * x(i, 0));
  }
  GaussianProcess gp;
  gp.fit(x, y);
  for (int i = 0; i < 6; ++i) {
    const auto p = gp.predict(x.row(i).transpose());
    EXPECT_NEAR(p.mean, y(i), 1e-3);
    EXPECT_LT(p.variance, 1e-3);
  }
  Eigen::VectorXd far(1);
  far(0) = 5.0;
  EXPECT_GT(gp.predict(far).variance, 0.1);
  EXPECT_THROW(gp.fit(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0)), ContractError);
}

TEST(BayesianSuggest, EmptyHistoryFallsBackToUniform) {
  const SearchSpace space;
  EXPECT_EQ(bayesian_suggest({}, space, 5), sample_uniform(space, 5));
}

TEST(BayesianSuggest, ValidAndDeterministic) {
  const SearchSpace space;
  std::vector<TrialRecord> history;
  for (int i = 0; i < 12; ++i) {
    TrialRecord r;
    r.config = sample_uniform(space, static_cast<std::uint64_t>(i));
    auto e = analytic(r.config, space);
    r.f1 = e.f1;
    r.cost = e.cost;
    history.push_back(r);
  }
  for (std::uint64_t s = 0; s < 200; ++s)
    ASSERT_TRUE(validate_config(space, bayesian_suggest(history, space, s)).empty());
  EXPECT_EQ(bayesian_suggest(history, space, 3), bayesian_suggest(history, space, 3));
}

TEST(BayesianSuggest, ConcentratesOnTheDominantRegion) {
  // Both objectives are quadratic bowls around the same point, so every
  // scalarization prefers the same region.
  const SearchSpace space{6, 91, 384};
  const std::vector<double> centre{0.9, 0.8, 0.6, 0.5, 0.3, 0.2};
  auto dist2 = [&](const LengthConfig& c) {
    const auto z = normalize(space, c);
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) d += (z[i] - centre[i]) * (z[i] - centre[i]);
    return d;
  };
  std::vector<TrialRecord> history;
  for (int i = 0; i < 40; ++i) {
    TrialRecord r;
    r.config = sample_uniform(space, 1000 + static_cast<std::uint64_t>(i));
    r.f1 = 1.0 - dist2(r.config);
    r.cost = 10.0 + 5.0 * dist2(r.config);
    history.push_back(r);
  }
  std::vector<double> lattice;
  for (std::uint64_t s = 0; s < 20000; ++s) lattice.push_back(dist2(sample_uniform(space, 50000 + s)));
  std::sort(lattice.begin(), lattice.end());
  const double decile = lattice[lattice.size() / 10];
  int good = 0;
  for (std::uint64_t s = 0; s < 100; ++s)
    if (dist2(bayesian_suggest(history, space, s)) <= decile) ++good;
  EXPECT_GE(good, 70);
}

TEST(RunSearch, BudgetOneYieldsThatTrial) {
  const SearchSpace space;
  for (auto strategy : {Strategy::Random, Strategy::Evolutionary, Strategy::Bayesian}) {
    auto r = run_search(strategy, 1, [&](const LengthConfig& c) { return analytic(c, space); }, space, 1);
    ASSERT_EQ(r.trials.size(), 1u);
    ASSERT_EQ(r.archive.size(), 1u);
    EXPECT_EQ(r.archive.points()[0].config, r.trials[0].config);
  }
}

TEST(RunSearch, BudgetArchiveAndDeterminism) {
  const SearchSpace space;
  for (auto strategy : {Strategy::Random, Strategy::Evolutionary, Strategy::Bayesian}) {
    int calls = 0;
    auto objective = [&](const LengthConfig& c) {
      ++calls;
      return analytic(c, space);
    };
    SearchOptions serial;
    serial.threads = 1;
    const auto a = run_search(strategy, 37, objective, space, 9, serial);
    EXPECT_EQ(calls, 37);
    ASSERT_EQ(a.trials.size(), 37u);
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
      EXPECT_EQ(a.trials[i].trial_index, static_cast<int>(i));
      EXPECT_EQ(a.trials[i].strategy, strategy_name(strategy));
      EXPECT_TRUE(validate_config(space, a.trials[i].config).empty());
    }
    EXPECT_TRUE(same_set(a.archive.points(), non_dominated(a.trials)));

    SearchOptions parallel;
    parallel.threads = 3;
    const auto b = run_search(strategy, 37, [&](const LengthConfig& c) { return analytic(c, space); },
                              space, 9, parallel);
    ASSERT_EQ(b.trials.size(), a.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].config, b.trials[i].config);
  }
}

TEST(RunSearch, ParameterErrors) {
  const SearchSpace space;
  auto objective = [&](const LengthConfig& c) { return analytic(c, space); };
  EXPECT_THROW(run_search(Strategy::Random, 0, objective, space, 1), ParameterError);
  EXPECT_THROW(parse_strategy("annealing"), ParameterError);
  EXPECT_EQ(parse_strategy("bayesian"), Strategy::Bayesian);
}

TEST(TrialsCsv, RoundTrip) {
  const SearchSpace space{3, 2, 9};
  const auto r = run_search(Strategy::Random, 6, [&](const LengthConfig& c) {
    Evaluation e = analytic(c, space);
    if (c[0] > 5) e.wall_ms = 1.25;
    return e;
  }, space, 4);
  const auto path = temp_path("trials.csv");
  write_trials_csv(path, r.trials, 3, 30.0);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "trial_index,strategy,x0,x1,x2,f1,cost_flops,wall_ms,speedup");
  const auto rows = read_trials_csv(path);
  ASSERT_EQ(rows.size(), r.trials.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].trial.config, r.trials[i].config);
    EXPECT_EQ(rows[i].trial.f1, r.trials[i].f1);
    EXPECT_EQ(rows[i].trial.cost, r.trials[i].cost);
    EXPECT_EQ(rows[i].trial.wall_ms, r.trials[i].wall_ms);
    EXPECT_EQ(rows[i].speedup, 30.0 / r.trials[i].cost);
  }
  std::ofstream(path) << "trial_index,strategy,x0,f1,cost_flops,wall_ms,speedup\n0,random,abc,1,1,,1\n";
  EXPECT_THROW(read_trials_csv(path), ParseError);
  EXPECT_THROW(read_trials_csv(temp_path("nope.csv")), IoError);
}

TEST(Crowding, EndpointsInfiniteInteriorFinite) {
  const std::vector<TrialRecord> front{point(0.9, 10, 0), point(0.5, 2, 1), point(0.7, 5, 2), point(0.8, 6, 3)};
  const auto d = crowding_distance(front);
  EXPECT_TRUE(std::isinf(d[0]));
  EXPECT_TRUE(std::isinf(d[1]));
  EXPECT_NEAR(d[2], (6.0 - 2.0) / 8.0 + (0.8 - 0.5) / 0.4, 1e-12);
  EXPECT_NEAR(d[3], (10.0 - 5.0) / 8.0 + (0.9 - 0.7) / 0.4, 1e-12);
  EXPECT_EQ(crowding_distance({point(1, 1)}).size(), 1u);
}

TEST(Crowding, TournamentFavoursSparseRegions) {
  std::vector<TrialRecord> front{point(0.0, 0.0, 0)};
  for (int i = 1; i <= 20; ++i) front.push_back(point(0.9 + i * 0.001, 10.0 + i * 0.01, i));
  front.push_back(point(1.0, 20.0, 21));
  int extremes = 0;
  for (std::uint64_t s = 0; s < 2000; ++s)
    for (const auto& w : tournament_parents(front, s))
      if (w.trial_index == 0 || w.trial_index == 21) ++extremes;
  // Uniform picking would choose an endpoint about 9% of the time.
  EXPECT_GT(extremes, 4000 * 0.15);
  EXPECT_THROW(tournament_parents({}, 1), ContractError);
}
