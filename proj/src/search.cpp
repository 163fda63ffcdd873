#include "lenopt/search.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include "lenopt/errors.hpp"
#include "lenopt/seed.hpp"

namespace lenopt::hpo {

namespace {

std::vector<Evaluation> evaluate_batch(const std::vector<LengthConfig>& batch,
                                       const Objective& objective, int threads) {
  std::vector<Evaluation> out(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
  const auto workers = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(batch.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = objective(batch[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < batch.size(); i = next++) {
        try {
          out[i] = objective(batch[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double mean_f1(const std::vector<TrialRecord>& trials) {
  double s = 0.0;
  for (const auto& t : trials) s += t.f1;
  return s / static_cast<double>(trials.size());
}

double mean_cost(const std::vector<TrialRecord>& trials) {
  double s = 0.0;
  for (const auto& t : trials) s += t.cost;
  return s / static_cast<double>(trials.size());
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::Evolutionary: return "evolutionary";
    case Strategy::Bayesian: return "bayesian";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "random") return Strategy::Random;
  if (name == "evolutionary") return Strategy::Evolutionary;
  if (name == "bayesian") return Strategy::Bayesian;
  throw ParameterError("unknown search strategy '" + std::string(name) +
                       "', expected random, evolutionary or bayesian");
}

int threads_from_env() {
  const char* v = std::getenv("LENOPT_THREADS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

SearchResult run_search(Strategy strategy, int budget, const Objective& objective,
                        const SearchSpace& space, std::uint64_t seed, const SearchOptions& options) {
  if (budget < 1) throw ParameterError("search budget must be at least 1");
  if (options.batch_size < 1) throw ParameterError("batch_size must be at least 1");
  space.require_feasible();
  const int threads = options.threads > 0 ? options.threads : threads_from_env();
  const std::string tag(strategy_name(strategy));

  SearchResult result;
  while (static_cast<int>(result.trials.size()) < budget) {
    const int start = static_cast<int>(result.trials.size());
    const int q = std::min(options.batch_size, budget - start);
    std::vector<LengthConfig> batch;
    std::vector<TrialRecord> with_lies = result.trials;
    for (int k = 0; k < q; ++k) {
      const int index = start + k;
      const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(index)});
      const bool warmup = index < options.initial_samples || result.trials.empty();
      LengthConfig cfg;
      if (strategy == Strategy::Random || warmup) {
        cfg = sample_uniform(space, s);
      } else if (strategy == Strategy::Evolutionary) {
        cfg = evolve(tournament_parents(result.archive.points(), derive_seed(s, {1})), space, s,
                     options.evolve);
      } else {
        cfg = bayesian_suggest(with_lies, space, s, options.bayes);
        // Constant liar: pretend the pending point scored the running means.
        TrialRecord lie;
        lie.config = cfg;
        lie.f1 = mean_f1(result.trials);
        lie.cost = mean_cost(result.trials);
        with_lies.push_back(lie);
      }
      if (!validate_config(space, cfg).empty())
        throw ContractError("strategy proposed an invalid configuration " + cfg.str());
      batch.push_back(std::move(cfg));
    }
    const auto evals = evaluate_batch(batch, objective, threads);
    for (int k = 0; k < q; ++k) {
      TrialRecord rec;
      rec.config = batch[static_cast<std::size_t>(k)];
      rec.f1 = evals[static_cast<std::size_t>(k)].f1;
      rec.cost = evals[static_cast<std::size_t>(k)].cost;
      rec.wall_ms = evals[static_cast<std::size_t>(k)].wall_ms;
      rec.trial_index = start + k;
      rec.strategy = tag;
      result.archive.update(rec);
      result.trials.push_back(std::move(rec));
    }
  }
  return result;
}

}  // namespace lenopt::hpo
