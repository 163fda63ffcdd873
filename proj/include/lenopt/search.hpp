#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lenopt/pareto.hpp"
#include "lenopt/search_space.hpp"
#include "lenopt/strategies.hpp"

namespace lenopt::hpo {

enum class Strategy { Random, Evolutionary, Bayesian };

std::string_view strategy_name(Strategy s);
/// "random", "evolutionary" or "bayesian"; throws ParameterError otherwise.
Strategy parse_strategy(std::string_view name);

struct Evaluation {
  double f1 = 0.0;
  double cost = 0.0;
  std::optional<double> wall_ms;
};

/// Must be safe to call concurrently when more than one thread is used.
using Objective = std::function<Evaluation(const LengthConfig&)>;

struct SearchOptions {
  /// Concurrent objective evaluations; 0 reads LENOPT_THREADS (default 1).
  int threads = 0;
  /// Configurations proposed per round. Fixed independently of `threads`, so
  /// results do not depend on the degree of parallelism.
  int batch_size = 4;
  /// Uniform samples before the evolutionary or Bayesian strategy takes over.
  int initial_samples = 10;
  EvolveOptions evolve;
  BayesOptions bayes;
};

struct SearchResult {
  ParetoArchive archive;
  std::vector<TrialRecord> trials;  // evaluation order
};

/// Exactly `budget` objective evaluations. Throws ParameterError when budget < 1.
SearchResult run_search(Strategy strategy, int budget, const Objective& objective,
                        const SearchSpace& space, std::uint64_t seed,
                        const SearchOptions& options = {});

/// LENOPT_THREADS when set to a positive integer, else 1.
int threads_from_env();

}  // namespace lenopt::hpo
