#pragma once

#include <cstdint>
#include <vector>

#include "lenopt/pareto.hpp"
#include "lenopt/search_space.hpp"

namespace lenopt::hpo {

struct EvolveOptions {
  /// Chance that a coordinate is shifted after crossover.
  double mutation_prob = 0.5;
  /// Largest shift; 0 picks a third of the range (at least 1).
  int max_step = 0;
};

/// Two parents drawn from `parents`, per-coordinate crossover, ±step mutation,
/// then a descending sort so the child is monotone again. Throws ContractError
/// when `parents` is empty.
LengthConfig evolve(const std::vector<TrialRecord>& parents, const SearchSpace& space,
                    std::uint64_t seed, const EvolveOptions& options = {});

/// Two binary tournaments over `front` preferring larger crowding distance,
/// so sparse and extreme regions of the front breed more often.
std::vector<TrialRecord> tournament_parents(const std::vector<TrialRecord>& front, std::uint64_t seed);

struct BayesOptions {
  int pool_size = 512;
  int mc_samples = 64;
  double noise = 1e-6;
};

/// Candidate configurations scored by bayesian_suggest: half uniform samples,
/// half children of the non-dominated part of `history` (all uniform when
/// history is empty). Every candidate is valid.
std::vector<LengthConfig> candidate_pool(const std::vector<TrialRecord>& history,
                                         const SearchSpace& space, std::uint64_t seed,
                                         int pool_size);

/// Next configuration to evaluate. One GP per objective over normalized
/// configurations; a random-weight Chebyshev scalarization of the two
/// normalized objectives; Monte Carlo expected improvement over the candidate
/// pool. Falls back to sample_uniform on an empty history.
LengthConfig bayesian_suggest(const std::vector<TrialRecord>& history, const SearchSpace& space,
                              std::uint64_t seed, const BayesOptions& options = {});

}  // namespace lenopt::hpo
