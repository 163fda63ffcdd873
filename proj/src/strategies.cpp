#include "lenopt/strategies.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "lenopt/errors.hpp"
#include "lenopt/gaussian_process.hpp"
#include "lenopt/seed.hpp"

namespace lenopt::hpo {

LengthConfig evolve(const std::vector<TrialRecord>& parents, const SearchSpace& space,
                    std::uint64_t seed, const EvolveOptions& options) {
  if (parents.empty()) throw ContractError("evolve needs at least one parent");
  space.require_feasible();
  const auto n = static_cast<std::size_t>(space.num_vars);
  for (const auto& p : parents)
    if (p.config.size() != n)
      throw ContractError("parent " + p.config.str() + " does not have " + std::to_string(n) + " lengths");

  std::mt19937_64 rng(mix64(seed));
  std::uniform_int_distribution<std::size_t> pick(0, parents.size() - 1);
  const auto& a = parents[pick(rng)].config;
  const auto& b = parents[pick(rng)].config;
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int max_step = options.max_step > 0 ? options.max_step
                                            : std::max(1, (space.upper - space.lower) / 3);
  std::uniform_int_distribution<int> step(1, max_step);

  LengthConfig child;
  child.lengths.resize(n);
  for (std::size_t i = 0; i < n; ++i) child.lengths[i] = coin(rng) ? a[i] : b[i];
  for (std::size_t i = 0; i < n; ++i) {
    if (u(rng) < options.mutation_prob) child.lengths[i] += coin(rng) ? step(rng) : -step(rng);
    child.lengths[i] = std::clamp(child.lengths[i], space.lower, space.upper);
  }
  std::sort(child.lengths.begin(), child.lengths.end(), std::greater<>());
  return child;
}

std::vector<TrialRecord> tournament_parents(const std::vector<TrialRecord>& front, std::uint64_t seed) {
  if (front.empty()) throw ContractError("tournament selection needs a non-empty front");
  const auto crowding = crowding_distance(front);
  std::mt19937_64 rng(mix64(seed));
  std::uniform_int_distribution<std::size_t> pick(0, front.size() - 1);
  std::vector<TrialRecord> winners;
  for (int t = 0; t < 2; ++t) {
    const std::size_t a = pick(rng), b = pick(rng);
    winners.push_back(front[crowding[b] > crowding[a] ? b : a]);
  }
  return winners;
}

std::vector<LengthConfig> candidate_pool(const std::vector<TrialRecord>& history,
                                         const SearchSpace& space, std::uint64_t seed,
                                         int pool_size) {
  std::vector<LengthConfig> pool;
  pool.reserve(static_cast<std::size_t>(std::max(pool_size, 0)));
  const std::vector<TrialRecord> front = non_dominated(history);
  const int local = front.empty() ? 0 : pool_size / 2;
  for (int i = 0; i < pool_size - local; ++i)
    pool.push_back(sample_uniform(space, derive_seed(seed, {0, static_cast<std::uint64_t>(i)})));
  for (int i = 0; i < local; ++i)
    pool.push_back(evolve(front, space, derive_seed(seed, {1, static_cast<std::uint64_t>(i)})));
  return pool;
}

LengthConfig bayesian_suggest(const std::vector<TrialRecord>& history, const SearchSpace& space,
                              std::uint64_t seed, const BayesOptions& options) {
  space.require_feasible();
  if (history.empty()) return sample_uniform(space, seed);
  if (options.pool_size < 1 || options.mc_samples < 1)
    throw ParameterError("pool_size and mc_samples must be positive");

  const auto n = static_cast<Eigen::Index>(history.size());
  const auto d = static_cast<Eigen::Index>(space.num_vars);
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd g1(n), g2(n);  // both minimized
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = history[static_cast<std::size_t>(i)];
    const auto z = normalize(space, rec.config);
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = z[static_cast<std::size_t>(j)];
    g1(i) = -rec.f1;
    g2(i) = rec.cost;
  }
  auto rescale = [](Eigen::VectorXd& v) {
    const double lo = v.minCoeff(), hi = v.maxCoeff();
    v = hi > lo ? Eigen::VectorXd((v.array() - lo) / (hi - lo)) : Eigen::VectorXd::Zero(v.size());
  };
  rescale(g1);
  rescale(g2);

  GaussianProcess gp1, gp2;
  gp1.fit(x, g1, options.noise);
  gp2.fit(x, g2, options.noise);

  std::mt19937_64 rng(derive_seed(seed, {2}));
  const double w = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double lambda1 = w, lambda2 = 1.0 - w;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) best = std::min(best, std::max(lambda1 * g1(i), lambda2 * g2(i)));

  const auto pool = candidate_pool(history, space, derive_seed(seed, {3}), options.pool_size);
  Eigen::MatrixXd cx(static_cast<Eigen::Index>(pool.size()), d);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto z = normalize(space, pool[i]);
    for (Eigen::Index j = 0; j < d; ++j) cx(static_cast<Eigen::Index>(i), j) = z[static_cast<std::size_t>(j)];
  }
  const auto p1 = gp1.predict_all(cx);
  const auto p2 = gp2.predict_all(cx);

  // Common random numbers across candidates keep the comparison smooth.
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::pair<double, double>> z(static_cast<std::size_t>(options.mc_samples));
  for (auto& s : z) s = {normal(rng), normal(rng)};

  std::size_t arg = 0;
  double best_ei = -1.0, best_mean = std::numeric_limits<double>::infinity();
  std::size_t arg_mean = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double s1 = std::sqrt(p1[i].variance), s2 = std::sqrt(p2[i].variance);
    double ei = 0.0;
    for (const auto& [z1, z2] : z) {
      const double s = std::max(lambda1 * (p1[i].mean + s1 * z1), lambda2 * (p2[i].mean + s2 * z2));
      ei += std::max(0.0, best - s);
    }
    ei /= static_cast<double>(z.size());
    if (ei > best_ei) {
      best_ei = ei;
      arg = i;
    }
    const double mean_s = std::max(lambda1 * p1[i].mean, lambda2 * p2[i].mean);
    if (mean_s < best_mean) {
      best_mean = mean_s;
      arg_mean = i;
    }
  }
  return best_ei > 0.0 ? pool[arg] : pool[arg_mean];
}

}  // namespace lenopt::hpo
