#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lenopt/encoder.hpp"

namespace lenopt::hpo {

struct TrialRecord {
  model::LengthConfig config;
  double f1 = 0.0;
  double cost = 0.0;
  int trial_index = 0;
  std::string strategy;
  std::optional<double> wall_ms;
};

/// a dominates b: no worse in both objectives (higher f1, lower cost) and
/// strictly better in at least one.
bool dominates(const TrialRecord& a, const TrialRecord& b);

/// Non-dominated set under (maximize f1, minimize cost).
class ParetoArchive {
 public:
  /// Inserts `point` unless an archived point dominates it, evicting every
  /// archived point it dominates. Returns whether it was inserted.
  bool update(const TrialRecord& point);

  const std::vector<TrialRecord>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  /// Points ordered by cost ascending, ties by trial index.
  std::vector<TrialRecord> sorted_by_cost() const;

 private:
  std::vector<TrialRecord> points_;
};

/// Returns true when the point was accepted.
inline bool pareto_update(ParetoArchive& archive, const TrialRecord& point) {
  return archive.update(point);
}

/// O(n²) reference filter: every record no other record dominates, in input order.
std::vector<TrialRecord> non_dominated(const std::vector<TrialRecord>& records);

/// Crowding distance of each point along the front, in input order. The
/// cheapest and most accurate points get infinity.
std::vector<double> crowding_distance(const std::vector<TrialRecord>& points);

/// Area dominated by `points` and bounded by the reference (f1_ref, cost_ref),
/// computed by a sweep in cost order. Throws ContractError when a point has
/// f1 < f1_ref or cost > cost_ref.
double hypervolume(const std::vector<TrialRecord>& points, double f1_ref, double cost_ref);

}  // namespace lenopt::hpo
