#include "lenopt/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lenopt/errors.hpp"

namespace lenopt::hpo {

bool dominates(const TrialRecord& a, const TrialRecord& b) {
  return a.f1 >= b.f1 && a.cost <= b.cost && (a.f1 > b.f1 || a.cost < b.cost);
}

bool ParetoArchive::update(const TrialRecord& point) {
  for (const auto& p : points_)
    if (dominates(p, point)) return false;
  std::erase_if(points_, [&](const TrialRecord& p) { return dominates(point, p); });
  points_.push_back(point);
  return true;
}

std::vector<TrialRecord> ParetoArchive::sorted_by_cost() const {
  std::vector<TrialRecord> out = points_;
  std::sort(out.begin(), out.end(), [](const TrialRecord& a, const TrialRecord& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.trial_index < b.trial_index;
  });
  return out;
}

std::vector<TrialRecord> non_dominated(const std::vector<TrialRecord>& records) {
  std::vector<TrialRecord> out;
  for (const auto& r : records) {
    const bool beaten = std::any_of(records.begin(), records.end(),
                                    [&](const TrialRecord& o) { return dominates(o, r); });
    if (!beaten) out.push_back(r);
  }
  return out;
}

std::vector<double> crowding_distance(const std::vector<TrialRecord>& points) {
  const std::size_t n = points.size();
  std::vector<double> out(n, std::numeric_limits<double>::infinity());
  if (n < 3) return out;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a].cost < points[b].cost || (points[a].cost == points[b].cost && points[a].f1 < points[b].f1);
  });
  const double cost_span = points[order.back()].cost - points[order.front()].cost;
  double f1_lo = points[0].f1, f1_hi = points[0].f1;
  for (const auto& p : points) {
    f1_lo = std::min(f1_lo, p.f1);
    f1_hi = std::max(f1_hi, p.f1);
  }
  const double f1_span = f1_hi - f1_lo;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const auto& prev = points[order[k - 1]];
    const auto& next = points[order[k + 1]];
    double d = 0.0;
    if (cost_span > 0) d += (next.cost - prev.cost) / cost_span;
    if (f1_span > 0) d += std::abs(next.f1 - prev.f1) / f1_span;
    out[order[k]] = d;
  }
  return out;
}

double hypervolume(const std::vector<TrialRecord>& points, double f1_ref, double cost_ref) {
  std::vector<const TrialRecord*> order;
  for (const auto& p : points) {
    if (p.f1 < f1_ref || p.cost > cost_ref)
      throw ContractError("point (f1 " + std::to_string(p.f1) + ", cost " + std::to_string(p.cost) +
                          ") does not dominate the reference (" + std::to_string(f1_ref) + ", " +
                          std::to_string(cost_ref) + ")");
    order.push_back(&p);
  }
  std::sort(order.begin(), order.end(),
            [](const TrialRecord* a, const TrialRecord* b) { return a->cost < b->cost; });
  double area = 0.0;
  double best = f1_ref;
  for (std::size_t i = 0; i < order.size(); ++i) {
    best = std::max(best, order[i]->f1);
    const double next = i + 1 < order.size() ? order[i + 1]->cost : cost_ref;
    area += (next - order[i]->cost) * (best - f1_ref);
  }
  return area;
}

}  // namespace lenopt::hpo
