#pragma once

#include <optional>
#include <string>
#include <vector>

namespace lenopt::cli {

/// F1 in points (0..100) against FLOPs speedup over the full configuration.
struct CurvePoint {
  double speedup = 0.0;
  double f1 = 0.0;
};

struct Curve {
  std::string name;
  std::vector<CurvePoint> points;
};

struct CurveSummary {
  std::string name;
  double max_f1 = 0.0;
  double full_f1 = 0.0;
  /// Largest speedup among points with f1 >= full_f1 - 1; empty when none qualify.
  std::optional<double> best_speedup;
};

/// Largest speedup whose F1 stays within `tolerance` points of `full_f1`.
std::optional<double> best_speedup_within(const std::vector<CurvePoint>& points, double full_f1,
                                          double tolerance = 1.0);

/// Full-model F1 is `full_f1` when given, otherwise the curve's maximum F1.
/// Throws ParameterError on an empty curve.
CurveSummary summarize_curve(const Curve& curve, std::optional<double> full_f1 = std::nullopt);

/// | model | max F1 | best speedup within 1 point |
std::string markdown_table(const std::vector<CurveSummary>& summaries);

/// Pareto chart: x = speedup, y = F1, one polyline per curve, dashed lines at
/// `full_f1` and `full_f1 - 1`, and a legend. Output depends only on the input.
std::string render_svg(const std::vector<Curve>& curves, double full_f1);

/// Colour of the i-th curve.
std::string curve_colour(std::size_t index);

}  // namespace lenopt::cli
