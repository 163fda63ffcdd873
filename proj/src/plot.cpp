#include "lenopt/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lenopt/errors.hpp"

namespace lenopt::cli {

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Rounds the axis span out to a step from the 1-2-5 ladder.
double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::string curve_colour(std::size_t index) {
  static constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                       "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return kPalette[index % kPalette.size()];
}

std::optional<double> best_speedup_within(const std::vector<CurvePoint>& points, double full_f1,
                                          double tolerance) {
  std::optional<double> best;
  for (const auto& p : points)
    if (p.f1 >= full_f1 - tolerance && (!best || p.speedup > *best)) best = p.speedup;
  return best;
}

CurveSummary summarize_curve(const Curve& curve, std::optional<double> full_f1) {
  if (curve.points.empty()) throw ParameterError("curve '" + curve.name + "' has no points");
  CurveSummary s;
  s.name = curve.name;
  s.max_f1 = curve.points.front().f1;
  for (const auto& p : curve.points) s.max_f1 = std::max(s.max_f1, p.f1);
  s.full_f1 = full_f1.value_or(s.max_f1);
  s.best_speedup = best_speedup_within(curve.points, s.full_f1);
  return s;
}

std::string markdown_table(const std::vector<CurveSummary>& summaries) {
  std::ostringstream out;
  out << "| model | max F1 | full F1 | best speedup within 1 point |\n";
  out << "|---|---|---|---|\n";
  for (const auto& s : summaries)
    out << "| " << s.name << " | " << fixed(s.max_f1) << " | " << fixed(s.full_f1) << " | "
        << (s.best_speedup ? fixed(*s.best_speedup) + "x" : std::string("n/a")) << " |\n";
  return out.str();
}

std::string render_svg(const std::vector<Curve>& curves, double full_f1) {
  constexpr double kWidth = 640, kHeight = 420;
  constexpr double kLeft = 64, kRight = 170, kTop = 24, kBottom = 48;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;

  double x_lo = 1.0, x_hi = 1.0, y_lo = full_f1 - 1.0, y_hi = full_f1;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      x_lo = std::min(x_lo, p.speedup);
      x_hi = std::max(x_hi, p.speedup);
      y_lo = std::min(y_lo, p.f1);
      y_hi = std::max(y_hi, p.f1);
    }
  const double x_step = nice_step(std::max(x_hi - x_lo, 0.5));
  const double y_step = nice_step(std::max(y_hi - y_lo, 2.0));
  x_lo = std::floor(x_lo / x_step) * x_step;
  x_hi = std::ceil(x_hi / x_step) * x_step;
  y_lo = std::floor(y_lo / y_step) * y_step;
  y_hi = std::ceil(y_hi / y_step) * y_step;
  if (x_hi <= x_lo) x_hi = x_lo + x_step;
  if (y_hi <= y_lo) y_hi = y_lo + y_step;
  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto sy = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  svg << "<g stroke=\"#dddddd\">\n";
  for (double x = x_lo; x <= x_hi + 1e-9; x += x_step)
    svg << "<line x1=\"" << fixed(sx(x)) << "\" y1=\"" << fixed(kTop) << "\" x2=\"" << fixed(sx(x))
        << "\" y2=\"" << fixed(kTop + plot_h) << "\"/>\n";
  for (double y = y_lo; y <= y_hi + 1e-9; y += y_step)
    svg << "<line x1=\"" << fixed(kLeft) << "\" y1=\"" << fixed(sy(y)) << "\" x2=\"" << fixed(kLeft + plot_w)
        << "\" y2=\"" << fixed(sy(y)) << "\"/>\n";
  svg << "</g>\n";

  svg << "<g text-anchor=\"middle\">\n";
  for (double x = x_lo; x <= x_hi + 1e-9; x += x_step)
    svg << "<text x=\"" << fixed(sx(x)) << "\" y=\"" << fixed(kTop + plot_h + 16) << "\">" << fixed(x, 1)
        << "</text>\n";
  svg << "<text x=\"" << fixed(kLeft + plot_w / 2) << "\" y=\"" << fixed(kHeight - 10)
      << "\">speedup (FLOPs)</text>\n";
  svg << "</g>\n<g text-anchor=\"end\">\n";
  for (double y = y_lo; y <= y_hi + 1e-9; y += y_step)
    svg << "<text x=\"" << fixed(kLeft - 6) << "\" y=\"" << fixed(sy(y) + 4) << "\">" << fixed(y, 1)
        << "</text>\n";
  svg << "</g>\n";
  svg << "<text x=\"16\" y=\"" << fixed(kTop + plot_h / 2) << "\" transform=\"rotate(-90 16 "
      << fixed(kTop + plot_h / 2) << ")\" text-anchor=\"middle\">F1</text>\n";
  svg << "<rect x=\"" << fixed(kLeft) << "\" y=\"" << fixed(kTop) << "\" width=\"" << fixed(plot_w)
      << "\" height=\"" << fixed(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";

  const std::array<std::pair<double, std::string>, 2> refs{
      std::pair{full_f1, "full " + fixed(full_f1)}, std::pair{full_f1 - 1.0, "-1 point " + fixed(full_f1 - 1.0)}};
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto& [y, label] = refs[r];
    svg << "<line class=\"reference\" x1=\"" << fixed(kLeft) << "\" y1=\"" << fixed(sy(y)) << "\" x2=\""
        << fixed(kLeft + plot_w) << "\" y2=\"" << fixed(sy(y))
        << "\" stroke=\"#555555\" stroke-dasharray=\"5,4\"/>\n";
    // Full-model label above its line, the 1-point label below, so they never collide.
    svg << "<text x=\"" << fixed(kLeft + plot_w - 4) << "\" y=\"" << fixed(r == 0 ? sy(y) - 4 : sy(y) + 12)
        << "\" text-anchor=\"end\" fill=\"#555555\">" << label << "</text>\n";
  }

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const std::string colour = curve_colour(i);
    auto pts = curves[i].points;
    std::stable_sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) {
      return a.speedup < b.speedup || (a.speedup == b.speedup && a.f1 > b.f1);
    });
    svg << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k)
      svg << (k ? " " : "") << fixed(sx(pts[k].speedup)) << ',' << fixed(sy(pts[k].f1));
    svg << "\"/>\n";
    for (const auto& p : pts)
      svg << "<circle class=\"marker\" cx=\"" << fixed(sx(p.speedup)) << "\" cy=\"" << fixed(sy(p.f1))
          << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
  }

  const double lx = kLeft + plot_w + 16;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const double ly = kTop + 12 + 18.0 * static_cast<double>(i);
    svg << "<g class=\"legend\"><line x1=\"" << fixed(lx) << "\" y1=\"" << fixed(ly) << "\" x2=\""
        << fixed(lx + 20) << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << curve_colour(i)
        << "\" stroke-width=\"2\"/><text x=\"" << fixed(lx + 26) << "\" y=\"" << fixed(ly + 4) << "\">"
        << escape(curves[i].name) << "</text></g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace lenopt::cli
