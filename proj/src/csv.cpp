#include "lenopt/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "lenopt/errors.hpp"
#include "lenopt/format.hpp"

namespace lenopt::hpo {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, std::size_t offset) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("expected a number, got '" + s + "'", offset);
  return v;
}

int to_int(const std::string& s, std::size_t offset) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("expected an integer, got '" + s + "'", offset);
  return v;
}

}  // namespace

void write_trials_csv(const std::filesystem::path& path, const std::vector<TrialRecord>& trials,
                      int num_vars, double reference_cost) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "trial_index,strategy";
  for (int i = 0; i < num_vars; ++i) out << ",x" << i;
  out << ",f1,cost_flops,wall_ms,speedup\n";
  for (const auto& t : trials) {
    out << t.trial_index << ',' << t.strategy;
    for (int v : t.config.lengths) out << ',' << v;
    out << ',' << format_number(t.f1) << ',' << format_number(t.cost) << ',';
    if (t.wall_ms) out << format_number(*t.wall_ms);
    out << ',' << format_number(reference_cost / t.cost) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<CurveRow> read_trials_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row", 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < 7 || header[0] != "trial_index" || header[1] != "strategy" ||
      header[header.size() - 4] != "f1" || header[header.size() - 3] != "cost_flops" ||
      header[header.size() - 2] != "wall_ms" || header.back() != "speedup")
    throw ParseError(path.string() + ": unexpected header '" + line + "'", 0);
  const std::size_t num_vars = header.size() - 6;
  offset += line.size() + 1;

  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const auto f = split(line);
    if (f.size() != header.size())
      throw ParseError(path.string() + ": row has " + std::to_string(f.size()) + " fields, expected " +
                           std::to_string(header.size()),
                       offset);
    CurveRow row;
    row.trial.trial_index = to_int(f[0], offset);
    row.trial.strategy = f[1];
    for (std::size_t i = 0; i < num_vars; ++i) row.trial.config.lengths.push_back(to_int(f[2 + i], offset));
    row.trial.f1 = to_double(f[2 + num_vars], offset);
    row.trial.cost = to_double(f[3 + num_vars], offset);
    if (!f[4 + num_vars].empty()) row.trial.wall_ms = to_double(f[4 + num_vars], offset);
    row.speedup = to_double(f[5 + num_vars], offset);
    rows.push_back(std::move(row));
    offset += line.size() + 1;
  }
  return rows;
}

}  // namespace lenopt::hpo
