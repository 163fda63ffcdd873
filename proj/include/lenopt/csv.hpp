#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lenopt/pareto.hpp"

namespace lenopt::hpo {

/// One row of a trial log or Pareto export.
struct CurveRow {
  TrialRecord trial;
  double speedup = 0.0;
};

/// Columns: trial_index,strategy,x0..x(n−1),f1,cost_flops,wall_ms,speedup
/// with speedup = reference_cost / cost_flops.
void write_trials_csv(const std::filesystem::path& path, const std::vector<TrialRecord>& trials,
                      int num_vars, double reference_cost);

/// Reads the format written by write_trials_csv. Throws IoError on missing
/// files and ParseError on malformed content; an empty result is returned for
/// a header-only file.
std::vector<CurveRow> read_trials_csv(const std::filesystem::path& path);

}  // namespace lenopt::hpo
