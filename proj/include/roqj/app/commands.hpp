#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "roqj/app/config.hpp"
#include "roqj/app/csv.hpp"

namespace roqj::app {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInvalid = 2, kExitCompareFailed = 3 };

struct CommandOptions {
  std::string config_path;
  Overrides overrides;
  unsigned threads = 1;
  std::string out_dir = ".";
};

struct CompareOptions {
  std::string simulation_path;
  std::string reference_path;
  std::optional<double> z_max;
  std::optional<double> abs_floor;
  std::optional<double> max_trace_distance;
  std::string report_path;  // optional per-time CSV report
};

struct CompareRow {
  double t = 0.0;
  double trace_distance = 0.0;
  std::vector<double> delta;  // simulation minus reference, per observable
  std::vector<double> z;      // |delta| / combined stderr
};

struct CompareReport {
  std::vector<std::string> observables;
  std::vector<CompareRow> rows;
  double max_trace_distance = 0.0;
  double max_abs_delta = 0.0;
  double max_z = 0.0;
  std::vector<std::string> failures;
  bool passed() const { return failures.empty(); }
};

/// Row-by-row comparison on a shared time grid. An observable passes when
/// |delta| <= max(z_max * stderr, abs_floor), stderr combining both files in
/// quadrature. Throws ValidationError for misaligned grids or dimensions.
CompareReport compare_tables(const CsvTable& simulation, const CsvTable& reference, const CompareThresholds& th);
std::string compare_report_csv(const CompareReport& report);

/// Reference states at the experiment's sample times.
DensitySeries exact_series(const Experiment& ex);

int run_command(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int exact_command(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int probe_command(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int compare_command(const CompareOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace roqj::app
