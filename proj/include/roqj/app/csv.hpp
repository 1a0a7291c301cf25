#pragma once

#include <optional>
#include <string>
#include <vector>

#include "roqj/analysis.hpp"
#include "roqj/app/config.hpp"
#include "roqj/oracle.hpp"

namespace roqj::app {

/// Time series file: `#` header lines (tool, kind, model, engine, seed and the
/// effective configuration as `# config: key = value`), one column row, then
/// t, re_rho_i_j, im_rho_i_j over the upper triangle in row-major order,
/// obs_<name>, stderr_<name>. Numbers use 17 significant digits.
struct CsvTable {
  std::vector<std::string> comments;  // header lines without the leading "# "
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::optional<std::size_t> find_column(const std::string& name) const;
  std::size_t column(const std::string& name) const;
  /// Value of a `key: value` header line, if present.
  std::optional<std::string> header(const std::string& key) const;
  int dimension() const;
  Matrix density(std::size_t row) const;
  /// Names from the obs_<name> columns, in file order.
  std::vector<std::string> observables() const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

std::string simulation_csv(const Experiment& ex, const SimulationResult& result);
std::string exact_csv(const Experiment& ex, const DensitySeries& series);
/// Recorded trajectories: traj, t, re_psi_i, im_psi_i, obs_<name>.
std::string record_csv(const Experiment& ex, const SimulationResult& result);
/// Jump events of the recorded trajectories.
std::string events_csv(const SimulationResult& result);

void write_file(const std::string& path, const std::string& contents);

}  // namespace roqj::app
