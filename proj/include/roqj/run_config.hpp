#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace roqj {

enum class EngineKind { mcwf, roqj_p, roqj_general };

std::string to_string(EngineKind engine);
EngineKind parse_engine(std::string_view name);

/// Parameters of one simulation. Defaults for dt and n_traj follow the
/// eternal non-Markovian qubit experiment.
struct RunConfig {
  double dt = 0.002;
  double t_max = 3.0;
  std::uint64_t n_traj = 10000;
  std::uint64_t seed = 1;
  EngineKind engine = EngineKind::roqj_p;
  /// Output times; each must be a multiple of dt in [0, t_max]. Empty means
  /// {0, t_max}.
  std::vector<double> sample_times;
  std::vector<std::string> observables;

  unsigned threads = 1;
  /// Independent repeats of the whole ensemble for the general engine; the
  /// spread of their means gives the error bars.
  std::size_t batches = 10;
  /// Overlap deficit accepted when identifying a state with a class.
  double match_tolerance = 1e-8;
  /// Warn when leaked reverse-jump weight exceeds this fraction of the total.
  double leak_budget = 0.01;
  /// Number of trajectories (tagged members for the general engine) whose
  /// state path and jump record are kept.
  std::size_t record_trajectories = 0;

  void validate() const;
  std::size_t steps() const;
  std::vector<std::size_t> sample_steps() const;
};

}  // namespace roqj
