#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "roqj/engines.hpp"
#include "roqj/model.hpp"
#include "roqj/run_config.hpp"

namespace roqj::app {

/// Flat `key = value` configuration. `[section]` headers prefix the keys that
/// follow with `section.`; `#` and `;` start comments. Keys are unique.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::string& path);
  /// Rebuilds a configuration from the `# config:` echo lines of a CSV file.
  static Config from_csv_echo(const std::string& csv_text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get(const std::string& key) const;  // required
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Keys never read through a getter.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Canonical text: one `key = value` per line, sorted by key.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

struct CompareThresholds {
  double z_max = 3.0;
  double abs_floor = 0.0;
  double max_trace_distance = std::numeric_limits<double>::infinity();
};

struct ProbeSettings {
  std::vector<double> times;
  std::size_t n_states = 100;
};

/// Fully resolved experiment description.
struct Experiment {
  std::string name;
  std::string model_kind;
  MasterEquationModel model;
  std::optional<PauliWeights> pauli_weights;
  InitialState initial;
  Matrix initial_density;
  RunConfig run;
  double exact_dt = 0.0;
  std::string exact_method;  // rk4 or pauli_analytic
  CompareThresholds thresholds;
  ProbeSettings probe;
  Config config;  // effective configuration, echoed into outputs
};

/// Command-line overrides applied on top of the file before validation.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> engine;
  std::optional<double> dt;
  std::optional<std::uint64_t> n_traj;
};

/// Builds and validates an experiment; errors name the offending key.
Experiment build_experiment(Config config, const Overrides& overrides = {});

/// Loads a .cfg file, or a CSV produced by this tool (its config echo).
Experiment load_experiment(const std::string& path, const Overrides& overrides = {});

std::string format_double(double v);

}  // namespace roqj::app
