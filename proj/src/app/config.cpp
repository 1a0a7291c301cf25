#include "roqj/app/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "roqj/errors.hpp"

namespace roqj::app {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string strip_comment(const std::string& line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '#' || line[i] == ';') {
      if (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t') return line.substr(0, i);
    }
  }
  return line;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_double(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ValidationError("config key '" + key + "': '" + text + "' is not a number");
  }
  return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ValidationError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (cfg.entries_.count(key)) {
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::string& path) { return parse(read_file(path), path); }

Config Config::from_csv_echo(const std::string& csv_text) {
  static const std::string prefix = "# config: ";
  std::string body;
  std::istringstream in(csv_text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) body += line.substr(prefix.size()) + "\n";
  }
  if (body.empty()) throw ValidationError("CSV file carries no configuration echo");
  return parse(body, "<csv echo>");
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string Config::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ValidationError("missing required config key '" + key + "'");
  used_.insert(key);
  return it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

double Config::get_double(const std::string& key) const { return parse_double(get(key), key); }

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string t = trim(get(key));
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ValidationError("config key '" + key + "': '" + t + "' is not a non-negative integer");
  }
  return value;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split(get(key), ',')) out.push_back(parse_double(item, key));
  return out;
}

std::vector<std::string> Config::get_list(const std::string& key) const { return split(get(key), ','); }

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : entries_) {
    if (!used_.count(key)) out.push_back(key);
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [key, value] : entries_) out += key + " = " + value + "\n";
  return out;
}

namespace {

Eigen::MatrixXd parse_matrix_text(const std::string& text, const std::string& key, int n) {
  std::vector<double> values;
  std::string cleaned = text;
  for (char& ch : cleaned) {
    if (ch == ';' || ch == ',' || ch == '\n' || ch == '\t' || ch == '\r') ch = ' ';
  }
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) values.push_back(parse_double(tok, key));
  if (values.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
    throw ValidationError("config key '" + key + "': expected " + std::to_string(n * n) + " numbers, got " +
                          std::to_string(values.size()));
  }
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = values[static_cast<std::size_t>(i * n + j)];
  return m;
}

RateFn parse_rate(const std::string& spec, const std::string& key) {
  if (spec == "oscillating") return oscillating_network_rate;
  if (spec.rfind("constant:", 0) == 0) {
    const double c = parse_double(spec.substr(9), key);
    return [c](double) { return c; };
  }
  throw ValidationError("config key '" + key + "': unknown rate '" + spec + "' (expected oscillating or constant:<value>)");
}

InitialState parse_initial(const std::string& spec, int n) {
  const std::string key = "initial.state";
  if (spec == "plus" || spec == "minus") {
    if (n != 2) throw ValidationError("config key '" + key + "': '" + spec + "' needs a qubit model");
    Vector v(2);
    v << 1.0, (spec == "plus" ? 1.0 : -1.0);
    return Vector(v / std::sqrt(2.0));
  }
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string body = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "basis") {
    const double k = parse_double(body, key);
    if (k != std::floor(k) || k < 0 || k >= n) throw ValidationError("config key '" + key + "': basis index out of range");
    return basis_state(n, static_cast<int>(k));
  }
  if (kind == "amplitudes") {
    const auto items = split(body, ',');
    if (items.size() != static_cast<std::size_t>(2 * n)) {
      throw ValidationError("config key '" + key + "': amplitudes need " + std::to_string(2 * n) + " numbers (re, im pairs)");
    }
    Vector v(n);
    for (int i = 0; i < n; ++i) {
      v(i) = Complex(parse_double(items[static_cast<std::size_t>(2 * i)], key),
                     parse_double(items[static_cast<std::size_t>(2 * i + 1)], key));
    }
    if (v.norm() == 0.0) throw ValidationError("config key '" + key + "': zero vector");
    return Vector(v / v.norm());
  }
  if (kind == "diag") {
    const auto items = split(body, ',');
    if (items.size() != static_cast<std::size_t>(n)) {
      throw ValidationError("config key '" + key + "': diag needs " + std::to_string(n) + " weights");
    }
    Matrix rho = Matrix::Zero(n, n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = parse_double(items[static_cast<std::size_t>(i)], key);
      if (p < 0.0) throw ValidationError("config key '" + key + "': negative weight");
      rho(i, i) = p;
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("config key '" + key + "': weights must sum to 1");
    return rho;
  }
  throw ValidationError("config key '" + key + "': unknown initial state '" + spec + "'");
}

}  // namespace

Experiment build_experiment(Config config, const Overrides& overrides) {
  if (overrides.seed) config.set("run.seed", std::to_string(*overrides.seed));
  if (overrides.engine) config.set("run.engine", *overrides.engine);
  if (overrides.dt) config.set("run.dt", format_double(*overrides.dt));
  if (overrides.n_traj) config.set("run.n_traj", std::to_string(*overrides.n_traj));

  Experiment ex;
  ex.model_kind = config.get("model.name");
  if (ex.model_kind == "pauli") {
    const auto x = config.get_doubles("model.pauli.x");
    if (x.size() != 3) throw ValidationError("config key 'model.pauli.x': expected three weights");
    PauliWeights w{x[0], x[1], x[2]};
    try {
      validate_pauli_weights(w);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("config key 'model.pauli.x': ") + e.what());
    }
    ex.pauli_weights = w;
    ex.model = build_pauli_model(w);
  } else if (ex.model_kind == "network") {
    const auto n = static_cast<int>(config.get_uint("model.network.n", 7));
    if (n < 1) throw ValidationError("config key 'model.network.n': must be positive");
    Eigen::MatrixXd omega;
    if (config.has("model.network.omega")) {
      omega = parse_matrix_text(config.get("model.network.omega"), "model.network.omega", n);
    } else if (config.has("model.network.omega_file")) {
      const std::string path = config.get("model.network.omega_file");
      std::ifstream in(path);
      if (!in) throw ValidationError("config key 'model.network.omega_file': cannot open '" + path + "'");
      std::ostringstream ss;
      ss << in.rdbuf();
      omega = parse_matrix_text(ss.str(), "model.network.omega_file", n);
    } else {
      const double max_coupling = config.get_double("model.network.omega_max", 0.6);
      if (!(max_coupling >= 0.0)) throw ValidationError("config key 'model.network.omega_max': must be non-negative");
      omega = sample_network_couplings(n, max_coupling, config.get_uint("model.network.omega_seed", 1));
    }
    try {
      ex.model = build_network_model(n, omega, parse_rate(config.get("model.network.rate", "oscillating"), "model.network.rate"));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("config key 'model.network.omega': ") + e.what());
    }
  } else if (ex.model_kind == "amplitude_damping") {
    const double gamma = config.get_double("model.amplitude_damping.gamma");
    if (!(gamma >= 0.0)) throw ValidationError("config key 'model.amplitude_damping.gamma': must be non-negative");
    ex.model = build_amplitude_damping(gamma);
  } else if (ex.model_kind == "dephasing") {
    ex.model = build_dephasing(parse_rate(config.get("model.dephasing.rate"), "model.dephasing.rate"));
  } else {
    throw ValidationError("config key 'model.name': unknown model '" + ex.model_kind +
                          "' (expected pauli, network, amplitude_damping or dephasing)");
  }
  const int n = ex.model.n;

  ex.initial = parse_initial(config.get("initial.state"), n);
  if (const auto* psi = std::get_if<Vector>(&ex.initial)) {
    ex.initial_density = projector(*psi);
  } else {
    ex.initial_density = std::get<Matrix>(ex.initial);
  }

  RunConfig& run = ex.run;
  run.engine = parse_engine(config.get("run.engine", "roqj_p"));
  run.dt = config.get_double("run.dt");
  run.t_max = config.get_double("run.t_max");
  run.n_traj = config.get_uint("run.n_traj", 1000);
  run.seed = config.get_uint("run.seed", 1);
  run.batches = config.get_uint("run.batches", 10);
  run.match_tolerance = config.get_double("run.match_tolerance", 1e-8);
  run.leak_budget = config.get_double("run.leak_budget", 0.01);
  run.record_trajectories = config.get_uint("run.record_trajectories", 0);
  if (config.has("run.sample_times")) {
    run.sample_times = config.get_doubles("run.sample_times");
  } else {
    const double every = config.get_double("run.output_every", run.t_max);
    if (!(every > 0.0)) throw ValidationError("config key 'run.output_every': must be positive");
    const auto count = static_cast<std::size_t>(std::llround(run.t_max / every));
    if (std::abs(static_cast<double>(count) * every - run.t_max) > 1e-9 * run.t_max) {
      throw ValidationError("config key 'run.output_every': must divide run.t_max");
    }
    for (std::size_t i = 0; i <= count; ++i) run.sample_times.push_back(static_cast<double>(i) * every);
  }
  if (config.has("output.observables")) run.observables = config.get_list("output.observables");
  for (const auto& name : run.observables) {
    try {
      Observable::parse(name).check_dimension(n);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("config key 'output.observables': ") + e.what());
    }
  }
  try {
    run.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config key 'run': ") + e.what());
  }

  ex.name = config.get("output.name", ex.model_kind);
  ex.exact_dt = config.get_double("exact.dt", run.dt / 10.0);
  if (!(ex.exact_dt > 0.0)) throw ValidationError("config key 'exact.dt': must be positive");
  ex.exact_method = config.get("exact.method", "rk4");
  if (ex.exact_method != "rk4" && ex.exact_method != "pauli_analytic") {
    throw ValidationError("config key 'exact.method': expected rk4 or pauli_analytic");
  }
  if (ex.exact_method == "pauli_analytic" && !ex.pauli_weights) {
    throw ValidationError("config key 'exact.method': pauli_analytic needs model.name = pauli");
  }

  ex.thresholds.z_max = config.get_double("compare.z_max", 3.0);
  ex.thresholds.abs_floor = config.get_double("compare.abs_floor", 0.0);
  ex.thresholds.max_trace_distance =
      config.get_double("compare.max_trace_distance", std::numeric_limits<double>::infinity());

  const double probe_min = config.get_double("probe.t_min", 0.0);
  const double probe_max = config.get_double("probe.t_max", run.t_max);
  const std::uint64_t points = config.get_uint("probe.points", 21);
  if (points < 1) throw ValidationError("config key 'probe.points': must be positive");
  for (std::uint64_t i = 0; i < points; ++i) {
    ex.probe.times.push_back(points == 1 ? probe_min
                                         : probe_min + (probe_max - probe_min) * static_cast<double>(i) /
                                                           static_cast<double>(points - 1));
  }
  ex.probe.n_states = config.get_uint("probe.n_states", 100);

  const auto unused = config.unused_keys();
  if (!unused.empty()) throw ValidationError("unknown or unused config key '" + unused.front() + "'");
  ex.config = std::move(config);
  return ex;
}

Experiment load_experiment(const std::string& path, const Overrides& overrides) {
  const bool is_csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  if (is_csv) return build_experiment(Config::from_csv_echo(read_file(path)), overrides);
  return build_experiment(Config::load(path), overrides);
}

}  // namespace roqj::app
