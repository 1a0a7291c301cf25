#include "roqj/app/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "roqj/errors.hpp"

namespace roqj::app {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(line);
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  std::string t = cell;
  while (!t.empty() && (t.back() == '\r' || t.back() == ' ')) t.pop_back();
  // from_chars rejects a leading '+', and operator<< never writes one.
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    // inf and nan are spelled the same way by operator<< and from_chars.
    throw ValidationError("CSV line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
  }
  return value;
}

std::string density_header(int n) {
  std::string out = "t";
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const std::string idx = std::to_string(i) + "_" + std::to_string(j);
      out += ",re_rho_" + idx + ",im_rho_" + idx;
    }
  }
  return out;
}

void append_density(std::string& line, const Matrix& rho) {
  for (int i = 0; i < rho.rows(); ++i) {
    for (int j = i; j < rho.cols(); ++j) {
      line += "," + format_double(rho(i, j).real()) + "," + format_double(rho(i, j).imag());
    }
  }
}

std::string preamble(const Experiment& ex, const std::string& kind) {
  std::string out = "# roqj " + kind + "\n";
  out += "# model: " + ex.model.name + "\n";
  if (kind == "simulation") {
    out += "# engine: " + to_string(ex.run.engine) + "\n";
    out += "# seed: " + std::to_string(ex.run.seed) + "\n";
  } else {
    out += "# method: " + ex.exact_method + "\n";
  }
  std::istringstream cfg(ex.config.canonical());
  std::string line;
  while (std::getline(cfg, line)) out += "# config: " + line + "\n";
  return out;
}

std::vector<std::string> observable_names(const Experiment& ex) {
  if (!ex.run.observables.empty()) return ex.run.observables;
  std::vector<std::string> names;
  for (int i = 0; i < ex.model.n; ++i) names.push_back(Observable{Observable::Kind::population, i, i}.name());
  return names;
}

}  // namespace

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return c;
  }
  return std::nullopt;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto c = find_column(name);
  if (!c) throw ValidationError("CSV has no column '" + name + "'");
  return *c;
}

std::optional<std::string> CsvTable::header(const std::string& key) const {
  const std::string prefix = key + ": ";
  for (const auto& line : comments) {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return std::nullopt;
}

int CsvTable::dimension() const {
  int n = 0;
  while (find_column("re_rho_" + std::to_string(n) + "_" + std::to_string(n))) ++n;
  if (n == 0) throw ValidationError("CSV has no density-matrix columns");
  return n;
}

Matrix CsvTable::density(std::size_t row) const {
  const int n = dimension();
  const auto& r = rows.at(row);
  Matrix rho(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const std::string idx = std::to_string(i) + "_" + std::to_string(j);
      const Complex v(r[column("re_rho_" + idx)], r[column("im_rho_" + idx)]);
      rho(i, j) = v;
      rho(j, i) = std::conj(v);
    }
  }
  return rho;
}

std::vector<std::string> CsvTable::observables() const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (c.rfind("obs_", 0) == 0) out.push_back(c.substr(4));
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      table.comments.push_back(line.size() > 2 ? line.substr(2) : std::string());
      continue;
    }
    if (table.columns.empty()) {
      table.columns = split_commas(line);
      continue;
    }
    const auto cells = split_commas(line);
    if (cells.size() != table.columns.size()) {
      throw ValidationError("CSV line " + std::to_string(line_no) + ": expected " +
                            std::to_string(table.columns.size()) + " cells, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) row.push_back(parse_cell(cell, line_no));
    table.rows.push_back(std::move(row));
  }
  if (table.columns.empty()) throw ValidationError("CSV has no column header");
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string simulation_csv(const Experiment& ex, const SimulationResult& result) {
  std::string out = preamble(ex, "simulation");
  out += density_header(ex.model.n);
  for (const auto& name : result.observable_names) out += ",obs_" + name + ",stderr_" + name;
  out += "\n";
  for (std::size_t k = 0; k < result.times.size(); ++k) {
    std::string line = format_double(result.times[k]);
    append_density(line, result.averaged_states[k]);
    for (std::size_t o = 0; o < result.observable_names.size(); ++o) {
      line += "," + format_double(result.observable_means[k][o]) + "," + format_double(result.observable_stderr[k][o]);
    }
    out += line + "\n";
  }
  return out;
}

std::string exact_csv(const Experiment& ex, const DensitySeries& series) {
  std::vector<Observable> observables;
  for (const auto& name : observable_names(ex)) observables.push_back(Observable::parse(name));

  std::string out = preamble(ex, "exact");
  out += density_header(ex.model.n);
  for (const auto& o : observables) out += ",obs_" + o.name() + ",stderr_" + o.name();
  out += "\n";
  for (std::size_t k = 0; k < series.times.size(); ++k) {
    std::string line = format_double(series.times[k]);
    append_density(line, series.states[k]);
    for (const auto& o : observables) line += "," + format_double(o.value(series.states[k])) + ",0";
    out += line + "\n";
  }
  return out;
}

std::string record_csv(const Experiment& ex, const SimulationResult& result) {
  std::vector<Observable> observables;
  for (const auto& name : result.observable_names) observables.push_back(Observable::parse(name));

  std::string out = preamble(ex, "simulation");
  out += "traj,t";
  for (int i = 0; i < ex.model.n; ++i) out += ",re_psi_" + std::to_string(i) + ",im_psi_" + std::to_string(i);
  for (const auto& o : observables) out += ",obs_" + o.name();
  out += "\n";
  for (std::size_t r = 0; r < result.realizations.size(); ++r) {
    for (std::size_t k = 0; k < result.realizations[r].size(); ++k) {
      const Vector& psi = result.realizations[r][k];
      std::string line = std::to_string(r) + "," + format_double(result.times[k]);
      for (int i = 0; i < psi.size(); ++i) line += "," + format_double(psi(i).real()) + "," + format_double(psi(i).imag());
      for (const auto& o : observables) line += "," + format_double(o.value(psi));
      out += line + "\n";
    }
  }
  return out;
}

std::string events_csv(const SimulationResult& result) {
  std::string out = "traj,t,kind,channel,source_class,target_class\n";
  for (std::size_t r = 0; r < result.records.size(); ++r) {
    for (const auto& e : result.records[r].events) {
      out += std::to_string(r) + "," + format_double(e.t) + "," + (e.kind == JumpKind::forward ? "forward" : "reverse") +
             "," + std::to_string(e.channel) + "," + std::to_string(e.source_class) + "," +
             std::to_string(e.target_class) + "\n";
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

}  // namespace roqj::app
