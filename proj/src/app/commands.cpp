#include "roqj/app/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <ostream>
#include <sstream>

#include "roqj/engines.hpp"
#include "roqj/errors.hpp"

namespace roqj::app {

namespace {

constexpr double kRoundingFloor = 1e-12;

std::string output_path(const CommandOptions& opts, const Experiment& ex, const std::string& suffix) {
  std::filesystem::create_directories(opts.out_dir);
  return (std::filesystem::path(opts.out_dir) / (ex.name + suffix)).string();
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

}  // namespace

CompareReport compare_tables(const CsvTable& simulation, const CsvTable& reference, const CompareThresholds& th) {
  if (simulation.rows.size() != reference.rows.size()) {
    throw ValidationError("time grids differ: " + std::to_string(simulation.rows.size()) + " vs " +
                          std::to_string(reference.rows.size()) + " rows");
  }
  if (simulation.dimension() != reference.dimension()) throw ValidationError("Hilbert-space dimensions differ");

  CompareReport report;
  for (const auto& name : simulation.observables()) {
    if (reference.find_column("obs_" + name)) report.observables.push_back(name);
  }
  const std::size_t t_sim = simulation.column("t");
  const std::size_t t_ref = reference.column("t");

  for (std::size_t r = 0; r < simulation.rows.size(); ++r) {
    CompareRow row;
    row.t = simulation.rows[r][t_sim];
    const double t_other = reference.rows[r][t_ref];
    if (std::abs(row.t - t_other) > 1e-9 * std::max(1.0, std::abs(row.t))) {
      throw ValidationError("time grids differ at row " + std::to_string(r) + ": t = " + format_double(row.t) +
                            " vs " + format_double(t_other));
    }
    row.trace_distance = trace_distance(simulation.density(r), reference.density(r));
    report.max_trace_distance = std::max(report.max_trace_distance, row.trace_distance);
    if (row.trace_distance > th.max_trace_distance) {
      report.failures.push_back("t = " + format_double(row.t) + ": trace distance " +
                                format_double(row.trace_distance) + " exceeds " +
                                format_double(th.max_trace_distance));
    }
    for (const auto& name : report.observables) {
      const auto se = [&](const CsvTable& tab) {
        const auto c = tab.find_column("stderr_" + name);
        return c ? tab.rows[r][*c] : 0.0;
      };
      const double delta = simulation.rows[r][simulation.column("obs_" + name)] -
                           reference.rows[r][reference.column("obs_" + name)];
      const double sigma = std::hypot(se(simulation), se(reference));
      // Differences at rounding level carry no statistical meaning.
      const double z = std::abs(delta) <= kRoundingFloor ? 0.0 : (sigma > 0.0 ? std::abs(delta) / sigma : INFINITY);
      row.delta.push_back(delta);
      row.z.push_back(z);
      report.max_abs_delta = std::max(report.max_abs_delta, std::abs(delta));
      report.max_z = std::max(report.max_z, z);
      if (std::abs(delta) > std::max({th.z_max * sigma, th.abs_floor, kRoundingFloor})) {
        report.failures.push_back("t = " + format_double(row.t) + ": " + name + " differs by " +
                                  format_double(delta) + " (z = " + format_double(z) + ")");
      }
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string compare_report_csv(const CompareReport& report) {
  std::string out = "t,trace_distance";
  for (const auto& name : report.observables) out += ",delta_" + name + ",z_" + name;
  out += "\n";
  for (const auto& row : report.rows) {
    out += format_double(row.t) + "," + format_double(row.trace_distance);
    for (std::size_t o = 0; o < row.delta.size(); ++o) {
      out += "," + format_double(row.delta[o]) + "," + format_double(row.z[o]);
    }
    out += "\n";
  }
  return out;
}

DensitySeries exact_series(const Experiment& ex) {
  const std::vector<double>& times = ex.run.sample_times;
  if (ex.exact_method == "pauli_analytic") {
    DensitySeries series;
    for (const double t : times) {
      series.times.push_back(t);
      series.states.push_back(pauli_exact(*ex.pauli_weights, ex.initial_density, t));
    }
    return series;
  }
  return integrate_master_equation(ex.model, ex.initial_density, times, ex.exact_dt);
}

int run_command(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Experiment ex = load_experiment(opts.config_path, opts.overrides);
    ex.run.threads = opts.threads;

    const auto start = std::chrono::steady_clock::now();
    const SimulationResult result = run(ex.model, ex.initial, ex.run);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::string sim_path = output_path(opts, ex, "_sim.csv");
    write_file(sim_path, simulation_csv(ex, result));
    if (!result.realizations.empty()) {
      write_file(output_path(opts, ex, "_record.csv"), record_csv(ex, result));
      write_file(output_path(opts, ex, "_events.csv"), events_csv(result));
    }

    out << "model        " << ex.model.name << "\n"
        << "engine       " << to_string(ex.run.engine) << "\n"
        << "trajectories " << ex.run.n_traj;
    if (ex.run.engine == EngineKind::roqj_general) out << " x " << result.batches << " batches";
    out << "\n"
        << "steps        " << ex.run.steps() << " (dt = " << ex.run.dt << ")\n"
        << "jumps        " << result.forward_jumps << " forward, " << result.reverse_jumps << " reverse\n";
    if (ex.run.engine == EngineKind::roqj_general) {
      out << "leaked       " << result.leaked_fraction() << " of jump weight\n"
          << "max classes  " << result.max_classes << "\n";
    }
    out << "max channels " << result.max_forward_channels << "\n"
        << "wall time    " << std::fixed << std::setprecision(2) << wall << " s\n"
        << std::defaultfloat << "wrote        " << sim_path << "\n";
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    return kExitOk;
  });
}

int exact_command(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Experiment ex = load_experiment(opts.config_path, opts.overrides);
    const DensitySeries series = exact_series(ex);
    const std::string path = output_path(opts, ex, "_exact.csv");
    write_file(path, exact_csv(ex, series));
    out << "method " << ex.exact_method << "\nwrote  " << path << "\n";
    return kExitOk;
  });
}

int probe_command(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Experiment ex = load_experiment(opts.config_path, opts.overrides);
    const ProbeReport report = p_divisibility_probe(ex.model, ex.probe.times, ex.probe.n_states, ex.run.seed);
    std::string csv = "t,min_eigenvalue,zero_threshold,p_divisible\n";
    out << "t min_eigenvalue p_divisible\n";
    for (const auto& e : report.entries) {
      csv += format_double(e.t) + "," + format_double(e.min_eigenvalue) + "," + format_double(e.zero_threshold) + "," +
             (e.consistent ? "1" : "0") + "\n";
      out << format_double(e.t) << " " << format_double(e.min_eigenvalue) << " " << (e.consistent ? "yes" : "no")
          << "\n";
    }
    const std::string path = output_path(opts, ex, "_probe.csv");
    write_file(path, csv);
    out << (report.all_consistent() ? "no violation found on the grid" : "P-divisibility violated") << "\n"
        << "wrote " << path << "\n";
    return kExitOk;
  });
}

int compare_command(const CompareOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string text_sim = [&] {
      std::ifstream in(opts.simulation_path, std::ios::binary);
      if (!in) throw ValidationError("cannot open '" + opts.simulation_path + "'");
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }();
    const CsvTable sim = parse_csv(text_sim);
    const CsvTable ref = read_csv(opts.reference_path);

    CompareThresholds th;
    if (sim.header("config")) {
      const Config cfg = Config::from_csv_echo(text_sim);
      th.z_max = cfg.get_double("compare.z_max", th.z_max);
      th.abs_floor = cfg.get_double("compare.abs_floor", th.abs_floor);
      th.max_trace_distance = cfg.get_double("compare.max_trace_distance", th.max_trace_distance);
    }
    if (opts.z_max) th.z_max = *opts.z_max;
    if (opts.abs_floor) th.abs_floor = *opts.abs_floor;
    if (opts.max_trace_distance) th.max_trace_distance = *opts.max_trace_distance;

    const CompareReport report = compare_tables(sim, ref, th);
    if (!opts.report_path.empty()) write_file(opts.report_path, compare_report_csv(report));

    out << "rows               " << report.rows.size() << "\n"
        << "max trace distance " << format_double(report.max_trace_distance) << "\n"
        << "max |delta|        " << format_double(report.max_abs_delta) << "\n"
        << "max z              " << format_double(report.max_z) << "\n";
    for (const auto& f : report.failures) out << "FAIL " << f << "\n";
    out << (report.passed() ? "PASS" : "FAIL") << "\n";
    return report.passed() ? kExitOk : kExitCompareFailed;
  });
}

}  // namespace roqj::app
