// Command-line front end: run, exact, compare and probe subcommands.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "roqj/app/commands.hpp"

namespace {

struct CommonFlags {
  roqj::app::CommandOptions opts;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> engine;
  std::optional<double> dt;
  std::optional<std::uint64_t> n_traj;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", opts.config_path, "Experiment config (.cfg, or a CSV written by this tool)")
        ->required();
    cmd->add_option("--seed", seed, "Override run.seed");
    cmd->add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out-dir", opts.out_dir, "Output directory");
    cmd->add_option("--engine", engine, "Override run.engine (mcwf, roqj_p, roqj_general)");
    cmd->add_option("--dt", dt, "Override run.dt");
    cmd->add_option("--n-traj", n_traj, "Override run.n_traj");
  }

  roqj::app::CommandOptions resolve() const {
    roqj::app::CommandOptions o = opts;
    o.overrides = {seed, engine, dt, n_traj};
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate-operator quantum jump simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, exact_flags, probe_flags;
  auto* run_cmd = app.add_subcommand("run", "Unravel the master equation and write <name>_sim.csv");
  run_flags.attach(run_cmd);
  auto* exact_cmd = app.add_subcommand("exact", "Integrate the master equation and write <name>_exact.csv");
  exact_flags.attach(exact_cmd);
  auto* probe_cmd = app.add_subcommand("probe", "Sample rate-operator eigenvalues for P-divisibility");
  probe_flags.attach(probe_cmd);

  roqj::app::CompareOptions cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare a simulation CSV with a reference CSV");
  cmp_cmd->add_option("simulation", cmp.simulation_path, "Simulation CSV")->required();
  cmp_cmd->add_option("reference", cmp.reference_path, "Reference CSV")->required();
  cmp_cmd->add_option("--z-max", cmp.z_max, "Allowed deviation in standard errors");
  cmp_cmd->add_option("--abs-floor", cmp.abs_floor, "Absolute tolerance floor");
  cmp_cmd->add_option("--max-trace-distance", cmp.max_trace_distance, "Trace-distance bound");
  cmp_cmd->add_option("--report", cmp.report_path, "Write per-time deviations to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? roqj::app::kExitOk : roqj::app::kExitUsage;
  }

  if (*run_cmd) return roqj::app::run_command(run_flags.resolve(), std::cout, std::cerr);
  if (*exact_cmd) return roqj::app::exact_command(exact_flags.resolve(), std::cout, std::cerr);
  if (*probe_cmd) return roqj::app::probe_command(probe_flags.resolve(), std::cout, std::cerr);
  return roqj::app::compare_command(cmp, std::cout, std::cerr);
}
