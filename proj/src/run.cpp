#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "roqj/engines.hpp"
#include "roqj/errors.hpp"

namespace roqj {

std::string to_string(EngineKind engine) {
  switch (engine) {
    case EngineKind::mcwf:
      return "mcwf";
    case EngineKind::roqj_p:
      return "roqj_p";
    case EngineKind::roqj_general:
      return "roqj_general";
  }
  return "unknown";
}

EngineKind parse_engine(std::string_view name) {
  if (name == "mcwf") return EngineKind::mcwf;
  if (name == "roqj_p") return EngineKind::roqj_p;
  if (name == "roqj_general") return EngineKind::roqj_general;
  throw ValidationError("unknown engine '" + std::string(name) + "' (expected mcwf, roqj_p or roqj_general)");
}

namespace {

bool near_multiple(double t, double dt, std::size_t& index) {
  const double ratio = t / dt;
  const double rounded = std::round(ratio);
  if (rounded < 0.0) return false;
  index = static_cast<std::size_t>(rounded);
  return std::abs(ratio - rounded) <= 1e-9 * std::max(1.0, ratio);
}

}  // namespace

void RunConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("run.dt must be positive");
  if (!(t_max >= dt) || !std::isfinite(t_max)) throw ValidationError("run.t_max must be at least run.dt");
  if (n_traj < 1) throw ValidationError("run.n_traj must be at least 1");
  if (threads < 1) throw ValidationError("threads must be at least 1");
  if (batches < 1) throw ValidationError("run.batches must be at least 1");
  if (!(match_tolerance > 0.0 && match_tolerance < 1.0)) throw ValidationError("run.match_tolerance must lie in (0, 1)");
  if (!(leak_budget >= 0.0)) throw ValidationError("run.leak_budget must be non-negative");
  std::size_t idx = 0;
  if (!near_multiple(t_max, dt, idx)) throw ValidationError("run.t_max must be a multiple of run.dt");
  for (double t : sample_times) {
    std::size_t s = 0;
    if (!(t >= 0.0) || t > t_max * (1.0 + 1e-12) || !near_multiple(t, dt, s)) {
      std::ostringstream msg;
      msg << "sample time " << t << " is not a multiple of dt inside [0, t_max]";
      throw ValidationError(msg.str());
    }
  }
}

std::size_t RunConfig::steps() const {
  return static_cast<std::size_t>(std::llround(t_max / dt));
}

std::vector<std::size_t> RunConfig::sample_steps() const {
  std::vector<std::size_t> out;
  if (sample_times.empty()) {
    out = {0, steps()};
  } else {
    for (double t : sample_times) out.push_back(static_cast<std::size_t>(std::llround(t / dt)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

constexpr std::uint64_t kInitStream = 0x1a17ULL;
constexpr std::size_t kBlockSize = 256;

/// Runs fn(0..count-1) on up to `threads` workers. Exceptions are collected
/// per index and the one with the lowest index is rethrown, so failures do not
/// depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) guarded(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Component {
  double weight = 0.0;
  Vector state;
};

std::vector<Component> decompose_initial(const InitialState& initial, int n) {
  if (const auto* psi = std::get_if<Vector>(&initial)) {
    if (psi->size() != n) throw DimensionError("initial state dimension does not match the model");
    require_normalized(*psi, "initial state");
    return {{1.0, *psi}};
  }
  const Matrix& rho = std::get<Matrix>(initial);
  if (rho.rows() != n || rho.cols() != n) throw DimensionError("initial density matrix dimension does not match the model");
  if (!is_hermitian(rho, 1e-10)) throw ValidationError("initial density matrix is not Hermitian");
  if (std::abs(rho.trace() - 1.0) > 1e-10) throw ValidationError("initial density matrix does not have unit trace");
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(rho));
  if (es.eigenvalues().minCoeff() < -1e-8) throw ValidationError("initial density matrix is not positive");
  std::vector<Component> out;
  double total = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const double w = es.eigenvalues()(i);
    if (w <= 1e-15) continue;
    Vector v = es.eigenvectors().col(i);
    fix_phase(v);
    out.push_back({w, std::move(v)});
    total += w;
  }
  for (auto& c : out) c.weight /= total;
  return out;
}

std::size_t pick_component(const std::vector<Component>& comps, double u) {
  double cumulative = 0.0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    cumulative += comps[i].weight;
    if (u < cumulative) return i;
  }
  return comps.size() - 1;
}

struct BlockTally {
  std::vector<std::uint64_t> histogram;
  double forward_weight = 0.0;
  std::size_t max_channels = 0;
};

struct SampleBlock {
  Matrix sum;
  std::vector<RunningStats> stats;
};

void run_independent(const MasterEquationModel& model, const std::vector<Component>& comps,
                     const std::vector<Observable>& observables, const RunConfig& config, SimulationResult& result) {
  const int n = model.n;
  const std::size_t n_traj = config.n_traj;
  const std::size_t steps = config.steps();
  const std::vector<std::size_t> sample_steps = config.sample_steps();
  const CounterRng rng(config.seed);
  const bool mcwf = config.engine == EngineKind::mcwf;
  const std::size_t channels = mcwf ? model.terms.size() : static_cast<std::size_t>(n);
  const std::size_t blocks = (n_traj + kBlockSize - 1) / kBlockSize;
  const std::size_t recorded = std::min(config.record_trajectories, n_traj);

  std::vector<Vector> states(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    states[i] = comps[pick_component(comps, rng.uniform({kInitStream, i}))].state;
  }
  std::vector<BlockTally> tallies(blocks);
  for (auto& t : tallies) t.histogram.assign(channels, 0);
  result.records.assign(recorded, {});
  result.realizations.assign(recorded, {});

  std::size_t next_sample = 0;
  for (std::size_t s = 0; s <= steps; ++s) {
    if (next_sample < sample_steps.size() && sample_steps[next_sample] == s) {
      std::vector<SampleBlock> parts(blocks);
      parallel_for(blocks, config.threads, [&](std::size_t b) {
        SampleBlock& part = parts[b];
        part.sum = Matrix::Zero(n, n);
        part.stats.assign(observables.size(), {});
        const std::size_t end = std::min(n_traj, (b + 1) * kBlockSize);
        for (std::size_t i = b * kBlockSize; i < end; ++i) {
          part.sum += projector(states[i]);
          for (std::size_t o = 0; o < observables.size(); ++o) part.stats[o].add(observables[o].value(states[i]));
        }
      });
      Matrix sum = Matrix::Zero(n, n);
      std::vector<RunningStats> stats(observables.size());
      for (const auto& part : parts) {
        sum += part.sum;
        for (std::size_t o = 0; o < observables.size(); ++o) stats[o].merge(part.stats[o]);
      }
      result.times.push_back(static_cast<double>(s) * config.dt);
      result.averaged_states.push_back(sum / static_cast<double>(n_traj));
      std::vector<double> means;
      std::vector<double> errs;
      for (const auto& st : stats) {
        means.push_back(st.mean());
        errs.push_back(st.stderr_of_mean());
      }
      result.observable_means.push_back(std::move(means));
      result.observable_stderr.push_back(std::move(errs));
      for (std::size_t r = 0; r < recorded; ++r) result.realizations[r].push_back(states[r]);
      ++next_sample;
    }
    if (s == steps) break;

    const GeneratorSnapshot snap = snapshot(model, static_cast<double>(s) * config.dt);
    parallel_for(blocks, config.threads, [&](std::size_t b) {
      BlockTally& tally = tallies[b];
      const std::size_t end = std::min(n_traj, (b + 1) * kBlockSize);
      for (std::size_t i = b * kBlockSize; i < end; ++i) {
        const double u = rng.uniform({i, s});
        StepOutcome out = mcwf ? mcwf_step(states[i], snap, config.dt, u) : roqj_step_p(states[i], snap, config.dt, u);
        tally.forward_weight += out.jump_probability;
        tally.max_channels = std::max(tally.max_channels, out.forward_channels);
        if (out.jump) {
          ++tally.histogram[static_cast<std::size_t>(out.jump->channel)];
          if (i < recorded) result.records[i].events.push_back(*out.jump);
        }
        states[i] = std::move(out.state);
      }
    });
  }

  result.jump_histogram.assign(channels, 0);
  double forward_weight = 0.0;
  for (const auto& t : tallies) {
    for (std::size_t c = 0; c < channels; ++c) result.jump_histogram[c] += t.histogram[c];
    forward_weight += t.forward_weight;
    result.max_forward_channels = std::max(result.max_forward_channels, t.max_channels);
  }
  for (auto h : result.jump_histogram) result.forward_jumps += h;
  result.forward_weight = forward_weight / static_cast<double>(n_traj);
  result.max_classes = n_traj;
}

/// Output of one independent repeat of the general engine.
struct BatchOutcome {
  std::vector<Matrix> states;
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> member_stderr;
  std::vector<std::uint64_t> histogram;
  std::uint64_t reverse_jumps = 0;
  GeneralStepDiagnostics totals;
  std::size_t max_forward_channels = 0;
  std::size_t max_classes = 0;
  std::vector<MeasurementRecord> records;
  std::vector<std::vector<Vector>> realizations;
};

/// A tracked ensemble member: its class and position within the class.
struct Tag {
  std::size_t cls = 0;
  std::uint64_t local = 0;
};

BatchOutcome run_general_batch(const MasterEquationModel& model, const std::vector<Component>& comps,
                               const std::vector<Observable>& observables, const RunConfig& config,
                               std::uint64_t batch, std::size_t recorded) {
  const int n = model.n;
  const std::uint64_t n_traj = config.n_traj;
  const std::size_t steps = config.steps();
  const std::vector<std::size_t> sample_steps = config.sample_steps();
  const CounterRng rng(config.seed);
  GeneralStepOptions options;
  options.match_tolerance = config.match_tolerance;

  BatchOutcome out;
  out.histogram.assign(static_cast<std::size_t>(n), 0);
  out.records.assign(recorded, {});
  out.realizations.assign(recorded, {});

  std::vector<std::uint64_t> comp_counts(comps.size(), 0);
  std::vector<std::size_t> member_comp(recorded);
  std::vector<std::uint64_t> member_local(recorded);
  for (std::uint64_t m = 0; m < n_traj; ++m) {
    const std::size_t c = pick_component(comps, rng.uniform({kInitStream, batch, m}));
    if (m < recorded) {
      member_comp[m] = c;
      member_local[m] = comp_counts[c];
    }
    ++comp_counts[c];
  }
  Ensemble ensemble;
  std::vector<std::size_t> comp_to_class(comps.size(), 0);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    if (comp_counts[c] == 0) continue;
    comp_to_class[c] = ensemble.classes.size();
    ensemble.classes.push_back({comps[c].state, comp_counts[c]});
  }
  std::vector<Tag> tags(recorded);
  for (std::size_t r = 0; r < recorded; ++r) tags[r] = {comp_to_class[member_comp[r]], member_local[r]};

  std::size_t next_sample = 0;
  for (std::size_t s = 0; s <= steps; ++s) {
    out.max_classes = std::max(out.max_classes, ensemble.classes.size());
    if (next_sample < sample_steps.size() && sample_steps[next_sample] == s) {
      const Matrix avg = ensemble_average(ensemble);
      std::vector<double> means;
      std::vector<double> errs;
      for (const auto& obs : observables) {
        RunningStats st;
        for (const auto& cls : ensemble.classes) st.add(obs.value(cls.state), static_cast<double>(cls.count));
        means.push_back(obs.value(avg));
        errs.push_back(st.stderr_of_mean());
      }
      out.states.push_back(avg);
      out.means.push_back(std::move(means));
      out.member_stderr.push_back(std::move(errs));
      for (std::size_t r = 0; r < recorded; ++r) out.realizations[r].push_back(ensemble.classes[tags[r].cls].state);
      ++next_sample;
    }
    if (s == steps) break;

    const GeneratorSnapshot snap = snapshot(model, static_cast<double>(s) * config.dt);
    GeneralStepResult res = roqj_step_general(ensemble, snap, config.dt, rng, batch, s, options);
    const auto& d = res.diagnostics;
    out.totals.forward_weight += d.forward_weight;
    out.totals.reverse_weight += d.reverse_weight;
    out.totals.leaked_weight += d.leaked_weight;
    out.totals.clamped_weight += d.clamped_weight;
    out.totals.unmatched_channels += d.unmatched_channels;
    out.totals.ambiguous_matches += d.ambiguous_matches;
    out.max_forward_channels = std::max(out.max_forward_channels, d.distinct_forward_channels);
    for (const auto& e : res.events) {
      if (e.kind == JumpKind::forward) {
        out.histogram[static_cast<std::size_t>(e.channel)] += e.members;
      } else {
        out.reverse_jumps += e.members;
      }
    }

    // Follow tagged members: their new position is their rank among the
    // members landing in the same class, ordered by (old class, old index).
    for (std::size_t r = 0; r < recorded; ++r) {
      const MemberFate fate = res.fates[tags[r].cls][tags[r].local];
      std::uint64_t rank = 0;
      for (std::size_t k = 0; k <= tags[r].cls; ++k) {
        const std::uint64_t limit = k == tags[r].cls ? tags[r].local : res.fates[k].size();
        for (std::uint64_t m = 0; m < limit; ++m) {
          if (res.fates[k][m].new_class == fate.new_class) ++rank;
        }
      }
      if (fate.channel >= 0) {
        out.records[r].events.push_back(JumpEvent{snap.t, fate.channel, static_cast<int>(tags[r].cls),
                                                  static_cast<int>(fate.new_class), fate.kind, 1});
      }
      tags[r] = {fate.new_class, rank};
    }
    ensemble = std::move(res.ensemble);
  }
  return out;
}

void run_general(const MasterEquationModel& model, const std::vector<Component>& comps,
                 const std::vector<Observable>& observables, const RunConfig& config, SimulationResult& result) {
  const std::size_t batches = config.batches;
  const std::size_t recorded = std::min<std::size_t>(config.record_trajectories, config.n_traj);
  std::vector<BatchOutcome> outcomes(batches);
  parallel_for(batches, config.threads, [&](std::size_t b) {
    outcomes[b] = run_general_batch(model, comps, observables, config, b, b == 0 ? recorded : 0);
  });

  const std::size_t samples = outcomes.front().states.size();
  const double inv_b = 1.0 / static_cast<double>(batches);
  for (std::size_t i = 0; i < samples; ++i) {
    Matrix avg = Matrix::Zero(model.n, model.n);
    for (const auto& o : outcomes) avg += o.states[i];
    result.averaged_states.push_back(avg * inv_b);
    std::vector<double> means;
    std::vector<double> errs;
    for (std::size_t q = 0; q < observables.size(); ++q) {
      RunningStats st;
      for (const auto& o : outcomes) st.add(o.means[i][q]);
      means.push_back(st.mean());
      errs.push_back(batches >= 2 ? st.stderr_of_mean() : outcomes.front().member_stderr[i][q]);
    }
    result.observable_means.push_back(std::move(means));
    result.observable_stderr.push_back(std::move(errs));
  }
  for (std::size_t s : config.sample_steps()) result.times.push_back(static_cast<double>(s) * config.dt);

  result.jump_histogram.assign(static_cast<std::size_t>(model.n), 0);
  for (const auto& o : outcomes) {
    for (std::size_t c = 0; c < o.histogram.size(); ++c) result.jump_histogram[c] += o.histogram[c];
    result.reverse_jumps += o.reverse_jumps;
    result.forward_weight += o.totals.forward_weight * inv_b;
    result.reverse_weight += o.totals.reverse_weight * inv_b;
    result.leaked_weight += o.totals.leaked_weight * inv_b;
    result.clamped_weight += o.totals.clamped_weight * inv_b;
    result.unmatched_channels += o.totals.unmatched_channels;
    result.ambiguous_matches += o.totals.ambiguous_matches;
    result.max_forward_channels = std::max(result.max_forward_channels, o.max_forward_channels);
    result.max_classes = std::max(result.max_classes, o.max_classes);
  }
  for (auto h : result.jump_histogram) result.forward_jumps += h;
  result.records = std::move(outcomes.front().records);
  result.realizations = std::move(outcomes.front().realizations);
  result.batches = batches;
}

}  // namespace

SimulationResult run(const MasterEquationModel& model, const InitialState& initial, const RunConfig& config) {
  config.validate();
  const std::vector<Component> comps = decompose_initial(initial, model.n);

  std::vector<Observable> observables;
  if (config.observables.empty()) {
    for (int i = 0; i < model.n; ++i) observables.push_back({Observable::Kind::population, i, i});
  } else {
    for (const auto& name : config.observables) observables.push_back(Observable::parse(name));
  }
  for (const auto& obs : observables) obs.check_dimension(model.n);

  SimulationResult result;
  result.model_name = model.name;
  result.config = config;
  for (const auto& obs : observables) result.observable_names.push_back(obs.name());

  if (config.engine == EngineKind::roqj_general) {
    run_general(model, comps, observables, config, result);
  } else {
    run_independent(model, comps, observables, config, result);
  }

  if (result.leaked_fraction() > config.leak_budget) {
    std::ostringstream msg;
    msg << "leaked reverse-jump weight is " << 100.0 * result.leaked_fraction()
        << "% of the total jump weight (budget " << 100.0 * config.leak_budget << "%)";
    result.warnings.push_back(msg.str());
  }
  if (result.ambiguous_matches > 0) {
    result.warnings.push_back(std::to_string(result.ambiguous_matches) +
                              " reverse channels matched more than one class within tolerance");
  }
  return result;
}

}  // namespace roqj
