#include "roqj/engines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "roqj/errors.hpp"

namespace roqj {

std::uint64_t Ensemble::total() const {
  std::uint64_t n = 0;
  for (const auto& c : classes) n += c.count;
  return n;
}

void Ensemble::validate() const {
  if (total() == 0) throw ValidationError("ensemble is empty");
  for (const auto& c : classes) require_normalized(c.state, "class state");
}

std::vector<Vector> Ensemble::states() const {
  std::vector<Vector> out;
  out.reserve(classes.size());
  for (const auto& c : classes) out.push_back(c.state);
  return out;
}

namespace {

constexpr double kMaxStepProbability = 0.5;

std::string at_time(double t) {
  std::ostringstream s;
  s.precision(17);
  s << "t=" << t;
  return s.str();
}

}  // namespace

StepOutcome roqj_step_p(const Vector& psi, const GeneratorSnapshot& snap, double dt, double u) {
  const RateOperatorSpectrum spectrum = spectral_split(build_rate_operator(snap, psi));
  if (!spectrum.negative.empty()) {
    std::ostringstream msg;
    msg << "rate operator has negative eigenvalue " << spectrum.negative.back().lambda << " at " << at_time(snap.t)
        << "; the dynamics is not P-divisible here, use the roqj_general engine";
    throw PDivisibilityError(msg.str());
  }
  StepOutcome out;
  out.forward_channels = spectrum.positive.size();
  out.jump_probability = spectrum.positive_sum() * dt;
  if (out.jump_probability > kMaxStepProbability) {
    std::ostringstream msg;
    msg << "jump probability " << out.jump_probability << " per step at " << at_time(snap.t) << " exceeds 0.5; reduce dt";
    throw StepSizeError(msg.str());
  }
  double cumulative = 0.0;
  for (std::size_t j = 0; j < spectrum.positive.size(); ++j) {
    cumulative += spectrum.positive[j].lambda * dt;
    if (u < cumulative) {
      out.state = spectrum.positive[j].vector;
      out.jump = JumpEvent{snap.t, static_cast<int>(j), -1, -1, JumpKind::forward, 1};
      return out;
    }
  }
  out.state = deterministic_step_from_action(psi, effective_hamiltonian_action(snap, psi), dt);
  return out;
}

StepOutcome roqj_step_p(const Vector& psi, const MasterEquationModel& model, double t, double dt, double u) {
  return roqj_step_p(psi, snapshot(model, t), dt, u);
}

StepOutcome mcwf_step(const Vector& psi, const GeneratorSnapshot& snap, double dt, double u) {
  if (psi.size() != snap.dim()) throw DimensionError("state dimension does not match the model");
  require_normalized(psi, "state");
  for (std::size_t a = 0; a < snap.rates.size(); ++a) {
    if (snap.rates[a] < 0.0) {
      std::ostringstream msg;
      msg << "rate " << a << " is negative (" << snap.rates[a] << ") at " << at_time(snap.t)
          << "; MCWF would need negative jump probabilities";
      throw NegativeRateError(msg.str());
    }
  }
  const std::size_t terms = snap.operators.size();
  std::vector<Vector> jumped(terms);
  std::vector<double> probs(terms, 0.0);
  Vector no_jump = snap.hamiltonian * psi;
  StepOutcome out;
  for (std::size_t a = 0; a < terms; ++a) {
    if (snap.rates[a] == 0.0) continue;
    jumped[a] = snap.operators[a] * psi;
    probs[a] = snap.rates[a] * jumped[a].squaredNorm() * dt;
    no_jump -= (0.5 * kI * snap.rates[a]) * (snap.operators[a].adjoint() * jumped[a]);
    out.jump_probability += probs[a];
    if (probs[a] > 0.0) ++out.forward_channels;
  }
  if (out.jump_probability > kMaxStepProbability) {
    std::ostringstream msg;
    msg << "jump probability " << out.jump_probability << " per step at " << at_time(snap.t) << " exceeds 0.5; reduce dt";
    throw StepSizeError(msg.str());
  }
  double cumulative = 0.0;
  for (std::size_t a = 0; a < terms; ++a) {
    if (probs[a] <= 0.0) continue;
    cumulative += probs[a];
    if (u < cumulative) {
      out.state = jumped[a] / jumped[a].norm();
      out.jump = JumpEvent{snap.t, static_cast<int>(a), -1, -1, JumpKind::forward, 1};
      return out;
    }
  }
  out.state = deterministic_step_from_action(psi, no_jump, dt);
  return out;
}

StepOutcome mcwf_step(const Vector& psi, const MasterEquationModel& model, double t, double dt, double u) {
  return mcwf_step(psi, snapshot(model, t), dt, u);
}

std::optional<std::size_t> match_state(std::span<const Vector> states, const Vector& target, double tol) {
  std::optional<std::size_t> best;
  double best_overlap = -1.0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (states[k].size() != target.size()) continue;
    const double overlap = std::abs(states[k].dot(target));
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = k;
    }
  }
  if (best && best_overlap >= 1.0 - tol) return best;
  return std::nullopt;
}

std::optional<std::size_t> match_class(const Ensemble& ensemble, const Vector& target, double tol) {
  const std::vector<Vector> states = ensemble.states();
  return match_state(states, target, tol);
}

namespace {

/// One way a member of a class can leave it during a step.
struct Exit {
  double probability = 0.0;
  JumpKind kind = JumpKind::forward;
  int channel = 0;
  int target_class = -1;  // pre-step index; -1 for an unmatched forward target
  Vector landing;         // forward target state when target_class < 0
};

struct ClassPlan {
  std::vector<Exit> exits;
  Vector post_state;
  double stay_probability = 1.0;
};

struct GeneralPlan {
  std::vector<ClassPlan> classes;
  GeneralStepDiagnostics diagnostics;
  std::vector<std::string> unmatched;  // descriptions, for the exact expectation
};

GeneralPlan plan_general_step(const Ensemble& ensemble, const GeneratorSnapshot& snap, double dt,
                              const GeneralStepOptions& options) {
  ensemble.validate();
  const std::size_t k_count = ensemble.classes.size();
  const double total = static_cast<double>(ensemble.total());
  const std::vector<Vector> states = ensemble.states();
  const double tol = options.match_tolerance;

  GeneralPlan plan;
  plan.classes.resize(k_count);
  std::vector<RateOperatorSpectrum> spectra(k_count);

  // Forward channels and the deterministic step, class by class.
  std::vector<int> forward_targets;
  std::vector<Vector> new_targets;
  // Degenerate eigenspaces are aligned with the class states and with targets
  // already opened this step, so classes agree on shared completions.
  std::vector<Vector> references = states;
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& cls = ensemble.classes[k];
    ClassPlan& cp = plan.classes[k];
    cp.post_state = deterministic_step_from_action(cls.state, effective_hamiltonian_action(snap, cls.state), dt);
    if (cls.count == 0) continue;
    RateOperatorSpectrum& spectrum = spectra[k];
    spectrum = spectral_split(build_rate_operator(snap, cls.state));
    double largest = 0.0;
    for (const auto& p : spectrum.positive) largest = std::max(largest, std::abs(p.lambda));
    for (const auto& p : spectrum.negative) largest = std::max(largest, std::abs(p.lambda));
    align_degenerate_eigenvectors(spectrum, references, tol, options.cluster_tolerance_scale * (1.0 + largest));

    const double forward_p = spectrum.positive_sum() * dt;
    if (forward_p > kMaxStepProbability) {
      std::ostringstream msg;
      msg << "forward jump probability " << forward_p << " per step for class " << k << " at " << at_time(snap.t)
          << " exceeds 0.5; reduce dt";
      throw StepSizeError(msg.str());
    }
    const double weight = static_cast<double>(cls.count) / total;
    plan.diagnostics.forward_weight += weight * forward_p;

    for (std::size_t j = 0; j < spectrum.positive.size(); ++j) {
      Exit e;
      e.probability = spectrum.positive[j].lambda * dt;
      e.kind = JumpKind::forward;
      e.channel = static_cast<int>(j);
      if (auto m = match_state(states, spectrum.positive[j].vector, tol)) {
        e.target_class = static_cast<int>(*m);
        if (std::find(forward_targets.begin(), forward_targets.end(), e.target_class) == forward_targets.end()) {
          forward_targets.push_back(e.target_class);
        }
      } else {
        e.landing = spectrum.positive[j].vector;
        if (!match_state(new_targets, e.landing, tol)) {
          new_targets.push_back(e.landing);
          references.push_back(e.landing);
        }
      }
      cp.exits.push_back(std::move(e));
    }
  }
  plan.diagnostics.distinct_forward_channels = forward_targets.size() + new_targets.size();

  // Reverse channels: negative eigenvectors of W_{psi_k'} pull members of the
  // matching class k back into k'.
  for (std::size_t kp = 0; kp < k_count; ++kp) {
    const auto& target = ensemble.classes[kp];
    if (target.count == 0) continue;
    const double target_weight = static_cast<double>(target.count) / total;
    for (std::size_t j = 0; j < spectra[kp].negative.size(); ++j) {
      const Eigenpair& pair = spectra[kp].negative[j];
      const double weight = target_weight * std::abs(pair.lambda) * dt;
      plan.diagnostics.reverse_weight += weight;
      const auto source = match_state(states, pair.vector, tol);
      if (!source || *source == kp || ensemble.classes[*source].count == 0) {
        plan.diagnostics.leaked_weight += weight;
        ++plan.diagnostics.unmatched_channels;
        std::ostringstream msg;
        msg << "negative channel " << j << " of class " << kp << " (lambda " << pair.lambda << ") at "
            << at_time(snap.t) << " has no source class";
        plan.unmatched.push_back(msg.str());
        continue;
      }
      // A second class inside the tolerance makes the choice ambiguous.
      std::size_t within = 0;
      for (const auto& s : states) {
        if (std::abs(s.dot(pair.vector)) >= 1.0 - tol) ++within;
      }
      if (within > 1) ++plan.diagnostics.ambiguous_matches;

      const auto& source_class = ensemble.classes[*source];
      Exit e;
      e.probability = static_cast<double>(target.count) / static_cast<double>(source_class.count) *
                      std::abs(pair.lambda) * dt;
      e.kind = JumpKind::reverse;
      e.channel = static_cast<int>(j);
      e.target_class = static_cast<int>(kp);
      plan.classes[*source].exits.push_back(std::move(e));
    }
  }

  // Finite ensembles can ask for more reverse flow than a small class holds.
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& cls = ensemble.classes[k];
    if (cls.count == 0) continue;
    ClassPlan& cp = plan.classes[k];
    double forward = 0.0;
    double reverse = 0.0;
    for (const Exit& e : cp.exits) (e.kind == JumpKind::forward ? forward : reverse) += e.probability;
    if (forward + reverse > 1.0) {
      const double scale = (1.0 - forward) / reverse;
      for (Exit& e : cp.exits) {
        if (e.kind == JumpKind::reverse) e.probability *= scale;
      }
      plan.diagnostics.clamped_weight += (forward + reverse - 1.0) * static_cast<double>(cls.count) / total;
      reverse = 1.0 - forward;
    }
    cp.stay_probability = std::max(0.0, 1.0 - forward - reverse);
  }
  return plan;
}

}  // namespace

GeneralStepResult roqj_step_general(const Ensemble& ensemble, const GeneratorSnapshot& snap, double dt,
                                    const CounterRng& rng, std::uint64_t stream, std::uint64_t step,
                                    const GeneralStepOptions& options) {
  const GeneralPlan plan = plan_general_step(ensemble, snap, dt, options);
  const std::size_t k_count = ensemble.classes.size();
  const double tol = options.match_tolerance;

  // Slots 0..k_count-1 are the pre-step classes carried to their post-step
  // states; unmatched forward targets get slots appended on first use.
  std::vector<Vector> slot_states;
  std::vector<std::uint64_t> slot_counts(k_count, 0);
  slot_states.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    slot_states.push_back(plan.classes[k].post_state);
  }
  std::vector<Vector> appended;

  GeneralStepResult result;
  result.diagnostics = plan.diagnostics;
  result.fates.resize(k_count);

  std::vector<std::vector<std::uint64_t>> exit_counts(k_count);
  std::vector<std::vector<std::uint32_t>> exit_slots(k_count);

  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& cls = ensemble.classes[k];
    const ClassPlan& cp = plan.classes[k];
    exit_counts[k].assign(cp.exits.size(), 0);
    exit_slots[k].assign(cp.exits.size(), 0);
    for (std::size_t x = 0; x < cp.exits.size(); ++x) {
      const Exit& e = cp.exits[x];
      if (e.target_class >= 0) {
        exit_slots[k][x] = static_cast<std::uint32_t>(e.target_class);
      } else {
        exit_slots[k][x] = std::numeric_limits<std::uint32_t>::max();  // resolved lazily
      }
    }
    result.fates[k].resize(cls.count);
    for (std::uint64_t m = 0; m < cls.count; ++m) {
      const double u = rng.uniform({stream, step, static_cast<std::uint64_t>(k), m});
      double cumulative = 0.0;
      std::size_t chosen = cp.exits.size();
      for (std::size_t x = 0; x < cp.exits.size(); ++x) {
        cumulative += cp.exits[x].probability;
        if (u < cumulative) {
          chosen = x;
          break;
        }
      }
      MemberFate fate;
      if (chosen == cp.exits.size()) {
        fate.new_class = static_cast<std::uint32_t>(k);
        ++slot_counts[k];
      } else {
        const Exit& e = cp.exits[chosen];
        std::uint32_t& slot = exit_slots[k][chosen];
        if (slot == std::numeric_limits<std::uint32_t>::max()) {
          if (auto hit = match_state(appended, e.landing, tol)) {
            slot = static_cast<std::uint32_t>(k_count + *hit);
          } else {
            appended.push_back(e.landing);
            slot_states.push_back(e.landing);
            slot_counts.push_back(0);
            slot = static_cast<std::uint32_t>(slot_states.size() - 1);
          }
        }
        fate.new_class = slot;
        fate.channel = e.channel;
        fate.kind = e.kind;
        ++slot_counts[slot];
        ++exit_counts[k][chosen];
      }
      result.fates[k][m] = fate;
    }
  }

  // Merge coinciding slots into the lowest index, then drop empty ones.
  const std::size_t slots = slot_states.size();
  std::vector<std::uint32_t> remap(slots);
  for (std::size_t s = 0; s < slots; ++s) remap[s] = static_cast<std::uint32_t>(s);
  for (std::size_t s = 0; s < slots; ++s) {
    if (remap[s] != s || slot_counts[s] == 0) continue;
    for (std::size_t r = s + 1; r < slots; ++r) {
      if (remap[r] != r || slot_counts[r] == 0) continue;
      if (std::abs(slot_states[s].dot(slot_states[r])) >= 1.0 - tol) {
        remap[r] = static_cast<std::uint32_t>(s);
        slot_counts[s] += slot_counts[r];
        slot_counts[r] = 0;
      }
    }
  }
  std::vector<std::uint32_t> compact(slots, std::numeric_limits<std::uint32_t>::max());
  for (std::size_t s = 0; s < slots; ++s) {
    if (remap[s] == s && slot_counts[s] > 0) {
      compact[s] = static_cast<std::uint32_t>(result.ensemble.classes.size());
      result.ensemble.classes.push_back({slot_states[s], slot_counts[s]});
    }
  }
  auto final_index = [&](std::uint32_t slot) { return compact[remap[slot]]; };
  for (auto& per_class : result.fates)
    for (auto& fate : per_class) fate.new_class = final_index(fate.new_class);

  for (std::size_t k = 0; k < k_count; ++k) {
    const ClassPlan& cp = plan.classes[k];
    for (std::size_t x = 0; x < cp.exits.size(); ++x) {
      if (exit_counts[k][x] == 0) continue;
      const Exit& e = cp.exits[x];
      result.events.push_back(JumpEvent{snap.t, e.channel, static_cast<int>(k),
                                        static_cast<int>(final_index(exit_slots[k][x])), e.kind, exit_counts[k][x]});
    }
  }
  return result;
}

GeneralStepResult roqj_step_general(const Ensemble& ensemble, const MasterEquationModel& model, double t,
                                    double dt, const CounterRng& rng, std::uint64_t step,
                                    const GeneralStepOptions& options) {
  return roqj_step_general(ensemble, snapshot(model, t), dt, rng, 0, step, options);
}

Matrix expected_one_step(const Vector& psi, const GeneratorSnapshot& snap, double dt) {
  const RateOperatorSpectrum spectrum = spectral_split(build_rate_operator(snap, psi));
  if (!spectrum.negative.empty()) {
    std::ostringstream msg;
    msg << "rate operator has negative eigenvalue " << spectrum.negative.back().lambda << " at " << at_time(snap.t);
    throw PDivisibilityError(msg.str());
  }
  const double p_jump = spectrum.positive_sum() * dt;
  if (p_jump > kMaxStepProbability) throw StepSizeError("jump probability per step exceeds 0.5; reduce dt");
  const Vector next = deterministic_step_from_action(psi, effective_hamiltonian_action(snap, psi), dt);
  Matrix out = (1.0 - p_jump) * projector(next);
  for (const auto& p : spectrum.positive) out += (p.lambda * dt) * projector(p.vector);
  return out;
}

Matrix expected_one_step(const Vector& psi, const MasterEquationModel& model, double t, double dt) {
  return expected_one_step(psi, snapshot(model, t), dt);
}

Matrix expected_ensemble_update(const Ensemble& ensemble, const GeneratorSnapshot& snap, double dt,
                                const GeneralStepOptions& options) {
  const GeneralPlan plan = plan_general_step(ensemble, snap, dt, options);
  if (!plan.unmatched.empty()) throw UnmatchedChannelError(plan.unmatched.front());
  const int n = snap.dim();
  const double total = static_cast<double>(ensemble.total());
  Matrix out = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < ensemble.classes.size(); ++k) {
    const auto& cls = ensemble.classes[k];
    if (cls.count == 0) continue;
    const double weight = static_cast<double>(cls.count) / total;
    const ClassPlan& cp = plan.classes[k];
    out += (weight * cp.stay_probability) * projector(cp.post_state);
    for (const Exit& e : cp.exits) {
      const Vector& landing = e.target_class >= 0 ? plan.classes[static_cast<std::size_t>(e.target_class)].post_state
                                                  : e.landing;
      out += (weight * e.probability) * projector(landing);
    }
  }
  return out;
}

Matrix expected_ensemble_update(const Ensemble& ensemble, const MasterEquationModel& model, double t, double dt,
                                const GeneralStepOptions& options) {
  return expected_ensemble_update(ensemble, snapshot(model, t), dt, options);
}

}  // namespace roqj
