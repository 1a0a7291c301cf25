#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "roqj/analysis.hpp"
#include "roqj/linalg.hpp"
#include "roqj/model.hpp"
#include "roqj/rate_operator.hpp"
#include "roqj/rng.hpp"
#include "roqj/run_config.hpp"

namespace roqj {

/// Ensemble members sharing one pure state.
struct TrajectoryClass {
  Vector state;
  std::uint64_t count = 0;
};

struct Ensemble {
  std::vector<TrajectoryClass> classes;

  std::uint64_t total() const;
  /// Checks unit norms and positive total; throws ValidationError.
  void validate() const;
  std::vector<Vector> states() const;
};

enum class JumpKind { forward, reverse };

/// One detector click. For forward jumps `channel` indexes the positive
/// eigenpairs of the rate operator (decreasing eigenvalue) or, for MCWF, the
/// Lindblad term. For reverse jumps it indexes the negative eigenpairs of the
/// target class. Class indices are only set by the general engine: the source
/// refers to the ensemble before the step and the target to the one after.
struct JumpEvent {
  double t = 0.0;
  int channel = 0;
  int source_class = -1;
  int target_class = -1;
  JumpKind kind = JumpKind::forward;
  std::uint64_t members = 1;
};

/// Count sequence of one trajectory, in time order.
struct MeasurementRecord {
  std::vector<JumpEvent> events;
};

struct StepOutcome {
  Vector state;
  std::optional<JumpEvent> jump;
  std::size_t forward_channels = 0;
  double jump_probability = 0.0;
};

/// One step of the P-divisible rate-operator unravelling driven by a single
/// uniform draw u in [0, 1): jump to eigenvector j with probability
/// lambda_j dt, otherwise the normalized Euler step with H_psi.
/// Throws PDivisibilityError if W_psi has a negative eigenvalue beyond the
/// zero threshold and StepSizeError if sum_j lambda_j dt > 0.5.
StepOutcome roqj_step_p(const Vector& psi, const GeneratorSnapshot& snap, double dt, double u);
StepOutcome roqj_step_p(const Vector& psi, const MasterEquationModel& model, double t, double dt, double u);

/// Monte Carlo wave function step: jump to L_a psi / ||L_a psi|| with
/// probability c_a ||L_a psi||^2 dt, otherwise the Euler step with
/// H_S - (i/2) sum_a c_a L_a^dag L_a. Throws NegativeRateError if any
/// c_a(t) < 0.
StepOutcome mcwf_step(const Vector& psi, const GeneratorSnapshot& snap, double dt, double u);
StepOutcome mcwf_step(const Vector& psi, const MasterEquationModel& model, double t, double dt, double u);

/// Index of the state with the largest |<state|target>|, provided that
/// overlap is at least 1 - tol. Ties resolve to the lowest index.
std::optional<std::size_t> match_state(std::span<const Vector> states, const Vector& target, double tol);
std::optional<std::size_t> match_class(const Ensemble& ensemble, const Vector& target, double tol);

struct GeneralStepOptions {
  double match_tolerance = 1e-8;
  /// Eigenvalues closer than scale * (1 + max |lambda|) form one degenerate
  /// cluster whose basis is aligned with the ensemble's states.
  double cluster_tolerance_scale = 1e-9;
};

struct GeneralStepDiagnostics {
  double forward_weight = 0.0;   // sum_k (N_k/N) sum_j+ lambda dt
  double reverse_weight = 0.0;   // sum_k' (N_k'/N) sum_j- |lambda| dt
  double leaked_weight = 0.0;    // part of reverse_weight with no source class
  double clamped_weight = 0.0;   // reverse probability removed to keep p <= 1
  std::size_t unmatched_channels = 0;
  std::size_t ambiguous_matches = 0;
  std::size_t distinct_forward_channels = 0;
};

/// Where one member of a pre-step class ended up.
struct MemberFate {
  std::uint32_t new_class = 0;
  std::int32_t channel = -1;  // -1: no jump
  JumpKind kind = JumpKind::forward;
};

struct GeneralStepResult {
  Ensemble ensemble;
  std::vector<JumpEvent> events;  // aggregated, `members` jumps each
  /// fates[k][m] for member m of pre-step class k.
  std::vector<std::vector<MemberFate>> fates;
  GeneralStepDiagnostics diagnostics;
};

/// Synchronous ensemble update of the general rate-operator unravelling.
/// All probabilities use the counts at step start; members draw
/// rng.uniform({stream, step, class, member}); moves, merges of coinciding
/// classes and pruning of empty classes happen at the end of the step.
/// Reverse jumps move members of the class matching a negative eigenvector
/// of W_{psi_k'} into class k' with probability (N_k'/N_k)|lambda| dt.
GeneralStepResult roqj_step_general(const Ensemble& ensemble, const GeneratorSnapshot& snap, double dt,
                                    const CounterRng& rng, std::uint64_t stream, std::uint64_t step,
                                    const GeneralStepOptions& options = {});
GeneralStepResult roqj_step_general(const Ensemble& ensemble, const MasterEquationModel& model, double t,
                                    double dt, const CounterRng& rng, std::uint64_t step = 0,
                                    const GeneralStepOptions& options = {});

/// Exact average over one P-divisible step from psi:
/// (1 - sum_j lambda_j dt)|psi'><psi'| + sum_j lambda_j dt |phi_j><phi_j|.
Matrix expected_one_step(const Vector& psi, const GeneratorSnapshot& snap, double dt);
Matrix expected_one_step(const Vector& psi, const MasterEquationModel& model, double t, double dt);

/// Exact expectation of roqj_step_general's averaged state. Throws
/// UnmatchedChannelError if a negative eigenvector has no source class.
Matrix expected_ensemble_update(const Ensemble& ensemble, const GeneratorSnapshot& snap, double dt,
                                const GeneralStepOptions& options = {});
Matrix expected_ensemble_update(const Ensemble& ensemble, const MasterEquationModel& model, double t, double dt,
                                const GeneralStepOptions& options = {});

/// Pure initial state or density matrix.
using InitialState = std::variant<Vector, Matrix>;

/// Runs the configured engine over [0, t_max]. Engine incompatibilities are
/// rethrown with the offending time prepended to the message.
SimulationResult run(const MasterEquationModel& model, const InitialState& initial, const RunConfig& config);

}  // namespace roqj
