#pragma once

#include <cstdint>
#include <vector>

#include "roqj/linalg.hpp"
#include "roqj/model.hpp"

namespace roqj {

struct DensitySeries {
  std::vector<double> times;
  std::vector<Matrix> states;
};

/// Classical fixed-step RK4 on the generator. Every step is re-Hermitized and
/// trace-renormalized; a trace drift above 1e-6 before renormalization throws
/// InstabilityError. Returns the states at every multiple of `report_every`
/// steps (1 = every step), always including t = 0 and the final time.
DensitySeries integrate_master_equation(const MasterEquationModel& model, const Matrix& rho0, double t_max,
                                        double dt_exact, std::size_t report_every = 1);

/// Same integration, reporting at the given times (each a multiple of
/// dt_exact within 1e-9).
DensitySeries integrate_master_equation(const MasterEquationModel& model, const Matrix& rho0,
                                        const std::vector<double>& sample_times, double dt_exact);

/// Closed-form solution of the mu-parametrized Pauli channel: each Bloch
/// component scales as v_i(t) = (x_i + (1 - x_i) e^{-2t}) v_i(0).
Matrix pauli_exact(const PauliWeights& x, const Matrix& rho0, double t);

struct ProbeEntry {
  double t = 0.0;
  double min_eigenvalue = 0.0;  // over the sampled states
  double zero_threshold = 0.0;
  bool consistent = true;       // min_eigenvalue >= -zero_threshold
};

struct ProbeReport {
  std::vector<ProbeEntry> entries;
  bool all_consistent() const;
};

/// Samples Haar-random pure states at each time and reports the smallest
/// rate-operator eigenvalue found. A negative value certifies that the
/// dynamics is not P-divisible at t; a consistent entry is only evidence.
/// State k at time index i is the same for every n_states, so adding states
/// can only lower the minimum.
ProbeReport p_divisibility_probe(const MasterEquationModel& model, const std::vector<double>& t_grid,
                                 std::size_t n_states, std::uint64_t seed);

}  // namespace roqj
