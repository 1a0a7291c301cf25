#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "roqj/linalg.hpp"

namespace roqj {

using OperatorFn = std::function<Matrix(double)>;
using RateFn = std::function<double(double)>;

/// One dissipative term c(t) (L rho L^dag - {L^dag L, rho}/2). The rate may be
/// negative. Both evaluators must be pure functions of t.
struct LindbladTerm {
  std::string label;
  OperatorFn op;
  RateFn rate;
};

/// Time-local master equation on C^n (hbar = 1). The number of terms is not
/// limited to n^2 - 1; redundant sets are accepted as given.
struct MasterEquationModel {
  std::string name;
  int n = 0;
  OperatorFn hamiltonian;
  std::vector<LindbladTerm> terms;
};

/// All time-dependent pieces of a model evaluated at one instant.
struct GeneratorSnapshot {
  double t = 0.0;
  Matrix hamiltonian;
  std::vector<Matrix> operators;
  std::vector<double> rates;

  int dim() const { return static_cast<int>(hamiltonian.rows()); }
};

/// Evaluates H(t), L_a(t), c_a(t). Throws ValidationError when H(t) is not
/// Hermitian within 1e-10 or a rate is not finite, DimensionError on shape
/// mismatch.
GeneratorSnapshot snapshot(const MasterEquationModel& model, double t);

/// L_t[rho] = -i[H, rho] + sum_a c_a (L_a rho L_a^dag - {L_a^dag L_a, rho}/2)
Matrix evaluate_generator(const GeneratorSnapshot& snap, const Matrix& rho);
Matrix evaluate_generator(const MasterEquationModel& model, double t, const Matrix& rho);

// ---------------------------------------------------------------------------
// Pauli-channel family
// ---------------------------------------------------------------------------

/// Non-negative weights (x1, x2, x3) summing to one.
using PauliWeights = std::array<double, 3>;

void validate_pauli_weights(const PauliWeights& x);

/// mu_i(t) = -(x_j + x_k) / (x_j + x_k + e^{2t} x_i), i in {1, 2, 3}.
double pauli_mu(const PauliWeights& x, int i, double t);

/// gamma_i(t) = mu_i - mu_j - mu_k.
std::array<double, 3> pauli_rates(const PauliWeights& x, double t);

/// d rho/dt = (1/2) sum_k gamma_k(t) [sigma_k rho sigma_k - rho]. The 1/2 is
/// folded into the stored rates.
MasterEquationModel build_pauli_channel_model(std::function<std::array<double, 3>(double)> gammas,
                                              std::string name = "pauli_channel");

/// Pauli channel with the mu-parametrized rates above.
MasterEquationModel build_pauli_model(const PauliWeights& x);

/// Single term L = sigma_z with rate gamma(t) (gamma may be negative).
MasterEquationModel build_dephasing(RateFn gamma);

// ---------------------------------------------------------------------------
// Dissipative site network
// ---------------------------------------------------------------------------

/// 0.5 [(1 - e^{-0.5 t}) 0.3 + e^{-0.3 t} sin(4.5 t)]; negative on windows.
double oscillating_network_rate(double t);

/// Symmetric coupling matrix with zero diagonal and upper-triangle entries
/// uniform on [0, max_coupling], drawn from the counter-based stream.
Eigen::MatrixXd sample_network_couplings(int n, double max_coupling, std::uint64_t seed);

/// H = sum_{i != j} omega_ij |i><j| and n^2 jump operators |i><j| (all
/// ordered pairs, diagonal included) sharing the rate c(t).
MasterEquationModel build_network_model(int n, const Eigen::MatrixXd& omega, RateFn rate);

// ---------------------------------------------------------------------------
// Baseline
// ---------------------------------------------------------------------------

/// Qubit decay |1> -> |0>: L = |0><1| with constant rate gamma >= 0.
MasterEquationModel build_amplitude_damping(double gamma);

}  // namespace roqj
