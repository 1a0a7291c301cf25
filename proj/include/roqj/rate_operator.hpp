#pragma once

#include <optional>
#include <span>
#include <vector>

#include "roqj/linalg.hpp"
#include "roqj/model.hpp"

namespace roqj {

struct Eigenpair {
  double lambda = 0.0;
  Vector vector;
};

/// Sign-split eigendecomposition of a rate operator. Eigenvalues with
/// |lambda| <= zero threshold are dropped; each list is sorted by decreasing
/// eigenvalue; eigenvectors are orthonormal with the largest-magnitude
/// component real and positive.
struct RateOperatorSpectrum {
  std::vector<Eigenpair> positive;
  std::vector<Eigenpair> negative;
  double zero_threshold = 0.0;

  Matrix reconstruct(int n) const;
  double positive_sum() const;
  double negative_abs_sum() const;
  double min_eigenvalue() const;
};

/// Forward jump: V = sqrt(lambda) |target><psi|, stored without the matrix.
struct JumpChannel {
  double lambda = 0.0;
  Vector target;
};

/// Pure states must have unit norm within this tolerance.
inline constexpr double kNormTolerance = 1e-10;

void require_normalized(const Vector& psi, const char* what);

/// <psi| L |psi>
Complex lindblad_expectation(const Matrix& op, const Vector& psi);

/// W_psi = sum_a c_a (L_a - l_a) |psi><psi| (L_a - l_a)^dag, l_a = <psi|L_a|psi>.
Matrix build_rate_operator(const GeneratorSnapshot& snap, const Vector& psi);
Matrix build_rate_operator(const MasterEquationModel& model, double t, const Vector& psi);

/// 1e-12 (1 + largest |eigenvalue|).
double default_zero_threshold(double largest_abs_eigenvalue);

/// Hermitian eigendecomposition of W split by sign. Throws ValidationError if
/// W is not Hermitian within 1e-9. Without an explicit threshold the default
/// rule above is used.
RateOperatorSpectrum spectral_split(const Matrix& w, std::optional<double> zero_threshold = std::nullopt);

/// Rotates the eigenbasis inside every degenerate cluster (eigenvalues within
/// cluster_tol of each other) so that it contains the reference states lying
/// in that eigenspace. A reference qualifies when its projection onto the
/// cluster, after removing already selected directions, has norm at least
/// 1 - overlap_tol. Selected projections are orthonormalized symmetrically and
/// the rest of the cluster is completed with any orthonormal basis. Clusters
/// of size one are left untouched. Eigenvalues inside a cluster are replaced
/// by their mean.
void align_degenerate_eigenvectors(RateOperatorSpectrum& spectrum, std::span<const Vector> references,
                                   double overlap_tol, double cluster_tol);

/// H_psi = H_S - (i/2) sum_a c_a (L_a^dag L_a - 2 conj(l_a) L_a + |l_a|^2)
Matrix effective_hamiltonian(const GeneratorSnapshot& snap, const Vector& psi);
Matrix effective_hamiltonian(const MasterEquationModel& model, double t, const Vector& psi);

/// H_psi |psi> without forming the matrix.
Vector effective_hamiltonian_action(const GeneratorSnapshot& snap, const Vector& psi);

/// (1 - i H_psi dt)|psi> normalized. Throws StepSizeError when the
/// pre-normalization norm leaves (0.5, 1.5).
Vector deterministic_step(const Vector& psi, const Matrix& h_psi, double dt);

/// Same update given H_psi |psi> directly.
Vector deterministic_step_from_action(const Vector& psi, const Vector& h_psi_psi, double dt);

}  // namespace roqj
