#pragma once

// Shared fixtures and brute-force references for the unit tests.

#include <cmath>
#include <vector>

#include "roqj/linalg.hpp"
#include "roqj/model.hpp"

namespace roqj::test {

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-stacking superoperator, vec(A X B) = (B^T kron A) vec(X).
inline Matrix liouvillian(const GeneratorSnapshot& s) {
  const int n = s.dim();
  const Matrix id = Matrix::Identity(n, n);
  Matrix sup = -kI * (kron(id, s.hamiltonian) - kron(s.hamiltonian.transpose(), id));
  for (std::size_t a = 0; a < s.operators.size(); ++a) {
    const Matrix& l = s.operators[a];
    const Matrix ldl = l.adjoint() * l;
    sup += s.rates[a] * (kron(l.conjugate(), l) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id));
  }
  return sup;
}

inline Matrix apply_superop(const Matrix& sup, const Matrix& rho) {
  const Eigen::Index n = rho.rows();
  const Vector v = Eigen::Map<const Vector>(rho.data(), n * n);
  const Vector out = sup * v;
  return Eigen::Map<const Matrix>(out.data(), n, n);
}

inline Vector plus_state() {
  Vector v(2);
  v << 1.0, 1.0;
  return v / std::sqrt(2.0);
}

inline Vector minus_state() {
  Vector v(2);
  v << 1.0, -1.0;
  return v / std::sqrt(2.0);
}

inline PauliWeights random_weights(std::uint64_t key) {
  const Vector g = haar_state(3, 0x9a11, key, 1);
  PauliWeights x{std::norm(g(0)), std::norm(g(1)), std::norm(g(2))};
  const double s = x[0] + x[1] + x[2];
  for (double& xi : x) xi /= s;
  return x;
}

inline MasterEquationModel network7() {
  return build_network_model(7, sample_network_couplings(7, 0.6, 7), oscillating_network_rate);
}

/// The builtin models exercised by the property tests.
inline std::vector<MasterEquationModel> builtin_models() {
  return {build_pauli_model({0.5, 0.5, 0.0}), build_pauli_model({0.2, 0.3, 0.5}), network7(),
          build_amplitude_damping(1.0), build_dephasing(oscillating_network_rate)};
}

/// Random time in [0, 5) for case k.
inline double random_time(std::uint64_t k) { return 5.0 * std::norm(haar_state(2, 0x71e, k, 2)(0)); }

}  // namespace roqj::test
