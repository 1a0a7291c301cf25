#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>

namespace roqj {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// |v><v|
Matrix projector(const Vector& v);

/// Largest absolute entry.
double max_abs(const Matrix& m);

bool is_hermitian(const Matrix& m, double tol);

/// (m + m^dagger) / 2
Matrix hermitian_part(const Matrix& m);

/// Sum of absolute eigenvalues of a Hermitian matrix.
double trace_norm(const Matrix& hermitian);

/// Rotates the global phase so that the largest-magnitude component is real
/// and positive. Ties go to the lowest index.
void fix_phase(Vector& v);

/// Haar-random pure state: a normalized complex Gaussian vector whose
/// components are drawn from the counter-based stream (seed, key_a, key_b).
Vector haar_state(int n, std::uint64_t seed, std::uint64_t key_a, std::uint64_t key_b);

/// Haar-random density matrix of full rank: eigenvalues from a flat Dirichlet
/// draw, eigenvectors from a Haar unitary. Used by property tests.
Matrix random_density(int n, std::uint64_t seed, std::uint64_t key);

Matrix pauli_x();
Matrix pauli_y();
Matrix pauli_z();

Vector basis_state(int n, int k);

}  // namespace roqj
