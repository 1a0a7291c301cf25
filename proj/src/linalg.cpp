#include "roqj/linalg.hpp"

#include <cmath>

#include "roqj/errors.hpp"
#include "roqj/rng.hpp"

namespace roqj {

Matrix projector(const Vector& v) { return v * v.adjoint(); }

double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

bool is_hermitian(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return max_abs(m - m.adjoint()) <= tol;
}

Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

double trace_norm(const Matrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

void fix_phase(Vector& v) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // Strict comparison with a small slack so that near-ties resolve to the
    // lowest index on every platform.
    const double a = std::abs(v(i));
    if (a > best_abs * (1.0 + 1e-12)) {
      best_abs = a;
      best = i;
    }
  }
  if (best_abs > 0.0) {
    v *= std::conj(v(best)) / best_abs;
    v(best) = v(best).real();  // drop the rounding residue in the imaginary part
  }
}

Vector haar_state(int n, std::uint64_t seed, std::uint64_t key_a, std::uint64_t key_b) {
  const CounterRng rng(seed);
  Vector v(n);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    v(i) = Complex(rng.normal({key_a, key_b, 2 * ui}), rng.normal({key_a, key_b, 2 * ui + 1}));
  }
  return v / v.norm();
}

Matrix random_density(int n, std::uint64_t seed, std::uint64_t key) {
  const CounterRng rng(seed);
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto idx = static_cast<std::uint64_t>(i * n + j);
      g(i, j) = Complex(rng.normal({key, 0, idx}), rng.normal({key, 1, idx}));
    }
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    w(i) = -std::log(1.0 - rng.uniform({key, 2, static_cast<std::uint64_t>(i)}));
  }
  w /= w.sum();
  return q * w.cast<Complex>().asDiagonal() * q.adjoint();
}

Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

Matrix pauli_y() {
  Matrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}

Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

Vector basis_state(int n, int k) {
  if (k < 0 || k >= n) throw ValidationError("basis index " + std::to_string(k) + " out of range for dimension " + std::to_string(n));
  Vector v = Vector::Zero(n);
  v(k) = 1.0;
  return v;
}

}  // namespace roqj
