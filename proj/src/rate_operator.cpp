#include "roqj/rate_operator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "roqj/errors.hpp"

namespace roqj {

Matrix RateOperatorSpectrum::reconstruct(int n) const {
  Matrix w = Matrix::Zero(n, n);
  for (const auto& p : positive) w += p.lambda * projector(p.vector);
  for (const auto& p : negative) w += p.lambda * projector(p.vector);
  return w;
}

double RateOperatorSpectrum::positive_sum() const {
  double s = 0.0;
  for (const auto& p : positive) s += p.lambda;
  return s;
}

double RateOperatorSpectrum::negative_abs_sum() const {
  double s = 0.0;
  for (const auto& p : negative) s -= p.lambda;
  return s;
}

double RateOperatorSpectrum::min_eigenvalue() const {
  if (!negative.empty()) return negative.back().lambda;
  return 0.0;
}

void require_normalized(const Vector& psi, const char* what) {
  const double norm = psi.norm();
  if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
    std::ostringstream msg;
    msg << what << " is not normalized (norm " << norm << ")";
    throw ValidationError(msg.str());
  }
}

Complex lindblad_expectation(const Matrix& op, const Vector& psi) {
  if (op.rows() != psi.size() || op.cols() != psi.size()) {
    throw DimensionError("operator and state dimensions differ");
  }
  return psi.dot(op * psi);
}

Matrix build_rate_operator(const GeneratorSnapshot& snap, const Vector& psi) {
  const int n = snap.dim();
  if (psi.size() != n) throw DimensionError("state dimension does not match the model");
  require_normalized(psi, "state");
  Matrix w = Matrix::Zero(n, n);
  Vector u(n);
  for (std::size_t a = 0; a < snap.operators.size(); ++a) {
    const double c = snap.rates[a];
    if (c == 0.0) continue;
    u.noalias() = snap.operators[a] * psi;
    const Complex ell = psi.dot(u);
    u -= ell * psi;
    w.noalias() += c * (u * u.adjoint());
  }
  return w;
}

Matrix build_rate_operator(const MasterEquationModel& model, double t, const Vector& psi) {
  if (psi.size() != model.n) throw DimensionError("state dimension does not match the model");
  return build_rate_operator(snapshot(model, t), psi);
}

double default_zero_threshold(double largest_abs_eigenvalue) {
  return 1e-12 * (1.0 + largest_abs_eigenvalue);
}

RateOperatorSpectrum spectral_split(const Matrix& w, std::optional<double> zero_threshold) {
  if (w.rows() != w.cols()) throw DimensionError("rate operator must be square");
  if (!is_hermitian(w, 1e-9)) throw ValidationError("rate operator is not Hermitian within 1e-9");

  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(w));
  if (es.info() != Eigen::Success) throw Error("Hermitian eigensolver did not converge");
  const Eigen::VectorXd& values = es.eigenvalues();
  const Eigen::Index n = values.size();

  RateOperatorSpectrum spectrum;
  const double largest = n == 0 ? 0.0 : std::max(std::abs(values(0)), std::abs(values(n - 1)));
  spectrum.zero_threshold = zero_threshold.value_or(default_zero_threshold(largest));

  // Ascending order from the solver: walk down for the positive list and up
  // from the zero crossing for the negative list so both come out descending.
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (values(i) <= spectrum.zero_threshold) break;
    Vector v = es.eigenvectors().col(i);
    fix_phase(v);
    spectrum.positive.push_back({values(i), std::move(v)});
  }
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (values(i) >= -spectrum.zero_threshold) continue;
    Vector v = es.eigenvectors().col(i);
    fix_phase(v);
    spectrum.negative.push_back({values(i), std::move(v)});
  }
  return spectrum;
}

namespace {

/// Orthonormal basis of the column space of m, keeping directions whose
/// squared singular value exceeds one half (columns of m are projections of
/// unit vectors, so kept directions are well separated from dropped ones).
Matrix dominant_column_basis(const Matrix& m) {
  if (m.cols() == 0) return m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.adjoint() * m);
  std::vector<Vector> cols;
  for (Eigen::Index i = es.eigenvalues().size() - 1; i >= 0; --i) {
    const double s2 = es.eigenvalues()(i);
    if (s2 <= 0.5) break;
    cols.push_back(m * es.eigenvectors().col(i) / std::sqrt(s2));
  }
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = cols[k];
  return out;
}

void align_list(std::vector<Eigenpair>& pairs, std::span<const Vector> references, double overlap_tol,
                double cluster_tol) {
  std::size_t begin = 0;
  while (begin < pairs.size()) {
    std::size_t end = begin + 1;
    while (end < pairs.size() && std::abs(pairs[end - 1].lambda - pairs[end].lambda) <= cluster_tol) ++end;
    const std::size_t d = end - begin;
    if (d >= 2) {
      const Eigen::Index n = pairs[begin].vector.size();
      Matrix u(n, static_cast<Eigen::Index>(d));
      double mean = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        u.col(static_cast<Eigen::Index>(k)) = pairs[begin + k].vector;
        mean += pairs[begin + k].lambda;
      }
      mean /= static_cast<double>(d);

      std::vector<Vector> raw;       // projections of accepted references
      std::vector<Vector> residual;  // Gram-Schmidt basis used for acceptance
      for (const Vector& r : references) {
        if (raw.size() == d) break;
        if (r.size() != n) continue;
        Vector p = u * (u.adjoint() * r);
        Vector v = p;
        for (const Vector& q : residual) v -= q * q.dot(v);
        const double norm = v.norm();
        if (norm >= 1.0 - overlap_tol) {
          raw.push_back(std::move(p));
          residual.push_back(v / norm);
        }
      }

      Matrix aligned(n, 0);
      if (!raw.empty()) {
        Matrix p(n, static_cast<Eigen::Index>(raw.size()));
        for (std::size_t k = 0; k < raw.size(); ++k) p.col(static_cast<Eigen::Index>(k)) = raw[k];
        Eigen::SelfAdjointEigenSolver<Matrix> gram(p.adjoint() * p);
        const Eigen::VectorXd inv_sqrt = gram.eigenvalues().cwiseSqrt().cwiseInverse();
        aligned = p * (gram.eigenvectors() * inv_sqrt.cast<Complex>().asDiagonal() * gram.eigenvectors().adjoint());
      }
      const Matrix rest = dominant_column_basis(u - aligned * (aligned.adjoint() * u));

      std::size_t k = 0;
      for (Eigen::Index c = 0; c < aligned.cols() && k < d; ++c, ++k) {
        Vector v = aligned.col(c);
        fix_phase(v);
        pairs[begin + k] = {mean, std::move(v)};
      }
      for (Eigen::Index c = 0; c < rest.cols() && k < d; ++c, ++k) {
        Vector v = rest.col(c);
        fix_phase(v);
        pairs[begin + k] = {mean, std::move(v)};
      }
    }
    begin = end;
  }
}

}  // namespace

void align_degenerate_eigenvectors(RateOperatorSpectrum& spectrum, std::span<const Vector> references,
                                   double overlap_tol, double cluster_tol) {
  align_list(spectrum.positive, references, overlap_tol, cluster_tol);
  align_list(spectrum.negative, references, overlap_tol, cluster_tol);
}

Vector effective_hamiltonian_action(const GeneratorSnapshot& snap, const Vector& psi) {
  if (psi.size() != snap.dim()) throw DimensionError("state dimension does not match the model");
  Vector out = snap.hamiltonian * psi;
  Vector lpsi(psi.size());
  for (std::size_t a = 0; a < snap.operators.size(); ++a) {
    const double c = snap.rates[a];
    if (c == 0.0) continue;
    const Matrix& l = snap.operators[a];
    lpsi.noalias() = l * psi;
    const Complex ell = psi.dot(lpsi);
    Vector term = l.adjoint() * lpsi - 2.0 * std::conj(ell) * lpsi + std::norm(ell) * psi;
    out -= (0.5 * kI * c) * term;
  }
  return out;
}

Matrix effective_hamiltonian(const GeneratorSnapshot& snap, const Vector& psi) {
  const int n = snap.dim();
  if (psi.size() != n) throw DimensionError("state dimension does not match the model");
  require_normalized(psi, "state");
  Matrix h = snap.hamiltonian;
  const Matrix id = Matrix::Identity(n, n);
  for (std::size_t a = 0; a < snap.operators.size(); ++a) {
    const double c = snap.rates[a];
    if (c == 0.0) continue;
    const Matrix& l = snap.operators[a];
    const Complex ell = psi.dot(l * psi);
    h -= (0.5 * kI * c) * (l.adjoint() * l - 2.0 * std::conj(ell) * l + std::norm(ell) * id);
  }
  return h;
}

Matrix effective_hamiltonian(const MasterEquationModel& model, double t, const Vector& psi) {
  if (psi.size() != model.n) throw DimensionError("state dimension does not match the model");
  return effective_hamiltonian(snapshot(model, t), psi);
}

Vector deterministic_step_from_action(const Vector& psi, const Vector& h_psi_psi, double dt) {
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  if (h_psi_psi.size() != psi.size()) throw DimensionError("H_psi |psi> has the wrong dimension");
  Vector phi = psi - (kI * dt) * h_psi_psi;
  const double norm = phi.norm();
  if (!(norm > 0.5 && norm < 1.5)) {
    std::ostringstream msg;
    msg << "no-jump norm " << norm << " left (0.5, 1.5); reduce dt";
    throw StepSizeError(msg.str());
  }
  return phi / norm;
}

Vector deterministic_step(const Vector& psi, const Matrix& h_psi, double dt) {
  if (h_psi.rows() != psi.size() || h_psi.cols() != psi.size()) {
    throw DimensionError("effective Hamiltonian and state dimensions differ");
  }
  return deterministic_step_from_action(psi, h_psi * psi, dt);
}

}  // namespace roqj
