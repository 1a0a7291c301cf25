#include "roqj/model.hpp"

#include <cmath>
#include <memory>
#include <sstream>

#include "roqj/errors.hpp"
#include "roqj/rng.hpp"

namespace roqj {

GeneratorSnapshot snapshot(const MasterEquationModel& model, double t) {
  GeneratorSnapshot snap;
  snap.t = t;
  snap.hamiltonian = model.hamiltonian ? model.hamiltonian(t) : Matrix::Zero(model.n, model.n);
  if (snap.hamiltonian.rows() != model.n || snap.hamiltonian.cols() != model.n) {
    throw DimensionError("hamiltonian of model '" + model.name + "' has the wrong shape");
  }
  if (!is_hermitian(snap.hamiltonian, 1e-10)) {
    std::ostringstream msg;
    msg << "hamiltonian of model '" << model.name << "' is not Hermitian at t=" << t;
    throw ValidationError(msg.str());
  }
  snap.operators.reserve(model.terms.size());
  snap.rates.reserve(model.terms.size());
  for (const auto& term : model.terms) {
    Matrix op = term.op(t);
    if (op.rows() != model.n || op.cols() != model.n) {
      throw DimensionError("operator '" + term.label + "' has the wrong shape");
    }
    const double rate = term.rate(t);
    if (!std::isfinite(rate)) {
      std::ostringstream msg;
      msg << "rate of term '" << term.label << "' is not finite at t=" << t;
      throw ValidationError(msg.str());
    }
    snap.operators.push_back(std::move(op));
    snap.rates.push_back(rate);
  }
  return snap;
}

Matrix evaluate_generator(const GeneratorSnapshot& snap, const Matrix& rho) {
  if (rho.rows() != snap.dim() || rho.cols() != snap.dim()) {
    throw DimensionError("density matrix dimension does not match the model");
  }
  const Matrix& h = snap.hamiltonian;
  Matrix out = -kI * (h * rho - rho * h);
  for (std::size_t a = 0; a < snap.operators.size(); ++a) {
    const double c = snap.rates[a];
    if (c == 0.0) continue;
    const Matrix& l = snap.operators[a];
    const Matrix ldl = l.adjoint() * l;
    out += c * (l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl));
  }
  return out;
}

Matrix evaluate_generator(const MasterEquationModel& model, double t, const Matrix& rho) {
  if (rho.rows() != model.n || rho.cols() != model.n) {
    throw DimensionError("density matrix dimension does not match the model");
  }
  return evaluate_generator(snapshot(model, t), rho);
}

void validate_pauli_weights(const PauliWeights& x) {
  double sum = 0.0;
  for (double xi : x) {
    if (!std::isfinite(xi) || xi < 0.0) throw ValidationError("pauli weights must be finite and non-negative");
    sum += xi;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("pauli weights must sum to 1");
}

double pauli_mu(const PauliWeights& x, int i, double t) {
  validate_pauli_weights(x);
  if (i < 1 || i > 3) throw ValidationError("pauli index must be 1, 2 or 3");
  const double xi = x[static_cast<std::size_t>(i - 1)];
  const double others = 1.0 - xi;
  if (others == 0.0) return 0.0;
  if (xi == 0.0) return -1.0;
  return -others / (others + std::exp(2.0 * t) * xi);
}

std::array<double, 3> pauli_rates(const PauliWeights& x, double t) {
  const double m1 = pauli_mu(x, 1, t);
  const double m2 = pauli_mu(x, 2, t);
  const double m3 = pauli_mu(x, 3, t);
  return {m1 - m2 - m3, m2 - m1 - m3, m3 - m1 - m2};
}

MasterEquationModel build_pauli_channel_model(std::function<std::array<double, 3>(double)> gammas,
                                              std::string name) {
  MasterEquationModel model;
  model.name = std::move(name);
  model.n = 2;
  model.hamiltonian = [](double) -> Matrix { return Matrix::Zero(2, 2); };
  const std::array<Matrix, 3> sigmas{pauli_x(), pauli_y(), pauli_z()};
  const std::array<const char*, 3> labels{"sigma_x", "sigma_y", "sigma_z"};
  for (std::size_t k = 0; k < 3; ++k) {
    Matrix s = sigmas[k];
    model.terms.push_back(LindbladTerm{
        labels[k], [s](double) { return s; }, [gammas, k](double t) { return 0.5 * gammas(t)[k]; }});
  }
  return model;
}

MasterEquationModel build_pauli_model(const PauliWeights& x) {
  validate_pauli_weights(x);
  return build_pauli_channel_model([x](double t) { return pauli_rates(x, t); }, "pauli");
}

MasterEquationModel build_dephasing(RateFn gamma) {
  MasterEquationModel model;
  model.name = "dephasing";
  model.n = 2;
  model.hamiltonian = [](double) -> Matrix { return Matrix::Zero(2, 2); };
  const Matrix z = pauli_z();
  model.terms.push_back(LindbladTerm{"sigma_z", [z](double) { return z; }, std::move(gamma)});
  return model;
}

double oscillating_network_rate(double t) {
  return 0.5 * ((1.0 - std::exp(-0.5 * t)) * 0.3 + std::exp(-0.3 * t) * std::sin(4.5 * t));
}

Eigen::MatrixXd sample_network_couplings(int n, double max_coupling, std::uint64_t seed) {
  if (n < 1) throw ValidationError("network size must be positive");
  const CounterRng rng(seed);
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double w = max_coupling * rng.uniform({0x0e6aULL, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
      omega(i, j) = w;
      omega(j, i) = w;
    }
  return omega;
}

MasterEquationModel build_network_model(int n, const Eigen::MatrixXd& omega, RateFn rate) {
  if (n < 1) throw ValidationError("network size must be positive");
  if (omega.rows() != n || omega.cols() != n) throw DimensionError("coupling matrix must be n x n");
  if (!omega.allFinite()) throw ValidationError("coupling matrix has non-finite entries");
  if ((omega - omega.transpose()).cwiseAbs().maxCoeff() > 0.0) {
    throw ValidationError("coupling matrix must be symmetric");
  }
  for (int i = 0; i < n; ++i) {
    if (omega(i, i) != 0.0) throw ValidationError("coupling matrix must have a zero diagonal");
  }

  MasterEquationModel model;
  model.name = "network";
  model.n = n;
  const Matrix h = omega.cast<Complex>();
  model.hamiltonian = [h](double) { return h; };
  auto shared_rate = std::make_shared<RateFn>(std::move(rate));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Matrix op = Matrix::Zero(n, n);
      op(i, j) = 1.0;
      model.terms.push_back(LindbladTerm{"|" + std::to_string(i) + "><" + std::to_string(j) + "|",
                                         [op](double) { return op; },
                                         [shared_rate](double t) { return (*shared_rate)(t); }});
    }
  return model;
}

MasterEquationModel build_amplitude_damping(double gamma) {
  if (!std::isfinite(gamma) || gamma < 0.0) throw ValidationError("amplitude damping rate must be non-negative");
  MasterEquationModel model;
  model.name = "amplitude_damping";
  model.n = 2;
  model.hamiltonian = [](double) -> Matrix { return Matrix::Zero(2, 2); };
  Matrix lower = Matrix::Zero(2, 2);
  lower(0, 1) = 1.0;
  model.terms.push_back(LindbladTerm{"|0><1|", [lower](double) { return lower; }, [gamma](double) { return gamma; }});
  return model;
}

}  // namespace roqj
