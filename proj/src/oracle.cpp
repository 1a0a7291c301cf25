#include "roqj/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "roqj/errors.hpp"
#include "roqj/rate_operator.hpp"

namespace roqj {

namespace {

void check_density(const Matrix& rho, int n) {
  if (rho.rows() != n || rho.cols() != n) throw DimensionError("density matrix dimension does not match the model");
  if (!is_hermitian(rho, 1e-10)) throw ValidationError("density matrix is not Hermitian");
  if (std::abs(rho.trace() - 1.0) > 1e-10) throw ValidationError("density matrix does not have unit trace");
}

Matrix rk4_step(const MasterEquationModel& model, const Matrix& rho, double t, double h) {
  const Matrix k1 = evaluate_generator(model, t, rho);
  const Matrix k2 = evaluate_generator(model, t + 0.5 * h, rho + (0.5 * h) * k1);
  const Matrix k3 = evaluate_generator(model, t + 0.5 * h, rho + (0.5 * h) * k2);
  const Matrix k4 = evaluate_generator(model, t + h, rho + h * k3);
  return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Matrix renormalize(const Matrix& rho, double t) {
  Matrix out = hermitian_part(rho);
  const double tr = out.trace().real();
  if (!(std::abs(tr - 1.0) <= 1e-6) || !out.allFinite()) {
    std::ostringstream msg;
    msg << "trace drifted to " << tr << " at t=" << t << "; reduce the oracle step";
    throw InstabilityError(msg.str());
  }
  return out / tr;
}

std::size_t step_index(double t, double dt) {
  const double ratio = t / dt;
  const double rounded = std::round(ratio);
  if (rounded < 0.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    std::ostringstream msg;
    msg << "time " << t << " is not a multiple of the oracle step " << dt;
    throw ValidationError(msg.str());
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

DensitySeries integrate_master_equation(const MasterEquationModel& model, const Matrix& rho0,
                                        const std::vector<double>& sample_times, double dt_exact) {
  if (!(dt_exact > 0.0)) throw ValidationError("oracle step must be positive");
  check_density(rho0, model.n);
  std::vector<std::size_t> wanted;
  for (double t : sample_times) wanted.push_back(step_index(t, dt_exact));
  std::vector<std::size_t> order(wanted.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wanted[a] < wanted[b]; });

  DensitySeries series;
  series.times = sample_times;
  series.states.assign(sample_times.size(), Matrix());
  Matrix rho = rho0;
  std::size_t step = 0;
  for (std::size_t idx : order) {
    while (step < wanted[idx]) {
      const double t = static_cast<double>(step) * dt_exact;
      rho = renormalize(rk4_step(model, rho, t, dt_exact), t + dt_exact);
      ++step;
    }
    series.states[idx] = rho;
  }
  return series;
}

DensitySeries integrate_master_equation(const MasterEquationModel& model, const Matrix& rho0, double t_max,
                                        double dt_exact, std::size_t report_every) {
  if (!(dt_exact > 0.0)) throw ValidationError("oracle step must be positive");
  if (report_every == 0) throw ValidationError("report interval must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(t_max / dt_exact));
  std::vector<double> times;
  for (std::size_t s = 0; s <= steps; s += report_every) times.push_back(static_cast<double>(s) * dt_exact);
  if (steps % report_every != 0) times.push_back(static_cast<double>(steps) * dt_exact);
  return integrate_master_equation(model, rho0, times, dt_exact);
}

Matrix pauli_exact(const PauliWeights& x, const Matrix& rho0, double t) {
  validate_pauli_weights(x);
  check_density(rho0, 2);
  const std::array<Matrix, 3> sigmas{pauli_x(), pauli_y(), pauli_z()};
  Matrix rho = 0.5 * Matrix::Identity(2, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    const double v0 = (rho0 * sigmas[i]).trace().real();
    const double scale = x[i] + (1.0 - x[i]) * std::exp(-2.0 * t);
    rho += 0.5 * scale * v0 * sigmas[i];
  }
  return rho;
}

bool ProbeReport::all_consistent() const {
  return std::all_of(entries.begin(), entries.end(), [](const ProbeEntry& e) { return e.consistent; });
}

ProbeReport p_divisibility_probe(const MasterEquationModel& model, const std::vector<double>& t_grid,
                                 std::size_t n_states, std::uint64_t seed) {
  ProbeReport report;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const GeneratorSnapshot snap = snapshot(model, t_grid[i]);
    ProbeEntry entry;
    entry.t = t_grid[i];
    entry.min_eigenvalue = 0.0;
    // State-independent bound on ||W_psi|| keeps the threshold fixed per t, so
    // sampling more states can never turn an inconsistent time consistent.
    double bound = 0.0;
    for (std::size_t a = 0; a < snap.operators.size(); ++a) {
      bound += 4.0 * std::abs(snap.rates[a]) * snap.operators[a].squaredNorm();
    }
    entry.zero_threshold = default_zero_threshold(bound);
    for (std::size_t k = 0; k < n_states; ++k) {
      const Vector psi = haar_state(model.n, seed, i, k);
      Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(build_rate_operator(snap, psi)), Eigen::EigenvaluesOnly);
      const auto& ev = es.eigenvalues();
      entry.min_eigenvalue = std::min(entry.min_eigenvalue, ev.minCoeff());
    }
    entry.consistent = entry.min_eigenvalue >= -entry.zero_threshold;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace roqj
