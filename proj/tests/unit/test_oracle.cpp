#include <doctest.h>

#include <cmath>

#include "roqj/analysis.hpp"
#include "roqj/errors.hpp"
#include "roqj/oracle.hpp"
#include "support.hpp"

using namespace roqj;
using namespace roqj::test;

namespace {

std::array<double, 3> bloch(const Matrix& rho) {
  return {(pauli_x() * rho).trace().real(), (pauli_y() * rho).trace().real(), (pauli_z() * rho).trace().real()};
}

/// Composite Simpson integral of gamma_j + gamma_k over [0, t].
double pair_integral(const PauliWeights& x, int i, double t) {
  const int m = 2000;
  const double h = t / m;
  double sum = 0.0;
  for (int s = 0; s <= m; ++s) {
    const auto g = pauli_rates(x, s * h);
    const double f = g[static_cast<std::size_t>((i + 1) % 3)] + g[static_cast<std::size_t>((i + 2) % 3)];
    sum += (s == 0 || s == m ? 1.0 : (s % 2 ? 4.0 : 2.0)) * f;
  }
  return sum * h / 3.0;
}

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("zero generator keeps the state") {
    const Matrix rho0 = random_density(3, 1, 0);
    const auto net = build_network_model(3, Eigen::MatrixXd::Zero(3, 3), [](double) { return 0.0; });
    const auto series = integrate_master_equation(net, rho0, 1.0, 0.1);
    REQUIRE(series.states.size() == 11);
    for (const auto& rho : series.states) CHECK(max_abs(rho - rho0) < 1e-15);
  }

  TEST_CASE("amplitude damping decays exponentially") {
    const double gamma = 1.3;
    const Matrix rho0 = random_density(2, 2, 0);
    const auto series = integrate_master_equation(build_amplitude_damping(gamma), rho0, 3.0, 1e-3, 100);
    for (std::size_t k = 0; k < series.times.size(); ++k) {
      const double t = series.times[k];
      CHECK(std::abs(series.states[k](1, 1).real() - rho0(1, 1).real() * std::exp(-gamma * t)) < 1e-8);
      CHECK(std::abs(series.states[k](0, 1) - rho0(0, 1) * std::exp(-0.5 * gamma * t)) < 1e-8);
      CHECK(std::abs(series.states[k].trace() - 1.0) < 1e-12);
    }
  }

  TEST_CASE("closed form matches the integrated pair rates") {
    for (std::uint64_t k = 0; k < 10; ++k) {
      const PauliWeights x = random_weights(k + 40);
      const Matrix rho0 = random_density(2, 3, k);
      const double t = 0.3 + random_time(k);
      const auto v0 = bloch(rho0);
      const auto v = bloch(pauli_exact(x, rho0, t));
      for (int i = 0; i < 3; ++i) {
        const double expected = std::exp(-pair_integral(x, i, t)) * v0[static_cast<std::size_t>(i)];
        CHECK(v[static_cast<std::size_t>(i)] == doctest::Approx(expected).epsilon(1e-9).scale(1.0));
      }
    }
  }

  TEST_CASE("closed form for the eternal weights") {
    const PauliWeights x{0.5, 0.5, 0.0};
    const Matrix rho0 = random_density(2, 4, 0);
    const auto v0 = bloch(rho0);
    for (double t : {0.0, 0.5, 1.5, 3.0}) {
      const Matrix rho = pauli_exact(x, rho0, t);
      const auto v = bloch(rho);
      CHECK(v[0] == doctest::Approx(std::exp(-t) * std::cosh(t) * v0[0]).epsilon(1e-14));
      CHECK(v[0] == doctest::Approx(0.5 * (1.0 + std::exp(-2.0 * t)) * v0[0]).epsilon(1e-14));
      CHECK(v[2] == doctest::Approx(std::exp(-2.0 * t) * v0[2]).epsilon(1e-14));
    }
    CHECK(max_abs(pauli_exact(x, rho0, 0.0) - rho0) < 1e-15);
    const Matrix plus = projector(plus_state());
    CHECK(pauli_exact(x, plus, 2.0)(0, 1).real() == doctest::Approx(0.5 * std::exp(-2.0) * std::cosh(2.0)));
  }

  TEST_CASE("integrator and closed form agree on the Pauli family") {
    for (std::uint64_t k = 0; k < 6; ++k) {
      const PauliWeights x = k == 0 ? PauliWeights{0.5, 0.5, 0.0} : random_weights(k + 60);
      const Matrix rho0 = random_density(2, 5, k);
      const auto series = integrate_master_equation(build_pauli_model(x), rho0, 5.0, 1e-3, 500);
      for (std::size_t s = 0; s < series.times.size(); ++s) {
        CHECK(trace_distance(series.states[s], pauli_exact(x, rho0, series.times[s])) <= 1e-8);
      }
    }
  }

  TEST_CASE("RK4 converges at fourth order") {
    const auto model = network7();
    const Matrix rho0 = projector(basis_state(7, 1));
    auto final_state = [&](double dt) { return integrate_master_equation(model, rho0, 2.0, dt).states.back(); };
    const Matrix a = final_state(0.1);
    const Matrix b = final_state(0.05);
    const Matrix c = final_state(0.025);
    const double ratio = max_abs(a - b) / max_abs(b - c);
    CHECK(ratio == doctest::Approx(16.0).epsilon(0.1));
  }

  TEST_CASE("reports at requested times only") {
    const auto series = integrate_master_equation(build_amplitude_damping(1.0), projector(basis_state(2, 1)),
                                                  std::vector<double>{0.0, 0.25, 1.0}, 0.01);
    REQUIRE(series.times.size() == 3);
    CHECK(series.times[1] == 0.25);
    CHECK(series.states[2](1, 1).real() == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
    CHECK_THROWS_AS(integrate_master_equation(build_amplitude_damping(1.0), projector(basis_state(2, 1)),
                                              std::vector<double>{0.0, 0.015}, 0.01),
                    ValidationError);
  }

  TEST_CASE("runaway integration is reported") {
    CHECK_THROWS_AS(integrate_master_equation(build_amplitude_damping(1e6), random_density(2, 6, 0), 10.0, 1.0),
                    InstabilityError);
  }

  TEST_CASE("probe finds no violation for the eternal model") {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(0.25 * i);
    const auto report = p_divisibility_probe(build_pauli_model({0.5, 0.5, 0.0}), grid, 50, 1);
    CHECK(report.all_consistent());
  }

  TEST_CASE("probe flags the network exactly where the rate is negative") {
    const auto model = network7();
    std::vector<double> grid;
    for (double t = 0.05; t < 10.0; t += 0.2) {
      if (std::abs(oscillating_network_rate(t)) > 1e-3) grid.push_back(t);
    }
    const auto report = p_divisibility_probe(model, grid, 5, 2);
    for (const auto& e : report.entries) CHECK(e.consistent == (oscillating_network_rate(e.t) > 0.0));
    CHECK_FALSE(report.all_consistent());
  }

  TEST_CASE("probe of a zero generator is consistent") {
    const auto report = p_divisibility_probe(build_dephasing([](double) { return 0.0; }), {0.0, 1.0}, 10, 3);
    CHECK(report.all_consistent());
    for (const auto& e : report.entries) CHECK(e.min_eigenvalue == 0.0);
  }

  TEST_CASE("more probe states never turn a violation into consistency") {
    const auto model = build_pauli_channel_model([](double t) { return std::array<double, 3>{1.0, -0.6 + 0.2 * t, 0.8}; });
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(0.5 * i);
    for (std::size_t n : {1, 3, 10}) {
      const auto few = p_divisibility_probe(model, grid, n, 9);
      const auto many = p_divisibility_probe(model, grid, 4 * n, 9);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(many.entries[i].min_eigenvalue <= few.entries[i].min_eigenvalue);
        if (!few.entries[i].consistent) CHECK_FALSE(many.entries[i].consistent);
      }
    }
  }
}
