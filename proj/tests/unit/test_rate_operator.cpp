#include <doctest.h>

#include <cmath>

#include "roqj/errors.hpp"
#include "roqj/rate_operator.hpp"
#include "support.hpp"

using namespace roqj;
using namespace roqj::test;

namespace {

double min_pair(const std::array<double, 3>& g) { return std::min({g[0] + g[1], g[0] + g[2], g[1] + g[2]}); }

Vector random_state(int n, std::uint64_t key) { return haar_state(n, 0x5eed, key, 0); }

}  // namespace

TEST_SUITE("rate_operator") {
  TEST_CASE("Lindblad expectations") {
    CHECK(std::abs(lindblad_expectation(pauli_z(), basis_state(2, 0)) - 1.0) < 1e-15);
    CHECK(std::abs(lindblad_expectation(pauli_x(), plus_state()) - 1.0) < 1e-15);
    CHECK(std::abs(lindblad_expectation(pauli_y(), plus_state())) < 1e-15);
    CHECK_THROWS_AS(lindblad_expectation(pauli_x(), basis_state(3, 0)), DimensionError);
  }

  TEST_CASE("eternal model at |+> has a single channel to |->") {
    // Jumps |+> -> |-> at rate lambda shrink Re rho_01 at 2 lambda, which must
    // equal gamma_2 + gamma_3 = 1 - tanh t.
    const auto model = build_pauli_model({0.5, 0.5, 0.0});
    for (double t : {0.0, 0.3, 1.0, 2.5}) {
      const Matrix w = build_rate_operator(model, t, plus_state());
      const Matrix expected = 0.5 * (1.0 - std::tanh(t)) * projector(minus_state());
      CHECK(max_abs(w - expected) < 1e-14);
    }
  }

  TEST_CASE("eternal model at |0> feeds |1> at (gamma_1 + gamma_2) / 2") {
    const Matrix w = build_rate_operator(build_pauli_model({0.5, 0.5, 0.0}), 0.0, basis_state(2, 0));
    CHECK(max_abs(w - projector(basis_state(2, 1))) < 1e-14);
  }

  TEST_CASE("zero rates give a zero rate operator") {
    const Matrix w = build_rate_operator(build_dephasing([](double) { return 0.0; }), 0.0, plus_state());
    CHECK(max_abs(w) == 0.0);
  }

  TEST_CASE("rate operator requires a normalized state") {
    CHECK_THROWS_AS(build_rate_operator(build_amplitude_damping(1.0), 0.0, Vector::Ones(2)), ValidationError);
  }

  TEST_CASE("zero mode and Hermiticity on random cases") {
    std::uint64_t key = 0;
    for (const auto& model : builtin_models()) {
      for (int k = 0; k < 20; ++k, ++key) {
        const Vector psi = random_state(model.n, key);
        const Matrix w = build_rate_operator(model, random_time(key), psi);
        CHECK(is_hermitian(w, 1e-10));
        CHECK(std::abs(psi.dot(w * psi)) < 1e-10);
        const double w_norm = w.operatorNorm();
        CHECK((w * psi).norm() <= 1e-9 * (1.0 + w_norm));
      }
    }
  }

  TEST_CASE("spectral split reconstructs W") {
    std::uint64_t key = 100;
    for (const auto& model : builtin_models()) {
      for (int k = 0; k < 20; ++k, ++key) {
        const Vector psi = random_state(model.n, key);
        const Matrix w = build_rate_operator(model, random_time(key), psi);
        const auto spec = spectral_split(w);
        CHECK(max_abs(spec.reconstruct(model.n) - w) <= 1e-9);
        for (std::size_t i = 1; i < spec.positive.size(); ++i) CHECK(spec.positive[i - 1].lambda >= spec.positive[i].lambda);
        for (std::size_t i = 1; i < spec.negative.size(); ++i) CHECK(spec.negative[i - 1].lambda >= spec.negative[i].lambda);
        std::vector<Vector> all;
        for (const auto& p : spec.positive) all.push_back(p.vector);
        for (const auto& p : spec.negative) all.push_back(p.vector);
        for (std::size_t a = 0; a < all.size(); ++a) {
          for (std::size_t b = 0; b < all.size(); ++b) {
            CHECK(std::abs(all[a].dot(all[b]) - (a == b ? 1.0 : 0.0)) < 1e-10);
          }
          // Near-ties resolve to the lowest index, so look for any component
          // of maximal magnitude that is real and positive.
          const double largest = all[a].cwiseAbs().maxCoeff();
          bool fixed = false;
          for (Eigen::Index i = 0; i < all[a].size(); ++i) {
            const Complex c = all[a](i);
            if (std::abs(c) >= largest * (1.0 - 1e-12) && c.imag() == 0.0 && c.real() > 0.0) fixed = true;
          }
          CHECK(fixed);
        }
      }
    }
  }

  TEST_CASE("rank-one and zero inputs") {
    const double lambda = 1.0 - std::tanh(1.0);
    const auto spec = spectral_split(lambda * projector(minus_state()));
    REQUIRE(spec.positive.size() == 1);
    CHECK(spec.negative.empty());
    CHECK(spec.positive[0].lambda == doctest::Approx(lambda).epsilon(1e-14));
    CHECK(std::abs(std::abs(spec.positive[0].vector.dot(minus_state())) - 1.0) < 1e-14);

    const auto empty = spectral_split(Matrix::Zero(3, 3));
    CHECK(empty.positive.empty());
    CHECK(empty.negative.empty());
  }

  TEST_CASE("negative dephasing gives one negative channel along (sigma_z - l) psi") {
    const double gamma = -0.4;
    const auto model = build_dephasing([gamma](double) { return gamma; });
    Vector psi(2);
    psi << Complex(0.6, 0.0), Complex(0.0, 0.8);
    const auto spec = spectral_split(build_rate_operator(model, 0.0, psi));
    REQUIRE(spec.negative.size() == 1);
    CHECK(spec.positive.empty());
    CHECK(spec.negative[0].lambda == doctest::Approx(gamma * 4.0 * 0.36 * 0.64).epsilon(1e-13));
    const double l = std::norm(psi(0)) - std::norm(psi(1));
    Vector phi = (pauli_z() - l * Matrix::Identity(2, 2)) * psi;
    phi.normalize();
    CHECK(std::abs(std::abs(phi.dot(spec.negative[0].vector)) - 1.0) < 1e-13);
  }

  TEST_CASE("threshold drops tiny eigenvalues and non-Hermitian input is rejected") {
    Matrix w = Matrix::Zero(2, 2);
    w(0, 0) = 1e-14;
    w(1, 1) = -0.5;
    const auto spec = spectral_split(w);
    CHECK(spec.positive.empty());
    CHECK(spec.negative.size() == 1);
    CHECK(spectral_split(w, 1.0).negative.empty());
    CHECK(default_zero_threshold(0.0) == 1e-12);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 1) = 1.0;
    CHECK_THROWS_AS(spectral_split(bad), ValidationError);
  }

  TEST_CASE("qubit Pauli channels: W at psi is half the weighted Bloch deficit") {
    // For a Bloch vector n, W = (1/2) sum_k gamma_k (1 - n_k^2) |psi_perp><psi_perp|,
    // whose minimum over states is (1/2) min_{i != j}(gamma_i + gamma_j).
    const Matrix sigma[3] = {pauli_x(), pauli_y(), pauli_z()};
    for (std::uint64_t k = 0; k < 100; ++k) {
      const Vector g = haar_state(3, 0xabc, k, 0);
      const std::array<double, 3> gammas{4.0 * g(0).real(), 4.0 * g(1).real(), 4.0 * g(2).real()};
      const auto model = build_pauli_channel_model([gammas](double) { return gammas; });
      const Vector psi = random_state(2, k);
      double deficit = 0.0;
      for (int i = 0; i < 3; ++i) {
        const double n_i = psi.dot(sigma[i] * psi).real();
        deficit += gammas[static_cast<std::size_t>(i)] * (1.0 - n_i * n_i);
      }
      const Matrix w = build_rate_operator(model, 0.0, psi);
      CHECK(w.trace().real() == doctest::Approx(0.5 * deficit).epsilon(1e-12).scale(1.0));

      // The extremal state sits on the axis of the largest rate.
      int axis = 0;
      for (int i = 1; i < 3; ++i)
        if (gammas[static_cast<std::size_t>(i)] > gammas[static_cast<std::size_t>(axis)]) axis = i;
      Eigen::SelfAdjointEigenSolver<Matrix> es(sigma[axis]);
      const Vector extremal = es.eigenvectors().col(1);
      const auto spec = spectral_split(build_rate_operator(model, 0.0, extremal));
      const double expected_min = std::min(0.0, 0.5 * min_pair(gammas));
      CHECK(spec.min_eigenvalue() == doctest::Approx(expected_min).epsilon(1e-12).scale(1.0));
      CHECK((spec.min_eigenvalue() >= -1e-9) == (min_pair(gammas) >= -1e-9));
    }
  }

  TEST_CASE("the mu family never produces a negative eigenvalue") {
    for (std::uint64_t k = 0; k < 100; ++k) {
      const PauliWeights x = random_weights(k);
      const double t = random_time(k);
      const auto spec = spectral_split(build_rate_operator(build_pauli_model(x), t, random_state(2, k + 7)));
      CHECK(spec.min_eigenvalue() >= -1e-9);
      CHECK(min_pair(pauli_rates(x, t)) >= -1e-9);
    }
  }

  TEST_CASE("effective Hamiltonian examples") {
    const double gamma = 0.8;
    const auto model = build_dephasing([gamma](double) { return gamma; });
    const Matrix h_plus = effective_hamiltonian(model, 0.0, plus_state());
    CHECK(max_abs(h_plus - Complex(0.0, -gamma / 2.0) * Matrix::Identity(2, 2)) < 1e-15);
    const Vector zero = basis_state(2, 0);
    CHECK((effective_hamiltonian(model, 0.0, zero) * zero).norm() < 1e-15);

    const auto net = build_network_model(3, Eigen::MatrixXd::Zero(3, 3), [](double) { return 0.0; });
    CHECK(max_abs(effective_hamiltonian(net, 0.0, random_state(3, 1))) == 0.0);
  }

  TEST_CASE("effective Hamiltonian action matches the matrix") {
    std::uint64_t key = 300;
    for (const auto& model : builtin_models()) {
      const double t = random_time(key);
      const Vector psi = random_state(model.n, key++);
      const auto snap = snapshot(model, t);
      CHECK((effective_hamiltonian(snap, psi) * psi - effective_hamiltonian_action(snap, psi)).norm() < 1e-13);
    }
  }

  TEST_CASE("deterministic step fixed points and unitary limit") {
    const auto model = build_dephasing([](double) { return 0.5; });
    const Vector plus = plus_state();
    const Vector zero = basis_state(2, 0);
    CHECK((deterministic_step(plus, effective_hamiltonian(model, 0.0, plus), 0.01) - plus).norm() < 1e-15);
    CHECK((deterministic_step(zero, effective_hamiltonian(model, 0.0, zero), 0.01) - zero).norm() < 1e-15);

    const Matrix h = pauli_x();
    const double dt = 0.01;
    const Vector out = deterministic_step(zero, h, dt);
    Vector expected = zero - kI * dt * (h * zero);
    expected.normalize();
    CHECK((out - expected).norm() < 1e-15);
    CHECK(out.norm() == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("deterministic step rejects a collapsing norm") {
    const Matrix h = Complex(0.0, -10.0) * Matrix::Identity(2, 2);
    CHECK_THROWS_AS(deterministic_step(plus_state(), h, 0.06), StepSizeError);
    CHECK_THROWS_AS(deterministic_step(plus_state(), Matrix::Zero(2, 2), 0.0), ValidationError);
  }

  TEST_CASE("no-jump norm deficit is second order in dt") {
    // ||(1 - i H dt) psi||^2 = 1 - tr(W) dt + dt^2 ||H psi||^2 exactly.
    std::uint64_t key = 400;
    for (const auto& model : builtin_models()) {
      for (int k = 0; k < 10; ++k, ++key) {
        const Vector psi = random_state(model.n, key);
        const auto snap = snapshot(model, random_time(key));
        const auto spec = spectral_split(build_rate_operator(snap, psi));
        const double rate_sum = spec.positive_sum() - spec.negative_abs_sum();
        const Vector h_psi = effective_hamiltonian_action(snap, psi);
        auto residual = [&](double dt) {
          return std::abs((1.0 - rate_sum * dt) - (psi - kI * dt * h_psi).squaredNorm());
        };
        if (1e-4 * h_psi.squaredNorm() < 1e-12) {
          CHECK(residual(1e-2) < 1e-12);  // the quadratic term is below rounding
          continue;
        }
        CHECK(residual(1e-2) / residual(5e-3) == doctest::Approx(4.0).epsilon(0.01));
      }
    }
  }

  TEST_CASE("degenerate clusters align with reference states") {
    const int n = 5;
    const Vector psi = random_state(n, 1);
    // W = c (1 - |psi><psi|): every eigenvector orthogonal to psi shares c.
    const Matrix w = 0.7 * (Matrix::Identity(n, n) - projector(psi));
    auto spec = spectral_split(w);
    REQUIRE(spec.positive.size() == 4);

    std::vector<Vector> refs;
    for (int r = 0; r < 2; ++r) {
      Vector v = random_state(n, 10 + static_cast<std::uint64_t>(r));
      v -= psi * psi.dot(v);
      for (const auto& prev : refs) v -= prev * prev.dot(v);
      refs.push_back(v.normalized());
    }
    refs.push_back(psi);  // lies outside the positive eigenspace
    align_degenerate_eigenvectors(spec, refs, 1e-8, 1e-9);

    CHECK(max_abs(spec.reconstruct(n) - w) < 1e-12);
    for (int r = 0; r < 2; ++r) {
      double best = 0.0;
      for (const auto& p : spec.positive) best = std::max(best, std::abs(p.vector.dot(refs[static_cast<std::size_t>(r)])));
      CHECK(best > 1.0 - 1e-12);
    }
    for (std::size_t a = 0; a < spec.positive.size(); ++a)
      for (std::size_t b = 0; b < spec.positive.size(); ++b)
        CHECK(std::abs(spec.positive[a].vector.dot(spec.positive[b].vector) - (a == b ? 1.0 : 0.0)) < 1e-12);
  }
}
