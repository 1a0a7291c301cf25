#include <doctest.h>

#include <cmath>

#include "roqj/engines.hpp"
#include "roqj/errors.hpp"
#include "support.hpp"

using namespace roqj;
using namespace roqj::test;

namespace {

Vector random_state(int n, std::uint64_t key) { return haar_state(n, 0xe461, key, 0); }

MasterEquationModel constant_dephasing(double gamma) {
  return build_dephasing([gamma](double) { return gamma; });
}

/// psi and the orthogonal negative eigenvector of its rate operator.
Ensemble dephasing_pair(std::uint64_t n_psi, std::uint64_t n_phi) {
  Vector psi(2);
  psi << 0.8, Complex(0.0, 0.6);
  Vector phi(2);
  phi << Complex(0.0, 0.6), 0.8;  // orthogonal to psi up to phase
  phi -= psi * psi.dot(phi);
  phi.normalize();
  return Ensemble{{{psi, n_psi}, {phi, n_phi}}};
}

double binomial_z(double hits, double trials, double p) {
  return (hits - trials * p) / std::sqrt(trials * p * (1.0 - p));
}

}  // namespace

TEST_SUITE("engines") {
  TEST_CASE("P-divisible step at |+> jumps only to |->") {
    const auto model = build_pauli_model({0.5, 0.5, 0.0});
    const double t = 0.4;
    const double dt = 0.01;
    const double p = 0.5 * (1.0 - std::tanh(t)) * dt;

    const auto jump = roqj_step_p(plus_state(), model, t, dt, 0.5 * p);
    REQUIRE(jump.jump.has_value());
    CHECK(jump.jump->channel == 0);
    CHECK(std::abs(std::abs(jump.state.dot(minus_state())) - 1.0) < 1e-14);
    CHECK(jump.jump_probability == doctest::Approx(p).epsilon(1e-13));
    CHECK(jump.forward_channels == 1);

    const auto stay = roqj_step_p(plus_state(), model, t, dt, 1.5 * p);
    CHECK_FALSE(stay.jump.has_value());
    const Vector expected =
        deterministic_step(plus_state(), effective_hamiltonian(model, t, plus_state()), dt);
    CHECK((stay.state - expected).norm() < 1e-15);
  }

  TEST_CASE("zero rates never jump and evolve unitarily") {
    Eigen::MatrixXd omega = sample_network_couplings(4, 0.6, 2);
    const auto model = build_network_model(4, omega, [](double) { return 0.0; });
    const Vector psi = random_state(4, 1);
    for (double u : {0.0, 0.3, 0.999}) {
      const auto out = roqj_step_p(psi, model, 0.0, 0.01, u);
      CHECK_FALSE(out.jump.has_value());
      Vector expected = psi - kI * 0.01 * (omega.cast<Complex>() * psi);
      expected.normalize();
      CHECK((out.state - expected).norm() < 1e-14);
    }
  }

  TEST_CASE("P-divisible step refuses negative eigenvalues and large steps") {
    CHECK_THROWS_AS(roqj_step_p(plus_state(), constant_dephasing(-0.3), 0.0, 0.01, 0.5), PDivisibilityError);
    CHECK_THROWS_AS(roqj_step_p(plus_state(), constant_dephasing(30.0), 0.0, 0.02, 0.5), StepSizeError);
    try {
      roqj_step_p(plus_state(), constant_dephasing(-0.3), 1.25, 0.01, 0.5);
    } catch (const PDivisibilityError& e) {
      CHECK(std::string(e.what()).find("t=1.25") != std::string::npos);
    }
  }

  TEST_CASE("MCWF amplitude damping") {
    const auto model = build_amplitude_damping(1.5);
    const double dt = 0.01;
    const auto excited = mcwf_step(basis_state(2, 1), model, 0.0, dt, 0.0);
    CHECK(excited.jump_probability == doctest::Approx(1.5 * dt));
    REQUIRE(excited.jump.has_value());
    CHECK(std::abs(excited.state(0)) == doctest::Approx(1.0));

    const auto ground = mcwf_step(basis_state(2, 0), model, 0.0, dt, 0.0);
    CHECK_FALSE(ground.jump.has_value());
    CHECK((ground.state - basis_state(2, 0)).norm() == 0.0);

    CHECK_THROWS_AS(mcwf_step(plus_state(), constant_dephasing(-0.1), 0.0, dt, 0.5), NegativeRateError);
  }

  TEST_CASE("per-channel jump frequencies follow lambda dt") {
    // Six degenerate forward channels of the network at a positive-rate time.
    const auto model = network7();
    const double t = 0.3;
    REQUIRE(oscillating_network_rate(t) > 0.0);
    const auto snap = snapshot(model, t);
    const Vector psi = random_state(7, 3);
    const auto spec = spectral_split(build_rate_operator(snap, psi));
    REQUIRE(spec.positive.size() == 6);
    const double dt = 0.05;
    const CounterRng rng(99);
    const std::size_t samples = 200000;
    std::vector<double> hits(spec.positive.size(), 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
      const auto out = roqj_step_p(psi, snap, dt, rng.uniform({s}));
      if (out.jump) hits[static_cast<std::size_t>(out.jump->channel)] += 1.0;
    }
    for (std::size_t j = 0; j < hits.size(); ++j) {
      CHECK(std::abs(binomial_z(hits[j], samples, spec.positive[j].lambda * dt)) < 4.0);
    }
  }

  TEST_CASE("state matching") {
    const Vector minus = minus_state();
    Ensemble ens{{{basis_state(2, 0), 3}, {minus, 2}}};
    CHECK(match_class(ens, Complex(std::cos(0.7), std::sin(0.7)) * minus, 1e-12) == std::optional<std::size_t>(1));
    CHECK_FALSE(match_class(Ensemble{}, minus, 0.5).has_value());
    CHECK_FALSE(match_class(ens, plus_state(), 1e-3).has_value());

    // Overlaps 0.999 and 0.9999 with the target |0>.
    auto tilted = [](double overlap) {
      Vector v(2);
      v << overlap, std::sqrt(1.0 - overlap * overlap);
      return v;
    };
    Ensemble close{{{tilted(0.999), 1}, {tilted(0.9999), 1}}};
    CHECK(match_class(close, basis_state(2, 0), 1e-3) == std::optional<std::size_t>(1));
    CHECK(match_class(close, basis_state(2, 0), 1e-5) == std::nullopt);
    Ensemble tie{{{tilted(0.9999), 1}, {tilted(0.9999), 4}}};
    CHECK(match_class(tie, basis_state(2, 0), 1e-3) == std::optional<std::size_t>(0));
  }

  TEST_CASE("expected one-step average") {
    const double dt = 0.01;
    SUBCASE("zero rates give the projector on the Euler step") {
      const auto model = constant_dephasing(0.0);
      const Vector psi = random_state(2, 4);
      const Vector next = deterministic_step(psi, effective_hamiltonian(model, 0.0, psi), dt);
      CHECK(max_abs(expected_one_step(psi, model, 0.0, dt) - projector(next)) < 1e-15);
    }
    SUBCASE("eternal model at |+> and t = 0") {
      const auto model = build_pauli_model({0.5, 0.5, 0.0});
      const Vector next = deterministic_step(plus_state(), effective_hamiltonian(model, 0.0, plus_state()), dt);
      const Matrix expected = (1.0 - 0.5 * dt) * projector(next) + 0.5 * dt * projector(minus_state());
      CHECK(max_abs(expected_one_step(plus_state(), model, 0.0, dt) - expected) < 1e-15);
    }
    SUBCASE("negative channels are refused") {
      CHECK_THROWS_AS(expected_one_step(plus_state(), constant_dephasing(-1.0), 0.0, dt), PDivisibilityError);
    }
  }

  TEST_CASE("one-step residual is second order") {
    std::uint64_t key = 0;
    for (const auto& model : builtin_models()) {
      for (int k = 0; k < 10; ++k, ++key) {
        const Vector psi = random_state(model.n, key);
        double t = random_time(key);
        // P-divisible points only.
        while (!spectral_split(build_rate_operator(model, t, psi)).negative.empty()) t += 0.05;
        const Matrix rho = projector(psi);
        const Matrix drho = evaluate_generator(model, t, rho);
        auto residual = [&](double dt) {
          return trace_norm(hermitian_part(expected_one_step(psi, model, t, dt) - (rho + dt * drho)));
        };
        if (residual(1e-4) <= 1e-13) continue;  // quadratic term below rounding
        CHECK(residual(1e-4) / residual(5e-5) == doctest::Approx(4.0).epsilon(0.05));
      }
    }
  }

  TEST_CASE("general step conserves counts and norms") {
    const auto model = network7();
    Ensemble ens{{{basis_state(7, 1), 400}}};
    const CounterRng rng(5);
    const double dt = 0.005;
    GeneralStepOptions opts;
    opts.match_tolerance = 1e-2;
    std::size_t reverse_events = 0;
    for (std::uint64_t step = 0; step < 600; ++step) {
      const auto res = roqj_step_general(ens, snapshot(model, dt * static_cast<double>(step)), dt, rng, 0, step, opts);
      CHECK(res.ensemble.total() == 400);
      CHECK(res.diagnostics.distinct_forward_channels <= 7);
      for (const auto& c : res.ensemble.classes) {
        CHECK(c.count > 0);
        CHECK(std::abs(c.state.norm() - 1.0) < 1e-9);
      }
      for (std::size_t a = 0; a < res.ensemble.classes.size(); ++a)
        for (std::size_t b = a + 1; b < res.ensemble.classes.size(); ++b)
          CHECK(std::abs(res.ensemble.classes[a].state.dot(res.ensemble.classes[b].state)) < 1.0 - opts.match_tolerance);
      for (const auto& e : res.events) reverse_events += e.kind == JumpKind::reverse ? 1 : 0;
      ens = res.ensemble;
    }
    CHECK(reverse_events > 0);
  }

  TEST_CASE("general step without negative channels matches independent members") {
    const auto model = build_pauli_model({0.2, 0.3, 0.5});
    const Vector psi = random_state(2, 8);
    const double t = 0.6;
    const double dt = 0.05;
    const auto snap = snapshot(model, t);
    const auto spec = spectral_split(build_rate_operator(snap, psi));
    REQUIRE(spec.positive.size() == 1);
    const CounterRng rng(17);
    double jumps = 0.0;
    const std::uint64_t members = 1000;
    const std::uint64_t steps = 200;
    for (std::uint64_t s = 0; s < steps; ++s) {
      const auto res = roqj_step_general(Ensemble{{{psi, members}}}, snap, dt, rng, 0, s);
      for (const auto& f : res.fates[0]) jumps += f.channel >= 0 ? 1.0 : 0.0;
    }
    CHECK(std::abs(binomial_z(jumps, members * steps, spec.positive[0].lambda * dt)) < 4.0);
    // The averaged state of the step equals the independent one-step average.
    CHECK(max_abs(expected_ensemble_update(Ensemble{{{psi, 5}}}, snap, dt) - expected_one_step(psi, snap, dt)) < 1e-15);
  }

  TEST_CASE("reverse jumps pull members back at (N_target / N_source) |lambda| dt") {
    const double gamma = -0.4;
    const auto model = constant_dephasing(gamma);
    const auto snap = snapshot(model, 0.0);
    const Ensemble ens = dephasing_pair(300, 100);
    const auto spec_psi = spectral_split(build_rate_operator(snap, ens.classes[0].state));
    REQUIRE(spec_psi.negative.size() == 1);
    REQUIRE(spec_psi.positive.empty());
    const double lambda = spec_psi.negative[0].lambda;

    const double dt = 0.01;
    const CounterRng rng(23);
    const std::uint64_t steps = 1000;
    double moved = 0.0;
    for (std::uint64_t s = 0; s < steps; ++s) {
      const auto res = roqj_step_general(ens, snap, dt, rng, 0, s);
      for (const auto& f : res.fates[1]) {
        if (f.channel >= 0) {
          CHECK(f.kind == JumpKind::reverse);
          moved += 1.0;
        }
      }
    }
    const double p = 300.0 / 100.0 * std::abs(lambda) * dt;
    CHECK(std::abs(binomial_z(moved, 100.0 * steps, p)) < 4.0);
    // Mean count flow per step equals N_target |lambda| dt.
    CHECK(moved / steps == doctest::Approx(300.0 * std::abs(lambda) * dt).epsilon(0.05));
  }

  TEST_CASE("general-step residual on the two-class dephasing fixture is second order") {
    const auto model = constant_dephasing(-0.3);
    const Ensemble ens = dephasing_pair(3, 2);
    const Matrix rho = ensemble_average(ens);
    const Matrix drho = evaluate_generator(model, 0.0, rho);
    auto residual = [&](double dt) {
      return trace_norm(hermitian_part(expected_ensemble_update(ens, model, 0.0, dt) - (rho + dt * drho)));
    };
    CHECK(residual(1e-4) / residual(5e-5) == doctest::Approx(4.0).epsilon(0.05));
  }

  TEST_CASE("unmatched negative channels leak in the step and throw in the expectation") {
    const auto model = constant_dephasing(-0.3);
    Vector psi(2);
    psi << 0.8, 0.6;
    const Ensemble lone{{{psi, 10}}};
    const double dt = 0.01;
    CHECK_THROWS_AS(expected_ensemble_update(lone, model, 0.0, dt), UnmatchedChannelError);
    const auto res = roqj_step_general(lone, model, 0.0, dt, CounterRng(1));
    CHECK(res.diagnostics.unmatched_channels == 1);
    CHECK(res.diagnostics.leaked_weight == doctest::Approx(0.3 * 4.0 * 0.64 * 0.36 * dt));
    CHECK(res.ensemble.total() == 10);
  }

  TEST_CASE("an empty matched source moves nobody") {
    const auto model = constant_dephasing(-0.3);
    Ensemble ens = dephasing_pair(10, 0);
    const auto res = roqj_step_general(ens, model, 0.0, 0.01, CounterRng(2));
    CHECK(res.ensemble.total() == 10);
    CHECK(res.ensemble.classes.size() == 1);
    CHECK(res.diagnostics.reverse_weight > 0.0);
  }

  TEST_CASE("matching classes merge and empty classes are pruned") {
    const auto model = constant_dephasing(0.0);
    const Vector psi = random_state(2, 9);
    Ensemble ens{{{psi, 3}, {Complex(0.0, 1.0) * psi, 4}, {random_state(2, 10), 0}}};
    const auto res = roqj_step_general(ens, model, 0.0, 0.01, CounterRng(3));
    REQUIRE(res.ensemble.classes.size() == 1);
    CHECK(res.ensemble.classes[0].count == 7);
    CHECK(max_abs(ensemble_average(res.ensemble) - projector(psi)) < 1e-12);
  }

  TEST_CASE("general step is deterministic for a fixed seed") {
    const auto model = network7();
    const Ensemble ens{{{basis_state(7, 1), 50}, {basis_state(7, 3), 30}}};
    GeneralStepOptions opts;
    opts.match_tolerance = 1e-2;
    const auto a = roqj_step_general(ens, snapshot(model, 0.2), 0.005, CounterRng(8), 4, 11, opts);
    const auto b = roqj_step_general(ens, snapshot(model, 0.2), 0.005, CounterRng(8), 4, 11, opts);
    REQUIRE(a.ensemble.classes.size() == b.ensemble.classes.size());
    for (std::size_t k = 0; k < a.ensemble.classes.size(); ++k) {
      CHECK(a.ensemble.classes[k].count == b.ensemble.classes[k].count);
      CHECK((a.ensemble.classes[k].state - b.ensemble.classes[k].state).norm() == 0.0);
    }
  }

  TEST_CASE("forward jump probability above one half is a step-size error") {
    const Ensemble ens{{{plus_state(), 4}}};
    CHECK_THROWS_AS(roqj_step_general(ens, constant_dephasing(40.0), 0.0, 0.02, CounterRng(1)), StepSizeError);
  }
}
