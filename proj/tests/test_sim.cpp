#include "test_support.h"

#include "vdpbc/errors.h"
#include "vdpbc/sim.h"
#include "vdpbc/verify.h"

using namespace vdpbc;
using namespace vdpbc::testing;

namespace {

FjrModel undamped_model() {
  SingleJointParameters params;
  params.link_damping = 0.0;
  params.rotor_damping = 0.0;
  return single_joint_model(params);
}

IntegratorConfig config(double dt, double t_end, int stride = 1) {
  IntegratorConfig integ;
  integ.dt = dt;
  integ.t_end = t_end;
  integ.record_stride = stride;
  return integ;
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("integrator config rejects non-positive steps and short horizons") {
    CHECK_THROWS_AS(config(0.0, 1.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(config(-1e-3, 1.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(config(1e-2, 1e-3).validate(), std::invalid_argument);
    CHECK_THROWS_AS(config(1e-3, 1.0, 0).validate(), std::invalid_argument);
    CHECK_NOTHROW(config(1e-3, 1e-3).validate());
    CHECK(config(1e-4, 10.0).steps() == 100000);
  }

  TEST_CASE("rk4 is fourth order on the undamped pendulum joint") {
    const MechanicalModel plant = undamped_model().combined();
    const PhaseState x0 = state(0.5, 0.3, 0.0, 0.0);
    const auto terminal = [&](double dt) {
      const auto samples = simulate_open_loop(plant, config(dt, 0.5, 1000000), x0);
      return samples.back().x.stacked();
    };
    const Vector reference = terminal(1e-3 / 16);
    const double coarse = (terminal(1e-3) - reference).norm();
    const double fine = (terminal(5e-4) - reference).norm();
    CHECK(coarse / fine >= 14.0);
  }

  TEST_CASE("euler is first order") {
    const VectorField decay = [](double, const Vector& y) { return Vector(-y); };
    const auto terminal = [&](double dt) {
      IntegratorConfig integ = config(dt, 1.0, 1000000);
      integ.scheme = Scheme::euler;
      Vector last;
      integrate(integ, decay, Vector::Ones(1), [&](Index, double, const Vector& y) { last = y; });
      return last(0);
    };
    const double exact = std::exp(-1.0);
    const double ratio = std::abs(terminal(1e-2) - exact) / std::abs(terminal(5e-3) - exact);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.02));
  }

  TEST_CASE("divergence is reported with the first offending time") {
    const VectorField blowup = [](double, const Vector& y) { return Vector(100.0 * y); };
    try {
      integrate(config(1e-2, 10.0), blowup, Vector::Ones(1), [](Index, double, const Vector&) {});
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.time() > 0.0);
      CHECK(e.time() < 1.0);
    }
  }

  TEST_CASE("closed loop started on the reference stays on it") {
    const FjrModel model = table1_model();
    const ControllerConfig cfg = single_joint_gains();
    const SinusoidalTrajectory traj = default_trajectory();
    const SimulationRecord rec =
        simulate_closed_loop(model, cfg, traj, config(1e-4, 1.0, 10), on_reference_state(model, cfg, traj, 0.0));
    double worst = 0.0;
    for (const auto& s : rec.samples) {
      worst = std::max(worst, s.errors.cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("closed-loop record has monotone time and finite rows") {
    const SimulationRecord rec = simulate_closed_loop(table1_model(), single_joint_gains(), default_trajectory(),
                                                      config(1e-4, 0.5, 7), PhaseState::zero(2));
    REQUIRE(rec.samples.size() > 2);
    CHECK(rec.samples.back().t == doctest::Approx(0.5).epsilon(1e-12));
    for (std::size_t i = 1; i < rec.samples.size(); ++i) {
      CHECK(rec.samples[i].t > rec.samples[i - 1].t);
    }
    for (const auto& s : rec.samples) {
      CHECK(s.x.all_finite());
      CHECK(s.errors.size() == 4);
      CHECK(std::isfinite(s.storage + s.storage_rate + s.hamiltonian + s.u(0)));
      CHECK(s.u(0) == s.u_ff(0) + s.u_fb(0));
    }
  }

  TEST_CASE("applied control is the actual-system controller, bitwise") {
    const FjrModel model = table1_model();
    const ControllerConfig cfg = single_joint_gains();
    const SinusoidalTrajectory traj = default_trajectory();
    const SimulationRecord rec = simulate_closed_loop(model, cfg, traj, config(1e-4, 0.2, 50), PhaseState::zero(2));
    for (const auto& s : rec.samples) {
      CHECK(s.u(0) == control_input(model, cfg, s.x, traj, s.t)(0));
    }
  }

  TEST_CASE("closed-loop runs are deterministic") {
    const auto run = [] {
      return simulate_closed_loop(table1_model(), single_joint_gains(), default_trajectory(), config(1e-4, 0.3, 3),
                                  PhaseState::zero(2));
    };
    const SimulationRecord a = run();
    const SimulationRecord b = run();
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      CHECK((a.samples[i].x.stacked() - b.samples[i].x.stacked()).norm() == 0.0);
      CHECK(a.samples[i].u(0) == b.samples[i].u(0));
      CHECK(a.samples[i].storage == b.samples[i].storage);
    }
  }

  TEST_CASE("virtual closed loop started at the actual state reproduces it") {
    const VirtualRun run = simulate_virtual_closed_loop(table1_model(), single_joint_gains(), default_trajectory(),
                                                        config(1e-4, 1.0, 10), state(0.2, -0.1, 0.0, 0.0),
                                                        state(0.2, -0.1, 0.0, 0.0));
    double worst = 0.0;
    for (std::size_t i = 0; i < run.times.size(); ++i) {
      worst = std::max(worst, (run.actual[i].stacked() - run.virtual_states[i].stacked()).norm());
    }
    CHECK(worst == 0.0);
  }

  TEST_CASE("both stiffness cases converge and the soft joint needs the larger input") {
    const SinusoidalTrajectory traj = default_trajectory();
    const SimulationRecord stiff =
        simulate_closed_loop(table1_model(31.0), single_joint_gains(), traj, config(1e-4, 2.0, 10), PhaseState::zero(2));
    const SimulationRecord soft =
        simulate_closed_loop(table1_model(3.1), single_joint_gains(), traj, config(1e-4, 2.0, 10), PhaseState::zero(2));
    CHECK(stiff.summary.settle_time < 1.0);
    CHECK(soft.summary.settle_time < 1.0);
    CHECK(std::abs(stiff.summary.final_errors(0)) < 1e-3);
    CHECK(soft.summary.peak_input > stiff.summary.peak_input);
  }

  TEST_CASE("zero initial variation stays zero") {
    const ProlongedRecord rec = simulate_prolonged(table1_model(), single_joint_gains(), default_trajectory(),
                                                   config(1e-4, 0.5, 10), PhaseState::zero(2), Vector::Zero(4));
    for (const auto& s : rec.samples) {
      CHECK(s.variation.norm() == 0.0);
      CHECK(s.storage == 0.0);
    }
  }

  TEST_CASE("unit variations decay at least at the certified rate") {
    const ContractionRates rates = derive_beta(single_joint_gains(), table1_model());
    for (Index i = 0; i < 4; ++i) {
      const ProlongedRecord rec = simulate_prolonged(table1_model(), single_joint_gains(), default_trajectory(),
                                                     config(1e-4, 2.0, 10), PhaseState::zero(2), Vector::Unit(4, i));
      const double v0 = rec.samples.front().storage;
      for (const auto& s : rec.samples) {
        CHECK(s.storage <= v0 * std::exp(-2.0 * rates.beta * s.t) * 1.05);
      }
    }
  }

  TEST_CASE("terminal storage is converged in the step size") {
    const auto terminal = [](double dt) {
      return simulate_prolonged(table1_model(), single_joint_gains(), default_trajectory(), config(dt, 1.0, 1000000),
                                PhaseState::zero(2), vec({0.3, -0.2, 0.01, 0.002}))
          .samples.back()
          .storage;
    };
    const double coarse = terminal(1e-4);
    const double fine = terminal(5e-5);
    CHECK(std::abs(coarse - fine) / fine < 1e-6);
  }

  TEST_CASE("decay rate of an exact exponential") {
    std::vector<double> times, values;
    for (int k = 0; k <= 1000; ++k) {
      times.push_back(k * 1e-3);
      values.push_back(std::exp(-4.0 * k * 1e-3));
    }
    const DecayEstimate d = measured_decay_rate(times, values);
    CHECK(d.rate == doctest::Approx(2.0).epsilon(1e-6));
    CHECK_FALSE(d.truncated);
  }

  TEST_CASE("decay rate of a conservative oscillator is zero") {
    const MechanicalModel oscillator = MechanicalModel::with_constant_coefficients(
        Matrix::Identity(1, 1), Matrix::Zero(1, 1), Matrix::Identity(1, 1), quadratic_potential(Matrix::Identity(1, 1)));
    const auto samples = simulate_open_loop(oscillator, config(1e-3, 10.0), PhaseState{scalar(1.0), scalar(0.0)});
    std::vector<double> times, energy;
    for (const auto& s : samples) {
      times.push_back(s.t);
      energy.push_back(s.hamiltonian);
    }
    CHECK(std::abs(measured_decay_rate(times, energy).rate) < 1e-8);
  }

  TEST_CASE("decay estimate flags a window cut at the numeric floor") {
    std::vector<double> times, values;
    for (int k = 0; k <= 1000; ++k) {
      times.push_back(k * 1e-2);
      values.push_back(std::exp(-20.0 * k * 1e-2));
    }
    const DecayEstimate d = measured_decay_rate(times, values);
    CHECK(d.truncated);
    CHECK(d.rate == doctest::Approx(10.0).epsilon(1e-6));
  }

  TEST_CASE("closed loop decays faster than the certified rate") {
    const SimulationRecord rec = simulate_closed_loop(table1_model(), single_joint_gains(), default_trajectory(),
                                                      config(1e-4, 3.0, 10), PhaseState::zero(2));
    CHECK(rec.summary.decay.rate >= rec.summary.rates.beta);
  }

  TEST_CASE("undamped unforced energy is conserved on the slow mode") {
    const MechanicalModel plant = undamped_model().combined();
    const auto samples = simulate_open_loop(plant, config(1e-3, 10.0, 10), slow_mode_state(plant, 0.1));
    const double h0 = samples.front().hamiltonian;
    double worst = 0.0;
    for (const auto& s : samples) {
      worst = std::max(worst, std::abs(s.hamiltonian - h0) / h0);
    }
    CHECK(worst < 1e-8);
  }

  TEST_CASE("damped unforced energy never increases") {
    const MechanicalModel plant = table1_model().combined();
    const auto samples = simulate_open_loop(plant, config(1e-3, 5.0), state(0.6, -0.3, 0.01, 0.002));
    for (std::size_t i = 1; i < samples.size(); ++i) {
      CHECK(samples[i].hamiltonian - samples[i - 1].hamiltonian <= 1e-10);
    }
  }

  TEST_CASE("energy balance closes under damping and input") {
    const MechanicalModel plant = table1_model().combined();
    const Signal input = [](double t) { return Vector::Constant(1, 0.5 * std::sin(3.0 * t)); };
    const auto samples = simulate_open_loop(plant, config(1e-4, 5.0, 100), state(0.3, 0.1, 0.0, 0.0), input);
    const double h0 = samples.front().hamiltonian;
    double worst = 0.0;
    for (const auto& s : samples) {
      worst = std::max(worst, std::abs(s.hamiltonian + s.dissipated - s.supplied - h0));
    }
    CHECK(worst < 1e-10);
  }
}
