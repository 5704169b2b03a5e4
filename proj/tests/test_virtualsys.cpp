#include "test_support.h"

#include "vdpbc/errors.h"
#include "vdpbc/virtualsys.h"

using namespace vdpbc;
using namespace vdpbc::testing;

TEST_SUITE("virtualsys") {
  TEST_CASE("virtual field at x_v = x reproduces the plant field bitwise") {
    std::mt19937_64 rng(21);
    const FjrModel fjr = table1_model();
    const MechanicalModel arm = two_link_arm();
    const VirtualMechanicalSystem vfjr(fjr);
    const VirtualMechanicalSystem varm(arm);
    for (int k = 0; k < 200; ++k) {
      const PhaseState x{random_vector(rng, 2, -3, 3), random_vector(rng, 2, -0.5, 0.5)};
      const Vector u1 = random_vector(rng, 1, -2, 2);
      const Vector u2 = random_vector(rng, 2, -2, 2);
      const double t = k * 0.01;
      CHECK((virtual_vector_field(vfjr, x, x, u1, t).stacked() - ph_vector_field(fjr, x, u1, t).stacked()).norm() ==
            0.0);
      CHECK((virtual_vector_field(varm, x, x, u2, t).stacked() - ph_vector_field(arm, x, u2, t).stacked()).norm() ==
            0.0);
    }
  }

  TEST_CASE("virtual spring torque with the actual state at rest") {
    const VirtualMechanicalSystem vsys(table1_model());
    const PhaseState f = virtual_vector_field(vsys, state(0, 0.1, 0, 0), PhaseState::zero(2), scalar(0.0), 0.0);
    CHECK(f.q.norm() == 0.0);
    CHECK(f.p(0) == doctest::Approx(3.1).epsilon(1e-14));
    CHECK(f.p(1) == doctest::Approx(-3.1).epsilon(1e-14));
  }

  TEST_CASE("input shift moves only the motor momentum rows") {
    const VirtualMechanicalSystem vsys(table1_model());
    const PhaseState xv = state(0.1, 0.3, 0.02, -0.001);
    const PhaseState x = state(-0.2, 0.1, 0.01, 0.004);
    const Vector d = virtual_vector_field(vsys, xv, x, scalar(0.7), 0.0).stacked() -
                     virtual_vector_field(vsys, xv, x, scalar(0.2), 0.0).stacked();
    CHECK(d(0) == 0.0);
    CHECK(d(1) == 0.0);
    CHECK(d(2) == 0.0);
    CHECK(d(3) == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("interconnection is skew and dissipation symmetric, exactly") {
    std::mt19937_64 rng(22);
    const VirtualMechanicalSystem vsys(two_link_arm());
    for (int k = 0; k < 200; ++k) {
      const PhaseState x{random_vector(rng, 2, -3, 3), random_vector(rng, 2, -2, 2)};
      const Matrix j = vsys.interconnection(x);
      const Matrix r = vsys.dissipation(x);
      CHECK(max_abs(j + j.transpose()) == 0.0);
      CHECK(max_abs(r - r.transpose()) == 0.0);
    }
  }

  TEST_CASE("zero variation and zero input give zero variational rate") {
    const VirtualMechanicalSystem vsys(table1_model());
    const VariationalState vs{state(0.2, 0.1, 0.0, 0.01), Vector::Zero(4)};
    const VariationalDerivative d = prolonged_vector_field(vsys, vs, state(0.1, 0.0, 0.0, 0.0), scalar(0.3),
                                                           scalar(0.0), 0.0);
    CHECK(d.dx.norm() == 0.0);
  }

  TEST_CASE("unit motor-position variation excites the spring rows") {
    const VirtualMechanicalSystem vsys(table1_model());
    Vector dx = Vector::Zero(4);
    dx(1) = 1.0;
    const VariationalState vs{PhaseState::zero(2), dx};
    const VariationalDerivative d =
        prolonged_vector_field(vsys, vs, PhaseState::zero(2), scalar(0.0), scalar(0.0), 0.0);
    CHECK(d.dx(0) == 0.0);
    CHECK(d.dx(1) == 0.0);
    CHECK(d.dx(2) == doctest::Approx(31.0).epsilon(1e-14));
    CHECK(d.dx(3) == doctest::Approx(-31.0).epsilon(1e-14));
    CHECK(variational_output(vsys, vs, PhaseState::zero(2)).norm() == 0.0);
  }

  TEST_CASE("variational generator equals the central-difference Jacobian of the virtual field") {
    std::mt19937_64 rng(23);
    const MechanicalModel arm = two_link_arm();
    const VirtualMechanicalSystem vsys(arm);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const PhaseState x{random_vector(rng, 2, -3, 3), random_vector(rng, 2, -1, 1)};
      const PhaseState xv{x.q + random_vector(rng, 2, -0.5, 0.5), x.p + random_vector(rng, 2, -0.1, 0.1)};
      const Vector u = random_vector(rng, 2, -1, 1);
      Matrix fd(4, 4);
      const Vector base = xv.stacked();
      for (Index i = 0; i < 4; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(base(i)));
        Vector plus = base, minus = base;
        plus(i) += h;
        minus(i) -= h;
        fd.col(i) = (virtual_vector_field(vsys, PhaseState::from_stacked(plus), x, u, 0.0).stacked() -
                     virtual_vector_field(vsys, PhaseState::from_stacked(minus), x, u, 0.0).stacked()) /
                    (2 * h);
      }
      Matrix generator(4, 4);
      for (Index i = 0; i < 4; ++i) {
        const VariationalState vs{xv, Vector::Unit(4, i)};
        generator.col(i) = prolonged_vector_field(vsys, vs, x, u, Vector::Zero(2), 0.0).dx;
      }
      worst = std::max(worst, max_abs(fd - generator) / std::max(1.0, max_abs(generator)));
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("variational input enters through g") {
    const VirtualMechanicalSystem vsys(table1_model());
    const VariationalState vs{PhaseState::zero(2), Vector::Zero(4)};
    const VariationalDerivative d =
        prolonged_vector_field(vsys, vs, PhaseState::zero(2), scalar(0.0), scalar(2.0), 0.0);
    CHECK(d.dx(3) == 2.0);
    CHECK(d.dx.head(3).norm() == 0.0);
  }

  TEST_CASE("storage values at hand-evaluated variations") {
    const DifferentialStorage ds = closed_loop_storage(table1_model(), single_joint_gains());
    const Vector x_err = Vector::Zero(4);
    CHECK(storage_value(ds, x_err, Vector::Zero(4), 0.0) == 0.0);
    CHECK(storage_value(ds, x_err, vec({1, 0, 0, 0}), 0.0) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(storage_value(ds, x_err, vec({0, 0, 0.031, 0}), 0.0) == doctest::Approx(0.0155).epsilon(1e-14));
  }

  TEST_CASE("non positive-definite metric raises a certificate error") {
    const DifferentialStorage ds([](const Vector&, double) { return Matrix(Vector::Constant(2, -1.0).asDiagonal()); });
    CHECK_THROWS_AS(storage_value(ds, Vector::Zero(2), Vector::Ones(2), 0.0), CertificateError);
  }

  TEST_CASE("storage rate vanishes at zero variation and is non-positive along the closed loop") {
    const FjrModel model = table1_model();
    const ControllerConfig cfg = single_joint_gains();
    const DifferentialStorage ds = closed_loop_storage(model, cfg);
    const Matrix a = closed_loop_structure(model, cfg, PhaseState::zero(2)).generator();
    CHECK(storage_rate(ds, {Vector::Zero(4), Vector::Zero(4), Vector::Zero(4), 0.0}) == 0.0);
    std::mt19937_64 rng(24);
    for (int k = 0; k < 500; ++k) {
      const Vector dx = random_vector(rng, 4, -1, 1);
      const double rate = storage_rate(ds, {Vector::Zero(4), dx, a * dx, 0.0});
      CHECK(rate <= 0.0);
    }
  }

  TEST_CASE("metric Rayleigh quotients lie within the block eigenvalue bounds") {
    const DifferentialStorage ds = closed_loop_storage(table1_model(), single_joint_gains());
    const double lo = 20.0;
    const double hi = 1.0 / 0.004;
    std::mt19937_64 rng(25);
    for (int k = 0; k < 500; ++k) {
      Vector x_err = random_vector(rng, 4, -3.14, 3.14);
      x_err.tail(2) = random_vector(rng, 2, -1, 1);
      const Vector dx = random_vector(rng, 4, -1, 1);
      const double quotient = 2.0 * storage_value(ds, x_err, dx, 0.0) / dx.squaredNorm();
      CHECK(quotient >= lo * (1 - 1e-14));
      CHECK(quotient <= hi * (1 + 1e-14));
    }
  }
}
