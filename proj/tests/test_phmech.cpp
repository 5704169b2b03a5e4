#include "test_support.h"

#include "vdpbc/errors.h"
#include "vdpbc/phmech.h"

#include <limits>

using namespace vdpbc;
using namespace vdpbc::testing;

TEST_SUITE("phmech") {
  TEST_CASE("hamiltonian of the single joint at hand-evaluated states") {
    const FjrModel model = table1_model();
    CHECK(hamiltonian(model, state(0, 0, 0, 0)) == 0.0);
    CHECK(hamiltonian(model, state(0, 0.1, 0, 0)) == doctest::Approx(0.155).epsilon(1e-14));
    CHECK(hamiltonian(model, state(0, 0, 0.031, 0)) == doctest::Approx(0.0155).epsilon(1e-14));
  }

  TEST_CASE("hamiltonian is bounded below by the minimum potential") {
    const FjrModel model = table1_model();
    std::mt19937_64 rng(7);
    for (int k = 0; k < 200; ++k) {
      const PhaseState x{random_vector(rng, 2, -3, 3), random_vector(rng, 2, -1, 1)};
      CHECK(hamiltonian(model, x) >= 0.0);
    }
  }

  TEST_CASE("non-finite state components are rejected") {
    const FjrModel model = table1_model();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(hamiltonian(model, state(nan, 0, 0, 0)), DomainError);
    CHECK_THROWS_AS(gradient_H(model, state(0, 0, std::numeric_limits<double>::infinity(), 0)), DomainError);
  }

  TEST_CASE("dimension mismatch is rejected") {
    const FjrModel model = table1_model();
    CHECK_THROWS_AS(hamiltonian(model, PhaseState::zero(3)), DimensionError);
    CHECK_THROWS_AS(ph_vector_field(model, PhaseState::zero(2), Vector::Zero(2), 0.0), DimensionError);
  }

  TEST_CASE("gradient at zero momentum is the potential gradient") {
    const MechanicalModel arm = two_link_arm();
    std::mt19937_64 rng(11);
    for (int k = 0; k < 50; ++k) {
      const Vector q = random_vector(rng, 2, -3, 3);
      const HamiltonianGradient g = gradient_H(arm, PhaseState{q, Vector::Zero(2)});
      CHECK(g.dp.norm() == 0.0);
      CHECK((g.dq - arm.potential_gradient(q)).norm() == 0.0);
    }
  }

  TEST_CASE("gradient of the joint spring at a motor offset") {
    const HamiltonianGradient g = gradient_H(table1_model(), state(0, 0.1, 0, 0));
    CHECK(g.dq(0) == doctest::Approx(-3.1).epsilon(1e-14));
    CHECK(g.dq(1) == doctest::Approx(3.1).epsilon(1e-14));
    CHECK(g.dp.norm() == 0.0);
  }

  TEST_CASE("constant inertia contributes no kinetic position gradient") {
    const FjrModel model = table1_model();
    const PhaseState x = state(0.3, -0.2, 0.05, -0.01);
    const HamiltonianGradient g = gradient_H(model, x);
    CHECK((g.dq - model.combined().potential_gradient(x.q)).norm() == 0.0);
    CHECK(g.dp(0) == doctest::Approx(0.05 / 0.031).epsilon(1e-14));
    CHECK(g.dp(1) == doctest::Approx(-0.01 / 0.004).epsilon(1e-14));
  }

  TEST_CASE("singular inertia raises a numeric error naming q") {
    MechanicalModel::Definition def;
    def.dof = 1;
    def.inputs = 1;
    def.inertia = [](const Vector& q) { return Matrix::Constant(1, 1, q(0)); };
    def.damping = [](const Vector&) { return Matrix::Zero(1, 1); };
    def.potential = zero_potential(1);
    def.input_matrix = [](const Vector&) { return Matrix::Identity(1, 1); };
    const MechanicalModel model(def);
    try {
      gradient_H(model, PhaseState{scalar(0.0), scalar(1.0)});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("q") != std::string::npos);
    }
  }

  TEST_CASE("workless matrix vanishes for constant inertia") {
    const FjrModel model = table1_model();
    const Matrix e = workless_matrix(model, state(0.4, 0.1, 0.02, 0.003));
    CHECK(e.rows() == 2);
    CHECK(e.cols() == 2);
    CHECK(e.norm() == 0.0);
    const MechanicalModel simple = MechanicalModel::with_constant_coefficients(
        Matrix::Identity(3, 3) * 2.0, Matrix::Zero(3, 3), Matrix::Identity(3, 3), zero_potential(3));
    CHECK(workless_matrix(simple, PhaseState{Vector::Ones(3), Vector::Ones(3)}).norm() == 0.0);
  }

  TEST_CASE("workless forces reproduce the kinetic-energy gradient on the two-link arm") {
    const MechanicalModel arm = two_link_arm();
    std::mt19937_64 rng(3);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
      const Vector q = random_vector(rng, 2, -3.14, 3.14);
      const Vector p = arm.inertia(q) * random_vector(rng, 2, -2, 2);
      const auto kinetic = [&](const Vector& qs) { return 0.5 * p.dot(arm.inertia(qs).ldlt().solve(p)); };
      const Vector fd = numeric_gradient(kinetic, q);
      const Vector analytic = workless_matrix(arm, PhaseState{q, p}) * arm.solve_inertia(q, p);
      worst = std::max(worst, (fd - analytic).norm() / std::max({fd.norm(), analytic.norm(), 1e-8}));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("vector field at the origin is an equilibrium") {
    const PhaseState f = ph_vector_field(table1_model(), PhaseState::zero(2), Vector::Zero(1), 0.0);
    CHECK(f.q.norm() == 0.0);
    CHECK(f.p.norm() == 0.0);
  }

  TEST_CASE("vector field coupling torque and motor damping") {
    const FjrModel model = table1_model();
    const PhaseState spring = ph_vector_field(model, state(0, 0.1, 0, 0), Vector::Zero(1), 0.0);
    CHECK(spring.q.norm() == 0.0);
    CHECK(spring.p(0) == doctest::Approx(3.1).epsilon(1e-14));
    CHECK(spring.p(1) == doctest::Approx(-3.1).epsilon(1e-14));

    const PhaseState damped = ph_vector_field(model, state(0, 0, 0, 0.004), Vector::Zero(1), 0.0);
    CHECK(damped.q(1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(damped.p(1) == doctest::Approx(-0.007).epsilon(1e-14));
  }

  TEST_CASE("input enters only the motor momentum rows") {
    const FjrModel model = table1_model();
    const PhaseState x = state(0.2, -0.1, 0.01, 0.002);
    const PhaseState base = ph_vector_field(model, x, scalar(0.0), 0.0);
    const PhaseState pushed = ph_vector_field(model, x, scalar(1.5), 0.0);
    CHECK((pushed.q - base.q).norm() == 0.0);
    CHECK(pushed.p(0) == base.p(0));
    CHECK(pushed.p(1) - base.p(1) == doctest::Approx(1.5).epsilon(1e-14));
  }

  TEST_CASE("non-finite input is rejected") {
    CHECK_THROWS_AS(ph_vector_field(table1_model(), PhaseState::zero(2),
                                    scalar(std::numeric_limits<double>::quiet_NaN()), 0.0),
                    DomainError);
  }

  TEST_CASE("natural output is the motor velocity and linear in p") {
    const FjrModel model = table1_model();
    CHECK(natural_output(model, PhaseState::zero(2)).norm() == 0.0);
    CHECK(natural_output(model, state(0, 0, 0, 0.004))(0) == doctest::Approx(1.0).epsilon(1e-14));
    const PhaseState x = state(0.3, 0.2, 0.01, -0.003);
    const PhaseState x2{x.q, 2.0 * x.p};
    CHECK(natural_output(model, x2)(0) == doctest::Approx(2.0 * natural_output(model, x)(0)).epsilon(1e-15));
  }

  TEST_CASE("two-link inertia is symmetric positive definite and damping semidefinite") {
    const MechanicalModel arm = two_link_arm();
    std::mt19937_64 rng(5);
    for (int k = 0; k < 200; ++k) {
      const Vector q = random_vector(rng, 2, -3.14, 3.14);
      const Matrix m = arm.inertia(q);
      CHECK(max_abs(m - m.transpose()) == 0.0);
      CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().minCoeff() > 0.0);
      const Matrix d = arm.damping(q);
      CHECK(max_abs(d - d.transpose()) == 0.0);
      CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(d).eigenvalues().minCoeff() >= 0.0);
    }
  }

  TEST_CASE("inertia derivative is linear in the direction and matches its finite-difference fallback") {
    const MechanicalModel arm = two_link_arm();
    std::mt19937_64 rng(9);
    for (int k = 0; k < 100; ++k) {
      const Vector q = random_vector(rng, 2, -3.14, 3.14);
      const Vector a = random_vector(rng, 2, -2, 2);
      const Vector b = random_vector(rng, 2, -2, 2);
      const Matrix sum = arm.inertia_derivative(q, a + 3.0 * b);
      const Matrix parts = arm.inertia_derivative(q, a) + 3.0 * arm.inertia_derivative(q, b);
      CHECK(max_abs(sum - parts) < 1e-13);
      CHECK(max_abs(arm.inertia_derivative(q, a) - arm.inertia_derivative_fd(q, a)) < 1e-7);
    }
  }

  TEST_CASE("gyroscopic matrix is exactly skew and satisfies its defining identity") {
    const MechanicalModel arm = two_link_arm();
    std::mt19937_64 rng(13);
    for (int k = 0; k < 100; ++k) {
      const Vector q = random_vector(rng, 2, -3.14, 3.14);
      const Vector qdot = random_vector(rng, 2, -2, 2);
      const Matrix s = gyroscopic_matrix(arm, q, qdot);
      CHECK(max_abs(s + s.transpose()) == 0.0);
      const auto lagrangian_kinetic = [&](const Vector& qs) { return 0.5 * qdot.dot(arm.inertia(qs) * qdot); };
      const Vector rhs = 0.5 * arm.inertia_derivative(q, qdot) * qdot - numeric_gradient(lagrangian_kinetic, q);
      CHECK((s * qdot - rhs).norm() < 1e-8 * std::max(1.0, rhs.norm()));
    }
  }

  TEST_CASE("joint potential is zero at zero twist with Hessian equal to the stiffness") {
    const FjrModel model = table1_model();
    CHECK(model.joint_potential(Eigen::Vector2d(0.7, 0.7)) == 0.0);
    const auto spring = [&](const Vector& q) { return model.joint_potential(q); };
    const Vector q0 = Eigen::Vector2d(0.2, -0.4);
    Matrix hessian(2, 2);
    const double h = 1e-3;
    for (Index i = 0; i < 2; ++i) {
      for (Index j = 0; j < 2; ++j) {
        Vector pp = q0, pm = q0, mp = q0, mm = q0;
        pp(i) += h, pp(j) += h;
        pm(i) += h, pm(j) -= h;
        mp(i) -= h, mp(j) += h;
        mm(i) -= h, mm(j) -= h;
        hessian(i, j) = (spring(pp) - spring(pm) - spring(mp) + spring(mm)) / (4 * h * h);
      }
    }
    Matrix expected(2, 2);
    expected << 31, -31, -31, 31;
    CHECK(max_abs(hessian - expected) < 1e-6);
  }

  TEST_CASE("flexible-joint model rejects a non-positive stiffness") {
    SingleJointParameters params;
    params.stiffness = 0.0;
    CHECK_THROWS(single_joint_model(params));
  }
}
