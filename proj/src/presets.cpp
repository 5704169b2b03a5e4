#include "vdpbc/presets.h"

#include <cmath>

namespace vdpbc {

namespace {

FjrModel make_single_joint(const SingleJointParameters& params, Potential link_potential) {
  const Matrix one = Matrix::Identity(1, 1);
  auto link = MechanicalModel::with_constant_coefficients(params.link_inertia * one, params.link_damping * one, one,
                                                          std::move(link_potential));
  auto motor = MechanicalModel::with_constant_coefficients(params.rotor_inertia * one, params.rotor_damping * one,
                                                           one, zero_potential(1));
  return FjrModel(std::move(link), std::move(motor), params.stiffness * one);
}

}  // namespace

FjrModel single_joint_model(const SingleJointParameters& params) {
  return make_single_joint(params, pendulum_potential(Vector::Constant(1, params.nominal_load)));
}

FjrModel single_joint_linear_model(const SingleJointParameters& params) {
  return make_single_joint(params, quadratic_potential(Matrix::Constant(1, 1, params.nominal_load)));
}

ControllerConfig single_joint_gains() {
  return ControllerConfig::scalar(10.0, 15.0, 20.0, 60.0, 0.6, 0.3);
}

SinusoidalTrajectory default_trajectory() {
  return SinusoidalTrajectory::scalar(M_PI / 4.0, 1.0);
}

MechanicalModel two_link_arm(const TwoLinkParameters& params) {
  const double a = params.a;
  const double b = params.b;
  const double c = params.c;
  const double g1 = params.gravity_1;
  const double g2 = params.gravity_2;

  MechanicalModel::Definition def;
  def.dof = 2;
  def.inputs = 2;
  def.inertia = [=](const Vector& q) -> Matrix {
    const double c2 = std::cos(q(1));
    Matrix m(2, 2);
    m << a + 2.0 * b * c2, c + b * c2, c + b * c2, c;
    return m;
  };
  def.inertia_derivative = [=](const Vector& q, const Vector& v) -> Matrix {
    const double s2 = std::sin(q(1));
    Matrix m(2, 2);
    m << -2.0 * b * s2 * v(1), -b * s2 * v(1), -b * s2 * v(1), 0.0;
    return m;
  };
  const Matrix damping = Eigen::Vector2d(params.damping_1, params.damping_2).asDiagonal();
  def.damping = [damping](const Vector&) -> Matrix { return damping; };
  def.input_matrix = [](const Vector&) -> Matrix { return Matrix::Identity(2, 2); };
  def.constant_damping = true;

  // P = g1·sin q₁ + g2·sin(q₁ + q₂), angles measured from the horizontal.
  Potential pot;
  pot.value = [=](const Vector& q) { return g1 * std::sin(q(0)) + g2 * std::sin(q(0) + q(1)); };
  pot.gradient = [=](const Vector& q) -> Vector {
    const double c12 = g2 * std::cos(q(0) + q(1));
    return Eigen::Vector2d(g1 * std::cos(q(0)) + c12, c12);
  };
  pot.hessian = [=](const Vector& q) -> Matrix {
    const double s12 = -g2 * std::sin(q(0) + q(1));
    Matrix h(2, 2);
    h << -g1 * std::sin(q(0)) + s12, s12, s12, s12;
    return h;
  };
  pot.hessian_derivative = [=](const Vector& q, const Vector& v) -> Matrix {
    const double c12 = -g2 * std::cos(q(0) + q(1)) * (v(0) + v(1));
    Matrix h(2, 2);
    h << -g1 * std::cos(q(0)) * v(0) + c12, c12, c12, c12;
    return h;
  };
  def.potential = std::move(pot);
  return MechanicalModel(std::move(def));
}

}  // namespace vdpbc
