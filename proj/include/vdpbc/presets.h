#pragma once

#include "vdpbc/control.h"
#include "vdpbc/phmech.h"

namespace vdpbc {

/// Physical parameters of a single flexible joint driving a gravity-loaded link.
struct SingleJointParameters {
  double link_inertia = 0.031;   // kg·m²
  double rotor_inertia = 0.004;  // kg·m²
  double link_damping = 0.2;     // N·m·s/rad
  double rotor_damping = 0.007;  // N·m·s/rad
  double nominal_load = 0.8;     // m·g·l [N·m]
  double stiffness = 31.0;       // N·m/rad
};

/// Link potential load·(1 − cos q_ℓ), B_m = 1.
FjrModel single_joint_model(const SingleJointParameters& params);

/// Same model with the pendulum load replaced by the quadratic ½·load·q_ℓ²,
/// which makes the closed loop linear in the original coordinates.
FjrModel single_joint_linear_model(const SingleJointParameters& params);

/// Gains used with the single-joint model: Λ_ℓ = 10, Λ_m = 15, Π_ℓ = 2Λ_ℓ,
/// Π_m = 4Λ_m, K_ℓd = 0.6, K_md = 0.3.
ControllerConfig single_joint_gains();

/// q_d(t) = (π/4)·sin(t) rad.
SinusoidalTrajectory default_trajectory();

/// Planar two-link arm with M(q) = [a + 2b cos q₂, c + b cos q₂; c + b cos q₂, c],
/// used to exercise the Ṁ ≠ 0 and S_H ≠ 0 paths. Fixture constants only.
struct TwoLinkParameters {
  double a = 5.0 / 3.0;
  double b = 0.5;
  double c = 1.0 / 3.0;
  double gravity_1 = 9.81 * 1.5;  // (m₁l_c1 + m₂l₁)·g
  double gravity_2 = 9.81 * 0.5;  // m₂l_c2·g
  double damping_1 = 0.0;
  double damping_2 = 0.0;
};

MechanicalModel two_link_arm(const TwoLinkParameters& params = {});

}  // namespace vdpbc
