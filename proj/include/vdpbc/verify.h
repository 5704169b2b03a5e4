#pragma once

#include "vdpbc/control.h"
#include "vdpbc/phmech.h"
#include "vdpbc/sim.h"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vdpbc {

/// One pass/fail entry with the measured extremal error.
struct CheckResult {
  std::string name;
  std::string property;  ///< the claim being certified, in words
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct Report {
  std::string model;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;

  bool passed() const;
  /// Machine-readable form: {"model", "seed", "passed", "checks": [...]}.
  std::string to_json() const;
};

/// Replacement for E(q, p) used to inject faults into the identity checks.
using WorklessOverride = std::function<Matrix(const MechanicalModel&, const PhaseState&)>;

/// E with the gyroscopic part sign-flipped: −S_H − ½Ṁ.
Matrix flipped_workless_matrix(const MechanicalModel& model, const PhaseState& x);

struct IdentityErrors {
  double power_identity = 0.0;      ///< ½q̇ᵀṀq̇ = q̇ᵀ∂/∂q(½q̇ᵀMq̇)
  double kinetic_gradient = 0.0;    ///< ∂/∂q(½pᵀM⁻¹p) = E·M⁻¹p
  double coordinate_change = 0.0;   ///< ∂/∂q(½pᵀM⁻¹p) = −∂/∂q(½q̇ᵀMq̇)
  double gyroscopic_skew = 0.0;     ///< max ‖S + Sᵀ‖
  Index samples = 0;
};

/// Relative errors at random (q, p) with q ∈ [−π, π]ⁿ, p scaled by
/// c ∈ {1, 2}. Gradients on the right are 5-point central differences.
IdentityErrors workless_identity_errors(const MechanicalModel& model, Index samples, std::uint64_t seed,
                                        const WorklessOverride& workless = {});
CheckResult workless_identity_check(const MechanicalModel& model, Index samples, std::uint64_t seed,
                                    const WorklessOverride& workless = {});

/// Virtual system structure at random states: J_v skew, R_v symmetric,
/// x_v = x compatibility and the variational generator against a central
/// difference Jacobian of the virtual vector field.
struct VirtualStructureErrors {
  double skew = 0.0;
  double symmetry = 0.0;
  double compatibility = 0.0;
  double variational = 0.0;
};
VirtualStructureErrors virtual_structure_errors(const MechanicalModel& model, Index samples, std::uint64_t seed);
CheckResult virtual_structure_check(const MechanicalModel& model, Index samples, std::uint64_t seed);

struct OracleEntry {
  double epsilon = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
};

struct OracleResult {
  std::vector<OracleEntry> entries;
  double observed_order = 0.0;  ///< slope of log error against log ε
  double variation_norm = 0.0;  ///< ‖δx_v(T)‖
};

/// Integrated variation δx_v(T) against (ψ(T, x₀ + εv) − ψ(T, x₀))/ε of the
/// virtual closed-loop flow, for each ε in descending order.
OracleResult variational_flow_oracle(const FjrModel& model, const ControllerConfig& cfg,
                                     const ReferenceTrajectory& traj, const PhaseState& x0, const Vector& direction,
                                     const std::vector<double>& epsilons, double horizon, double dt);
/// Passes when the accuracy run has relative error ≤ tol at ε = 1e−4 and the
/// convergence run (four or more ε) shows an observed order within 0.2 of 1.
CheckResult variational_oracle_check(const OracleResult& accuracy, const OracleResult& convergence,
                                     double rel_tolerance_at_1e4);

/// dV/dt − δyᵀδω ≤ tol pointwise, its time integral ≤ tol, and V = V_ℓ + V_m.
struct PassivityErrors {
  double max_excess = 0.0;       ///< max_t (dV/dt − δyᵀδω)
  double integrated_excess = 0.0;
  double additivity = 0.0;       ///< max relative |V − V_ℓ − V_m|
};
PassivityErrors differential_passivity_errors(const FjrModel& model, const ControllerConfig& cfg,
                                              const ProlongedRecord& record);
CheckResult differential_passivity_check(const FjrModel& model, const ControllerConfig& cfg,
                                         const ProlongedRecord& record, double tolerance);

/// V(t) ≤ V(0)e^{−2βt}(1 + slack), dV/dt ≤ −2βV + abs_tol and β̂ ≥ β.
struct ContractionErrors {
  double max_envelope_ratio = 0.0;  ///< max_t V(t)/(V(0)e^{−2βt})
  double max_rate_excess = 0.0;     ///< max_t (dV/dt + 2βV)
  double beta = 0.0;
  double beta_hat = 0.0;
};
ContractionErrors contraction_errors(const ProlongedRecord& record);
CheckResult contraction_rate_check(const ProlongedRecord& record, double slack, double abs_tolerance);

/// Coupling blocks between the link and motor error subsystems:
/// link_from_motor = KΠ_m⁻¹ (σ_ℓ row) and motor_from_link = −Π_m⁻¹Kᵀ
/// (q̃_m row). `as_printed` instead returns KΠ_m and −Π_mKᵀ.
struct CouplingBlocks {
  Matrix link_from_motor;
  Matrix motor_from_link;
};
CouplingBlocks interconnection_coupling(const Matrix& stiffness, const Matrix& pi_m, bool as_printed = false);

struct DecompositionErrors {
  double reconstruction = 0.0;  ///< corrected coupling vs closed-loop generator
  double printed_reading = 0.0;  ///< same with the coupling as printed
  double skew = 0.0;             ///< ‖J + Jᵀ‖ of the reconstructed interconnection
  double error_dynamics = 0.0;   ///< generator against central differences of x̃ along the flow
};
DecompositionErrors interconnection_decomposition_errors(const FjrModel& model, const ControllerConfig& cfg,
                                                         const ReferenceTrajectory& traj, Index samples,
                                                         std::uint64_t seed);
CheckResult interconnection_decomposition_check(const FjrModel& model, const ControllerConfig& cfg,
                                                const ReferenceTrajectory& traj, Index samples, std::uint64_t seed);

/// max |−ΠΛ − ΛᵀΠ + 2βΠ| eigenvalue over both blocks (must be ≤ tol).
CheckResult certificate_check(const FjrModel& model, const ControllerConfig& cfg, double tolerance);

/// Point on the slowest linearized mode about q = 0 with link angle
/// `link_angle` and zero momenta.
PhaseState slow_mode_state(const MechanicalModel& model, double link_angle);

struct ConservationResult {
  double drift = 0.0;         ///< max_t |H − H(0)|/H(0) at dt
  double drift_halved = 0.0;  ///< same at dt/2
};
ConservationResult energy_conservation(const MechanicalModel& undamped, const PhaseState& x0, double dt,
                                       double horizon);
CheckResult energy_conservation_check(const ConservationResult& result, double tolerance, double min_ratio);

/// Closed loop started exactly on the reference; max |x̃| over the run.
double reference_invariance_error(const FjrModel& model, const ControllerConfig& cfg,
                                  const ReferenceTrajectory& traj, const IntegratorConfig& integ);

/// Fully actuated rigid tracking with the link controller applied directly
/// (ω = 0). Reports the largest step increase of ½q̃ᵀΠq̃ + ½σᵀM⁻¹(q)σ and
/// the final position error.
struct RigidTrackingErrors {
  double max_storage_increase = 0.0;  ///< max step increase of V, relative to V(0)
  double final_error = 0.0;
};
RigidTrackingErrors rigid_tracking_errors(const MechanicalModel& model, const ControllerConfig& cfg,
                                          const ReferenceTrajectory& traj, const IntegratorConfig& integ,
                                          const PhaseState& x0);

enum class VerifyModel { single_joint, two_link };

struct VerifyOptions {
  VerifyModel model = VerifyModel::single_joint;
  std::uint64_t seed = 20240607;
  bool flip_gyroscopic = false;  ///< fault injection for the identity checks
  Index identity_samples = 1000;
};

/// Runs every applicable check concurrently and collects a report.
Report run_verification(const VerifyOptions& options);

}  // namespace vdpbc
