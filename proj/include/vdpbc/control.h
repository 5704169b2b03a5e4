#pragma once

#include "vdpbc/phmech.h"
#include "vdpbc/virtualsys.h"

namespace vdpbc {

/// How the motor reference derivatives q̇_md, q̈_md are obtained.
enum class DerivativeMode {
  analytic,           ///< chain rule through the model equations of motion
  finite_difference,  ///< nested central differences along the virtual flow
};

/// Gains of the flexible-joint tracking controller. All blocks are constant:
/// φ_ℓ(q̃) = Λ_ℓ q̃, φ_m(q̃) = Λ_m q̃, metric blocks Π_ℓ, Π_m, and damping
/// injection K_ℓd, K_md.
struct ControllerConfig {
  Matrix lambda_l;
  Matrix lambda_m;
  Matrix pi_l;
  Matrix pi_m;
  Matrix k_ld;
  Matrix k_md;
  DerivativeMode derivatives = DerivativeMode::analytic;
  double fd_step = 1e-4;

  /// Scalar gains for single-joint models.
  static ControllerConfig scalar(double lambda_l, double lambda_m, double pi_l, double pi_m, double k_ld,
                                 double k_md);

  /// Throws SynthesisError naming the first block that is not symmetric
  /// positive definite or has the wrong size.
  void validate(Index n_link, Index n_motor) const;
};

/// Desired link trajectory with analytic time derivatives.
class ReferenceTrajectory {
 public:
  virtual ~ReferenceTrajectory() = default;

  virtual Index dof() const = 0;
  virtual int max_order() const = 0;
  /// d^order q_d/dt^order at t; throws std::out_of_range above max_order().
  virtual Vector derivative(double t, int order) const = 0;

  Vector position(double t) const { return derivative(t, 0); }
};

/// q_d(t) = offset + amplitude ∘ sin(frequency·t + phase), frequency in rad/s.
class SinusoidalTrajectory final : public ReferenceTrajectory {
 public:
  SinusoidalTrajectory(Vector amplitude, Vector frequency, Vector phase, Vector offset);
  static SinusoidalTrajectory scalar(double amplitude, double frequency, double phase = 0.0, double offset = 0.0);

  Index dof() const override { return amplitude_.size(); }
  int max_order() const override { return 4; }
  Vector derivative(double t, int order) const override;

 private:
  Vector amplitude_;
  Vector frequency_;
  Vector phase_;
  Vector offset_;
};

struct ContractionRates {
  double beta_l = 0.0;  ///< largest β with Π_ℓΛ_ℓ + Λ_ℓᵀΠ_ℓ ≥ 2βΠ_ℓ
  double beta_m = 0.0;
  /// λ_min(D + K_d)·λ_min(M⁻¹) over the full link+motor blocks.
  double damping_rate = 0.0;
  /// min over subsystems of λ_min(D_i + K_id)·λ_min(M_i⁻¹); diagnostic only.
  double blockwise_damping_rate = 0.0;
  double beta = 0.0;  ///< min{β_ℓ, β_m, damping_rate}
};

/// Largest β with ΠΛ + ΛᵀΠ − 2βΠ ≥ 0 (smallest generalized eigenvalue / 2).
double contraction_margin(const Matrix& metric, const Matrix& lambda);

/// −ΠΛ − ΛᵀΠ + 2βΠ; negative semidefinite when β ≤ contraction_margin.
Matrix contraction_certificate(const Matrix& metric, const Matrix& lambda, double beta);

/// Throws SynthesisError when either margin is not positive, or when the model
/// is outside what the flexible-joint controller supports (constant inertia
/// and damping on both sides).
ContractionRates derive_beta(const ControllerConfig& cfg, const FjrModel& model);

/// Rigid (fully actuated) tracking controller, the building block for the
/// link side. Output is a generalized force.
struct LinkControl {
  Vector error;       ///< q̃ = q_v − q_d
  Vector p_ref;       ///< p_r = M(q)(q̇_d − Λq̃)
  Vector p_ref_rate;  ///< ṗ_r along the virtual flow
  Vector sigma;       ///< σ = p_v − p_r
  Vector u_ff;
  Vector u_fb;
  Vector u;
};

LinkControl link_controller(const MechanicalModel& link, const ControllerConfig& cfg, const PhaseState& xv,
                            const PhaseState& x, const ReferenceTrajectory& traj, double t, const Vector& omega);
/// Evaluated on the actual state (x_v := x).
LinkControl link_controller(const MechanicalModel& link, const ControllerConfig& cfg, const PhaseState& x,
                            const ReferenceTrajectory& traj, double t, const Vector& omega);

struct MotorReference {
  Vector q;      ///< q_md = q_ℓv + K⁻¹u_ℓ
  Vector qdot;   ///< q̇_md
  Vector qddot;  ///< q̈_md
};

/// Motor reference built from the link controller with ω_ℓ = 0.
MotorReference motor_reference(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                               const PhaseState& x, const ReferenceTrajectory& traj, double t);
MotorReference motor_reference(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& x,
                               const ReferenceTrajectory& traj, double t);

struct ControlDecomposition {
  Vector u;     ///< u_ff + u_fb
  Vector u_ff;  ///< B_m⁻¹ u_mff
  Vector u_fb;  ///< B_m⁻¹ u_mfb + ω
  LinkControl link;
  MotorReference motor_ref;
  Vector error_m;    ///< q̃_m = q_mv − q_md
  Vector p_mr;       ///< M_m(q̇_md − Λ_m q̃_m − Π_m⁻¹KᵀM_ℓ⁻¹σ_ℓ)
  Vector p_mr_rate;  ///< ṗ_mr
  Vector sigma_m;    ///< p_mv − p_mr
};

ControlDecomposition motor_controller(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                                      const PhaseState& x, const ReferenceTrajectory& traj, double t,
                                      const Vector& omega);

/// u(x, x, t) with ω = 0: the controller applied to the actual robot.
Vector control_input(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& x,
                     const ReferenceTrajectory& traj, double t);

/// Error coordinates x̃ = (q̃_ℓ, q̃_m, σ_ℓ, σ_m) of the virtual state.
Vector error_coordinates(const ControlDecomposition& c);
Vector error_coordinates(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                         const PhaseState& x, const ReferenceTrajectory& traj, double t);

/// Θ = ∂x̃/∂x_v of the analytic error map, columns ordered
/// (q_ℓv, q_mv, p_ℓv, p_mv). Maps virtual-state variations to error-coordinate
/// variations.
Matrix error_jacobian(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                      const PhaseState& x, const ReferenceTrajectory& traj, double t);

/// Inverse of the error map: the virtual state whose error coordinates are
/// `errors` at time t. The map is triangular in (q_ℓ, p_ℓ, q_m, p_m), so the
/// inverse is explicit. `x` only supplies the inertia evaluation point.
PhaseState virtual_state_from_errors(const FjrModel& model, const ControllerConfig& cfg, const Vector& errors,
                                     const PhaseState& x, const ReferenceTrajectory& traj, double t);

/// Closed-loop variational dynamics in error coordinates,
///   δx̃̇ = [J − R] W δx̃ + Ψ δω,
/// with W = diag(Π_ℓ, Π_m, M_ℓ⁻¹, M_m⁻¹). The motor/link coupling blocks are
/// −Π_m⁻¹Kᵀ (row q̃_m, column σ_ℓ) and KΠ_m⁻¹ (row σ_ℓ, column q̃_m).
struct ClosedLoopStructure {
  Matrix interconnection;
  Matrix dissipation;
  Matrix storage_hessian;
  Matrix input;

  Matrix generator() const { return (interconnection - dissipation) * storage_hessian; }
};

ClosedLoopStructure closed_loop_structure(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& x);

/// V = ½δx̃ᵀ diag(Π, M⁻¹) δx̃ for the flexible-joint closed loop.
DifferentialStorage closed_loop_storage(const FjrModel& model, const ControllerConfig& cfg);

/// State on the desired trajectory at time t: x̃ = 0.
PhaseState on_reference_state(const FjrModel& model, const ControllerConfig& cfg,
                              const ReferenceTrajectory& traj, double t);

}  // namespace vdpbc
