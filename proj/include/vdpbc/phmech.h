#pragma once

#include <Eigen/Dense>

#include <functional>

namespace vdpbc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Point (q, p) on the phase space of a mechanical system. Also used for
/// phase-space derivatives (q̇, ṗ).
struct PhaseState {
  Vector q;
  Vector p;

  PhaseState() = default;
  PhaseState(Vector q_in, Vector p_in) : q(std::move(q_in)), p(std::move(p_in)) {}

  static PhaseState zero(Index n) { return {Vector::Zero(n), Vector::Zero(n)}; }
  /// Splits a stacked [q; p] vector of even length.
  static PhaseState from_stacked(const Vector& x);

  Vector stacked() const;
  Index dof() const { return q.size(); }
  bool all_finite() const { return q.allFinite() && p.allFinite(); }
};

/// Potential energy with analytic derivatives.
///
/// `hessian_derivative(q, v)` is the directional derivative of the Hessian,
/// d/ds ∂²P/∂q²(q + s·v) at s = 0. Only the flexible-joint controller needs
/// it (its reference chain differentiates the link gravity torque twice).
struct Potential {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
  std::function<Matrix(const Vector&, const Vector&)> hessian_derivative;
  bool identically_zero = false;
};

Potential zero_potential(Index n);
/// ½ qᵀ S q for symmetric S.
Potential quadratic_potential(Matrix stiffness);
/// Σ load_i·(1 − cos q_i): one gravity-loaded pendulum per coordinate,
/// normalized so P(0) = 0. `load` is m·g·l per joint [N·m].
Potential pendulum_potential(Vector load);

/// Port-Hamiltonian mechanical system: H = ½pᵀM⁻¹(q)p + P(q), J canonical,
/// R = diag(0, D(q)), g = [0; B(q)]. Immutable after construction.
class MechanicalModel {
 public:
  using MatrixField = std::function<Matrix(const Vector&)>;
  using DirectionalField = std::function<Matrix(const Vector&, const Vector&)>;

  struct Definition {
    Index dof = 0;
    Index inputs = 0;
    MatrixField inertia;
    /// Ṁ(q) for q̇ = v. Optional; a central finite difference of `inertia`
    /// is used when absent.
    DirectionalField inertia_derivative;
    MatrixField damping;
    Potential potential;
    MatrixField input_matrix;
    bool constant_inertia = false;
    bool constant_damping = false;
  };

  explicit MechanicalModel(Definition def);

  /// Model whose inertia, damping and input matrices do not depend on q.
  static MechanicalModel with_constant_coefficients(const Matrix& inertia, const Matrix& damping,
                                                    const Matrix& input_matrix, Potential potential);

  Index dof() const { return def_.dof; }
  Index inputs() const { return def_.inputs; }

  Matrix inertia(const Vector& q) const;
  Matrix inertia_derivative(const Vector& q, const Vector& v) const;
  bool has_analytic_inertia_derivative() const { return static_cast<bool>(def_.inertia_derivative); }
  /// Finite-difference Ṁ, independent of any analytic derivative supplied.
  Matrix inertia_derivative_fd(const Vector& q, const Vector& v) const;
  Matrix damping(const Vector& q) const;
  Matrix input_matrix(const Vector& q) const;

  const Potential& potential() const { return def_.potential; }
  double potential_energy(const Vector& q) const { return def_.potential.value(q); }
  Vector potential_gradient(const Vector& q) const { return def_.potential.gradient(q); }
  Matrix potential_hessian(const Vector& q) const { return def_.potential.hessian(q); }

  bool constant_inertia() const { return def_.constant_inertia; }
  bool constant_damping() const { return def_.constant_damping; }

  /// M⁻¹(q)·rhs; throws NumericError naming q when M(q) is not positive definite.
  Vector solve_inertia(const Vector& q, const Vector& rhs) const;
  Matrix inertia_inverse(const Vector& q) const;

 private:
  Definition def_;
};

/// Flexible-joint robot: link and motor subsystems coupled through the joint
/// spring P_m = ½ζᵀKζ with ζ = q_m − q_ℓ. The input acts on the motor
/// momenta through B_m(q_m), taken from the motor model's input matrix.
class FjrModel {
 public:
  FjrModel(MechanicalModel link, MechanicalModel motor, Matrix stiffness);

  const MechanicalModel& link() const { return link_; }
  const MechanicalModel& motor() const { return motor_; }
  const Matrix& stiffness() const { return stiffness_; }
  /// The full model on q = (q_ℓ, q_m).
  const MechanicalModel& combined() const { return combined_; }

  Index link_dof() const { return link_.dof(); }
  Index motor_dof() const { return motor_.dof(); }
  Index dof() const { return link_.dof() + motor_.dof(); }
  Index inputs() const { return motor_.inputs(); }

  Matrix motor_input_matrix(const Vector& q_m) const { return motor_.input_matrix(q_m); }
  double joint_potential(const Vector& q) const;

  PhaseState link_state(const PhaseState& x) const;
  PhaseState motor_state(const PhaseState& x) const;
  PhaseState join(const PhaseState& link, const PhaseState& motor) const;

 private:
  MechanicalModel link_;
  MechanicalModel motor_;
  Matrix stiffness_;
  MechanicalModel combined_;
};

struct HamiltonianGradient {
  Vector dq;  ///< ∂H/∂q
  Vector dp;  ///< ∂H/∂p = M⁻¹(q)p
};

void check_state(const MechanicalModel& model, const PhaseState& x);

double hamiltonian(const MechanicalModel& model, const PhaseState& x);
double hamiltonian(const FjrModel& model, const PhaseState& x);

/// ∂H/∂q is assembled as ∂P/∂q + E(q,p)·M⁻¹p, i.e. the kinetic part goes
/// through the gyroscopic/inertia-variation matrix rather than through a
/// derivative of M⁻¹.
HamiltonianGradient gradient_H(const MechanicalModel& model, const PhaseState& x);
HamiltonianGradient gradient_H(const FjrModel& model, const PhaseState& x);

/// Skew-symmetric gyroscopic matrix S_L(q, q̇), exactly skew by construction.
/// Satisfies S_L q̇ = ½Ṁq̇ − ∂/∂q(½q̇ᵀMq̇); equals C − ½Ṁ for the
/// Christoffel-symbol Coriolis matrix C.
Matrix gyroscopic_matrix(const MechanicalModel& model, const Vector& q, const Vector& qdot);

/// E(q,p) = S_H(q,p) − ½Ṁ(q) with S_H(q,p) = S_L(q, M⁻¹p) and Ṁ evaluated
/// along q̇ = M⁻¹p.
Matrix workless_matrix(const MechanicalModel& model, const PhaseState& x);
/// Block-diagonal diag(E_ℓ, E_m).
Matrix workless_matrix(const FjrModel& model, const PhaseState& x);

/// (q̇, ṗ) = (∂H/∂p, −∂H/∂q − D ∂H/∂p + B u).
PhaseState ph_vector_field(const MechanicalModel& model, const PhaseState& x, const Vector& u, double t);
PhaseState ph_vector_field(const FjrModel& model, const PhaseState& x, const Vector& u, double t);

/// y = Bᵀ(q) M⁻¹(q) p.
Vector natural_output(const MechanicalModel& model, const PhaseState& x);
Vector natural_output(const FjrModel& model, const PhaseState& x);

}  // namespace vdpbc
