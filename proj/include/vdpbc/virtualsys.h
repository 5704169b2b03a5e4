#pragma once

#include "vdpbc/phmech.h"

#include <functional>

namespace vdpbc {

/// pH-like virtual control system attached to a mechanical model.
///
///   ẋ_v = [J_v(x) − R_v(x)] ∂H_v/∂x_v(x_v, x) + g(x) u
///   H_v(x_v, x) = ½ p_vᵀ M⁻¹(q) p_v + P(q_v)
///
/// with J_v = [0 I; −I −S_H(x)] and R_v = diag(0, D(q) − ½Ṁ(q)). Inertia and
/// structure matrices are taken at the actual state x; the potential at x_v.
/// R_v is symmetric but not necessarily positive semidefinite.
class VirtualMechanicalSystem {
 public:
  explicit VirtualMechanicalSystem(MechanicalModel base);
  explicit VirtualMechanicalSystem(const FjrModel& fjr) : VirtualMechanicalSystem(fjr.combined()) {}

  const MechanicalModel& base() const { return base_; }
  Index dof() const { return base_.dof(); }

  Matrix interconnection(const PhaseState& x) const;
  Matrix dissipation(const PhaseState& x) const;
  Matrix input_matrix(const PhaseState& x) const;

  double hamiltonian(const PhaseState& xv, const PhaseState& x) const;
  /// Stacked [∂H_v/∂q_v; ∂H_v/∂p_v].
  Vector hamiltonian_gradient(const PhaseState& xv, const PhaseState& x) const;
  /// block-diag(∂²P/∂q_v², M⁻¹(q)).
  Matrix hamiltonian_hessian(const PhaseState& xv, const PhaseState& x) const;

 private:
  MechanicalModel base_;
};

/// (x_v, δx_v) on the tangent bundle; δx_v is stacked [δq_v; δp_v].
struct VariationalState {
  PhaseState x;
  Vector dx;
};

struct VariationalDerivative {
  PhaseState x;  ///< ẋ_v
  Vector dx;     ///< δẋ_v
};

PhaseState virtual_vector_field(const VirtualMechanicalSystem& vsys, const PhaseState& xv, const PhaseState& x,
                                const Vector& u, double t);

/// Prolonged virtual dynamics:
///   δẋ_v = [J_v(x) − R_v(x)] ∂²H_v/∂x_v²(x_v, x) δx_v + g(x) δu.
VariationalDerivative prolonged_vector_field(const VirtualMechanicalSystem& vsys, const VariationalState& vs,
                                             const PhaseState& x, const Vector& u, const Vector& du, double t);

/// δy_v = gᵀ(x) ∂²H_v/∂x_v² δx_v.
Vector variational_output(const VirtualMechanicalSystem& vsys, const VariationalState& vs, const PhaseState& x);

/// Quadratic differential storage V = ½ δx̃ᵀ W(x̃, t) δx̃.
///
/// The metric is evaluated on error coordinates x̃; `metric_rate` (optional)
/// supplies dW/dt along the flow and defaults to zero for constant metrics.
class DifferentialStorage {
 public:
  using MetricFn = std::function<Matrix(const Vector& error_state, double t)>;

  explicit DifferentialStorage(MetricFn metric, MetricFn metric_rate = {});

  /// Throws CertificateError if the metric is not symmetric positive definite.
  Matrix metric(const Vector& error_state, double t) const;
  Matrix metric_rate(const Vector& error_state, double t) const;

 private:
  MetricFn metric_;
  MetricFn metric_rate_;
};

double storage_value(const DifferentialStorage& ds, const Vector& error_state, const Vector& variation, double t);

/// One point of a prolonged closed-loop trajectory in error coordinates.
struct StorageSample {
  Vector error_state;     ///< x̃
  Vector variation;       ///< δx̃
  Vector variation_rate;  ///< δx̃̇ from the variational vector field
  double t = 0.0;
};

/// dV/dt = δx̃ᵀ W δx̃̇ + ½ δx̃ᵀ Ẇ δx̃.
double storage_rate(const DifferentialStorage& ds, const StorageSample& sample);

}  // namespace vdpbc
