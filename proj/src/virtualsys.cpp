#include "vdpbc/virtualsys.h"

#include "vdpbc/errors.h"

namespace vdpbc {

namespace {

void check_pair(const VirtualMechanicalSystem& vsys, const PhaseState& xv, const PhaseState& x) {
  check_state(vsys.base(), xv);
  check_state(vsys.base(), x);
}

}  // namespace

VirtualMechanicalSystem::VirtualMechanicalSystem(MechanicalModel base) : base_(std::move(base)) {}

Matrix VirtualMechanicalSystem::interconnection(const PhaseState& x) const {
  check_state(base_, x);
  const Index n = dof();
  Matrix j = Matrix::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n).setIdentity();
  j.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
  if (!base_.constant_inertia()) {
    j.bottomRightCorner(n, n) = -gyroscopic_matrix(base_, x.q, base_.solve_inertia(x.q, x.p));
  }
  return j;
}

Matrix VirtualMechanicalSystem::dissipation(const PhaseState& x) const {
  check_state(base_, x);
  const Index n = dof();
  Matrix r = Matrix::Zero(2 * n, 2 * n);
  r.bottomRightCorner(n, n) = base_.damping(x.q);
  if (!base_.constant_inertia()) {
    const Matrix mdot = base_.inertia_derivative(x.q, base_.solve_inertia(x.q, x.p));
    // Symmetrize explicitly so R_v = R_vᵀ holds bit-for-bit.
    r.bottomRightCorner(n, n) -= 0.25 * (mdot + mdot.transpose());
  }
  return r;
}

Matrix VirtualMechanicalSystem::input_matrix(const PhaseState& x) const {
  const Index n = dof();
  Matrix g = Matrix::Zero(2 * n, base_.inputs());
  g.bottomRows(n) = base_.input_matrix(x.q);
  return g;
}

double VirtualMechanicalSystem::hamiltonian(const PhaseState& xv, const PhaseState& x) const {
  check_pair(*this, xv, x);
  return 0.5 * xv.p.dot(base_.solve_inertia(x.q, xv.p)) + base_.potential_energy(xv.q);
}

Vector VirtualMechanicalSystem::hamiltonian_gradient(const PhaseState& xv, const PhaseState& x) const {
  check_pair(*this, xv, x);
  Vector grad(2 * dof());
  grad << base_.potential_gradient(xv.q), base_.solve_inertia(x.q, xv.p);
  return grad;
}

Matrix VirtualMechanicalSystem::hamiltonian_hessian(const PhaseState& xv, const PhaseState& x) const {
  check_pair(*this, xv, x);
  const Index n = dof();
  Matrix h = Matrix::Zero(2 * n, 2 * n);
  h.topLeftCorner(n, n) = base_.potential_hessian(xv.q);
  h.bottomRightCorner(n, n) = base_.inertia_inverse(x.q);
  return h;
}

PhaseState virtual_vector_field(const VirtualMechanicalSystem& vsys, const PhaseState& xv, const PhaseState& x,
                                const Vector& u, double /*t*/) {
  check_pair(vsys, xv, x);
  const MechanicalModel& model = vsys.base();
  if (u.size() != model.inputs()) {
    throw DimensionError("virtual system input has the wrong dimension");
  }
  if (!u.allFinite()) {
    throw DomainError("input has non-finite components");
  }
  const Vector velocity = model.solve_inertia(x.q, xv.p);
  PhaseState dxv;
  // Same operation order as the plant field, so x_v = x reproduces it bitwise.
  Vector force = model.potential_gradient(xv.q);
  if (!model.constant_inertia()) {
    force += workless_matrix(model, x) * velocity;
  }
  dxv.q = velocity;
  dxv.p = -force - model.damping(x.q) * velocity;
  if (model.inputs() > 0) {
    dxv.p += model.input_matrix(x.q) * u;
  }
  return dxv;
}

VariationalDerivative prolonged_vector_field(const VirtualMechanicalSystem& vsys, const VariationalState& vs,
                                             const PhaseState& x, const Vector& u, const Vector& du, double t) {
  const Index n = vsys.dof();
  if (vs.dx.size() != 2 * n) {
    throw DimensionError("variation has the wrong dimension");
  }
  if (du.size() != vsys.base().inputs()) {
    throw DimensionError("input variation has the wrong dimension");
  }
  VariationalDerivative out;
  out.x = virtual_vector_field(vsys, vs.x, x, u, t);
  const Matrix generator = (vsys.interconnection(x) - vsys.dissipation(x)) * vsys.hamiltonian_hessian(vs.x, x);
  out.dx = generator * vs.dx + vsys.input_matrix(x) * du;
  return out;
}

Vector variational_output(const VirtualMechanicalSystem& vsys, const VariationalState& vs, const PhaseState& x) {
  return vsys.input_matrix(x).transpose() * (vsys.hamiltonian_hessian(vs.x, x) * vs.dx);
}

// ---------------------------------------------------------------------------

DifferentialStorage::DifferentialStorage(MetricFn metric, MetricFn metric_rate)
    : metric_(std::move(metric)), metric_rate_(std::move(metric_rate)) {
  if (!metric_) {
    throw std::invalid_argument("differential storage needs a metric");
  }
}

Matrix DifferentialStorage::metric(const Vector& error_state, double t) const {
  Matrix w = metric_(error_state, t);
  if (w.rows() != w.cols() || w.rows() != error_state.size()) {
    throw DimensionError("storage metric has the wrong shape");
  }
  if (!w.allFinite() || w != w.transpose()) {
    throw CertificateError("storage metric is not symmetric");
  }
  const Eigen::LLT<Matrix> llt(w);
  if (llt.info() != Eigen::Success) {
    throw CertificateError("storage metric is not positive definite");
  }
  return w;
}

Matrix DifferentialStorage::metric_rate(const Vector& error_state, double t) const {
  if (!metric_rate_) {
    return Matrix::Zero(error_state.size(), error_state.size());
  }
  return metric_rate_(error_state, t);
}

double storage_value(const DifferentialStorage& ds, const Vector& error_state, const Vector& variation, double t) {
  const Matrix w = ds.metric(error_state, t);
  if (variation.size() != w.rows()) {
    throw DimensionError("variation has the wrong dimension");
  }
  return 0.5 * variation.dot(w * variation);
}

double storage_rate(const DifferentialStorage& ds, const StorageSample& sample) {
  const Matrix w = ds.metric(sample.error_state, sample.t);
  if (sample.variation.size() != w.rows() || sample.variation_rate.size() != w.rows()) {
    throw DimensionError("storage sample has the wrong dimension");
  }
  if (sample.variation.isZero(0.0)) {
    return 0.0;
  }
  double rate = sample.variation.dot(w * sample.variation_rate);
  rate += 0.5 * sample.variation.dot(ds.metric_rate(sample.error_state, sample.t) * sample.variation);
  return rate;
}

}  // namespace vdpbc
