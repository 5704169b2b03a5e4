#include "vdpbc/phmech.h"

#include "vdpbc/errors.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vdpbc {

namespace {

std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os << v.transpose().format(Eigen::IOFormat(Eigen::FullPrecision, Eigen::DontAlignCols, ", ", ", ", "", "", "[", "]"));
  return os.str();
}

void require_size(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << " has dimension " << v.size() << ", expected " << n;
    throw DimensionError(os.str());
  }
}

void require_square(const Matrix& m, Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    std::ostringstream os;
    os << what << " is " << m.rows() << "x" << m.cols() << ", expected " << n << "x" << n;
    throw DimensionError(os.str());
  }
}

}  // namespace

PhaseState PhaseState::from_stacked(const Vector& x) {
  if (x.size() % 2 != 0) {
    throw DimensionError("stacked phase state must have even length");
  }
  const Index n = x.size() / 2;
  return {x.head(n), x.tail(n)};
}

Vector PhaseState::stacked() const {
  Vector x(q.size() + p.size());
  x << q, p;
  return x;
}

// ---------------------------------------------------------------------------
// Potentials

Potential zero_potential(Index n) {
  Potential pot;
  pot.value = [](const Vector&) { return 0.0; };
  pot.gradient = [n](const Vector&) -> Vector { return Vector::Zero(n); };
  pot.hessian = [n](const Vector&) -> Matrix { return Matrix::Zero(n, n); };
  pot.hessian_derivative = [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); };
  pot.identically_zero = true;
  return pot;
}

Potential quadratic_potential(Matrix stiffness) {
  if (stiffness.rows() != stiffness.cols()) {
    throw DimensionError("quadratic potential needs a square matrix");
  }
  const Index n = stiffness.rows();
  Potential pot;
  pot.value = [stiffness](const Vector& q) { return 0.5 * q.dot(stiffness * q); };
  pot.gradient = [stiffness](const Vector& q) -> Vector { return stiffness * q; };
  pot.hessian = [stiffness](const Vector&) -> Matrix { return stiffness; };
  pot.hessian_derivative = [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); };
  return pot;
}

Potential pendulum_potential(Vector load) {
  Potential pot;
  pot.value = [load](const Vector& q) { return (load.array() * (1.0 - q.array().cos())).sum(); };
  pot.gradient = [load](const Vector& q) -> Vector { return load.array() * q.array().sin(); };
  pot.hessian = [load](const Vector& q) -> Matrix {
    return (load.array() * q.array().cos()).matrix().asDiagonal();
  };
  pot.hessian_derivative = [load](const Vector& q, const Vector& v) -> Matrix {
    return (-load.array() * q.array().sin() * v.array()).matrix().asDiagonal();
  };
  return pot;
}

// ---------------------------------------------------------------------------
// MechanicalModel

MechanicalModel::MechanicalModel(Definition def) : def_(std::move(def)) {
  if (def_.dof <= 0) {
    throw std::invalid_argument("mechanical model needs a positive configuration dimension");
  }
  if (def_.inputs < 0 || def_.inputs > def_.dof) {
    throw std::invalid_argument("mechanical model input count must lie in [0, dof]");
  }
  if (!def_.inertia || !def_.damping || !def_.input_matrix || !def_.potential.value ||
      !def_.potential.gradient || !def_.potential.hessian) {
    throw std::invalid_argument("mechanical model definition is incomplete");
  }
}

MechanicalModel MechanicalModel::with_constant_coefficients(const Matrix& inertia, const Matrix& damping,
                                                            const Matrix& input_matrix, Potential potential) {
  const Index n = inertia.rows();
  require_square(inertia, n, "inertia");
  require_square(damping, n, "damping");
  if (input_matrix.rows() != n) {
    throw DimensionError("input matrix row count must equal the configuration dimension");
  }
  Definition def;
  def.dof = n;
  def.inputs = input_matrix.cols();
  def.inertia = [inertia](const Vector&) -> Matrix { return inertia; };
  def.inertia_derivative = [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); };
  def.damping = [damping](const Vector&) -> Matrix { return damping; };
  def.input_matrix = [input_matrix](const Vector&) -> Matrix { return input_matrix; };
  def.potential = std::move(potential);
  def.constant_inertia = true;
  def.constant_damping = true;
  return MechanicalModel(std::move(def));
}

Matrix MechanicalModel::inertia(const Vector& q) const { return def_.inertia(q); }

Matrix MechanicalModel::inertia_derivative(const Vector& q, const Vector& v) const {
  if (def_.inertia_derivative) {
    return def_.inertia_derivative(q, v);
  }
  return inertia_derivative_fd(q, v);
}

Matrix MechanicalModel::inertia_derivative_fd(const Vector& q, const Vector& v) const {
  Matrix result = Matrix::Zero(dof(), dof());
  Vector shifted = q;
  for (Index k = 0; k < dof(); ++k) {
    if (v(k) == 0.0) continue;
    const double h = 1e-6 * std::max(1.0, std::abs(q(k)));
    shifted(k) = q(k) + h;
    Matrix plus = def_.inertia(shifted);
    shifted(k) = q(k) - h;
    Matrix minus = def_.inertia(shifted);
    shifted(k) = q(k);
    result += v(k) * (plus - minus) / (2.0 * h);
  }
  return result;
}

Matrix MechanicalModel::damping(const Vector& q) const { return def_.damping(q); }

Matrix MechanicalModel::input_matrix(const Vector& q) const { return def_.input_matrix(q); }

Vector MechanicalModel::solve_inertia(const Vector& q, const Vector& rhs) const {
  const Eigen::LLT<Matrix> llt(inertia(q));
  if (llt.info() != Eigen::Success) {
    throw NumericError("inertia matrix is not positive definite at q = " + format_vector(q));
  }
  return llt.solve(rhs);
}

Matrix MechanicalModel::inertia_inverse(const Vector& q) const {
  const Eigen::LLT<Matrix> llt(inertia(q));
  if (llt.info() != Eigen::Success) {
    throw NumericError("inertia matrix is not positive definite at q = " + format_vector(q));
  }
  return llt.solve(Matrix::Identity(dof(), dof()));
}

// ---------------------------------------------------------------------------
// FjrModel

namespace {

MechanicalModel make_combined(const MechanicalModel& link, const MechanicalModel& motor, const Matrix& k) {
  const Index nl = link.dof();
  const Index nm = motor.dof();
  const Index n = nl + nm;

  auto block_diag = [nl, nm, n](const Matrix& a, const Matrix& b) {
    Matrix m = Matrix::Zero(n, n);
    m.topLeftCorner(nl, nl) = a;
    m.bottomRightCorner(nm, nm) = b;
    return m;
  };

  MechanicalModel::Definition def;
  def.dof = n;
  def.inputs = motor.inputs();
  def.inertia = [=](const Vector& q) { return block_diag(link.inertia(q.head(nl)), motor.inertia(q.tail(nm))); };
  def.inertia_derivative = [=](const Vector& q, const Vector& v) {
    return block_diag(link.inertia_derivative(q.head(nl), v.head(nl)),
                      motor.inertia_derivative(q.tail(nm), v.tail(nm)));
  };
  def.damping = [=](const Vector& q) { return block_diag(link.damping(q.head(nl)), motor.damping(q.tail(nm))); };
  def.input_matrix = [=](const Vector& q) {
    Matrix b = Matrix::Zero(n, motor.inputs());
    b.bottomRows(nm) = motor.input_matrix(q.tail(nm));
    return b;
  };

  const Potential& pl = link.potential();
  Potential pot;
  pot.value = [=](const Vector& q) {
    const Vector zeta = q.tail(nm) - q.head(nl);
    return pl.value(q.head(nl)) + 0.5 * zeta.dot(k * zeta);
  };
  pot.gradient = [=](const Vector& q) {
    const Vector spring = k * (q.tail(nm) - q.head(nl));
    Vector g(n);
    g << pl.gradient(q.head(nl)) - spring, spring;
    return g;
  };
  pot.hessian = [=](const Vector& q) {
    Matrix h(n, n);
    h << pl.hessian(q.head(nl)) + k, -k, -k, k;
    return h;
  };
  if (pl.hessian_derivative) {
    pot.hessian_derivative = [=](const Vector& q, const Vector& v) {
      Matrix h = Matrix::Zero(n, n);
      h.topLeftCorner(nl, nl) = pl.hessian_derivative(q.head(nl), v.head(nl));
      return h;
    };
  }
  def.potential = std::move(pot);
  def.constant_inertia = link.constant_inertia() && motor.constant_inertia();
  def.constant_damping = link.constant_damping() && motor.constant_damping();
  return MechanicalModel(std::move(def));
}

}  // namespace

FjrModel::FjrModel(MechanicalModel link, MechanicalModel motor, Matrix stiffness)
    : link_(std::move(link)),
      motor_(std::move(motor)),
      stiffness_(std::move(stiffness)),
      combined_([this] {
        if (link_.dof() != motor_.dof()) {
          throw DimensionError("flexible-joint model needs one motor per link coordinate");
        }
        require_square(stiffness_, link_.dof(), "joint stiffness");
        if (!stiffness_.isApprox(stiffness_.transpose(), 1e-12)) {
          throw std::invalid_argument("joint stiffness must be symmetric");
        }
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(stiffness_, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() <= 0.0) {
          throw std::invalid_argument("joint stiffness must be positive definite");
        }
        if (!motor_.potential().identically_zero) {
          throw std::invalid_argument("motor subsystem must carry no potential of its own");
        }
        if (motor_.inputs() != motor_.dof()) {
          throw DimensionError("motor input matrix must be square");
        }
        return make_combined(link_, motor_, stiffness_);
      }()) {}

double FjrModel::joint_potential(const Vector& q) const {
  const Vector zeta = q.tail(motor_dof()) - q.head(link_dof());
  return 0.5 * zeta.dot(stiffness_ * zeta);
}

PhaseState FjrModel::link_state(const PhaseState& x) const {
  return {x.q.head(link_dof()), x.p.head(link_dof())};
}

PhaseState FjrModel::motor_state(const PhaseState& x) const {
  return {x.q.tail(motor_dof()), x.p.tail(motor_dof())};
}

PhaseState FjrModel::join(const PhaseState& link, const PhaseState& motor) const {
  PhaseState x = PhaseState::zero(dof());
  x.q << link.q, motor.q;
  x.p << link.p, motor.p;
  return x;
}

// ---------------------------------------------------------------------------
// Operations

void check_state(const MechanicalModel& model, const PhaseState& x) {
  require_size(x.q, model.dof(), "position");
  require_size(x.p, model.dof(), "momentum");
  if (!x.all_finite()) {
    throw DomainError("phase state has non-finite components");
  }
}

double hamiltonian(const MechanicalModel& model, const PhaseState& x) {
  check_state(model, x);
  const Vector velocity = model.solve_inertia(x.q, x.p);
  return 0.5 * x.p.dot(velocity) + model.potential_energy(x.q);
}

double hamiltonian(const FjrModel& model, const PhaseState& x) { return hamiltonian(model.combined(), x); }

Matrix gyroscopic_matrix(const MechanicalModel& model, const Vector& q, const Vector& qdot) {
  const Index n = model.dof();
  // Column j holds (∂M/∂q_j)·q̇.
  Matrix n_mat(n, n);
  for (Index j = 0; j < n; ++j) {
    n_mat.col(j) = model.inertia_derivative(q, Vector::Unit(n, j)) * qdot;
  }
  return 0.5 * (n_mat - n_mat.transpose());
}

Matrix workless_matrix(const MechanicalModel& model, const PhaseState& x) {
  check_state(model, x);
  if (model.constant_inertia()) {
    return Matrix::Zero(model.dof(), model.dof());
  }
  const Vector velocity = model.solve_inertia(x.q, x.p);
  return gyroscopic_matrix(model, x.q, velocity) - 0.5 * model.inertia_derivative(x.q, velocity);
}

Matrix workless_matrix(const FjrModel& model, const PhaseState& x) {
  check_state(model.combined(), x);
  const Index nl = model.link_dof();
  const Index nm = model.motor_dof();
  Matrix e = Matrix::Zero(model.dof(), model.dof());
  e.topLeftCorner(nl, nl) = workless_matrix(model.link(), model.link_state(x));
  e.bottomRightCorner(nm, nm) = workless_matrix(model.motor(), model.motor_state(x));
  return e;
}

HamiltonianGradient gradient_H(const MechanicalModel& model, const PhaseState& x) {
  check_state(model, x);
  HamiltonianGradient grad;
  grad.dp = model.solve_inertia(x.q, x.p);
  grad.dq = model.potential_gradient(x.q);
  if (!model.constant_inertia()) {
    grad.dq += workless_matrix(model, x) * grad.dp;
  }
  return grad;
}

HamiltonianGradient gradient_H(const FjrModel& model, const PhaseState& x) {
  return gradient_H(model.combined(), x);
}

PhaseState ph_vector_field(const MechanicalModel& model, const PhaseState& x, const Vector& u, double /*t*/) {
  const HamiltonianGradient grad = gradient_H(model, x);
  require_size(u, model.inputs(), "input");
  if (!u.allFinite()) {
    throw DomainError("input has non-finite components");
  }
  PhaseState dx;
  dx.q = grad.dp;
  dx.p = -grad.dq - model.damping(x.q) * grad.dp;
  if (model.inputs() > 0) {
    dx.p += model.input_matrix(x.q) * u;
  }
  return dx;
}

PhaseState ph_vector_field(const FjrModel& model, const PhaseState& x, const Vector& u, double t) {
  return ph_vector_field(model.combined(), x, u, t);
}

Vector natural_output(const MechanicalModel& model, const PhaseState& x) {
  check_state(model, x);
  return model.input_matrix(x.q).transpose() * model.solve_inertia(x.q, x.p);
}

Vector natural_output(const FjrModel& model, const PhaseState& x) {
  return natural_output(model.combined(), x);
}

}  // namespace vdpbc
