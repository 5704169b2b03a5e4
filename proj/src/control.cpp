#include "vdpbc/control.h"

#include "vdpbc/errors.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vdpbc {

namespace {

bool is_symmetric(const Matrix& m) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

void require_square(const Matrix& m, Index n, const char* name) {
  if (m.rows() != n || m.cols() != n) {
    throw SynthesisError(fmt::format("{} must be {}x{}, got {}x{}", name, n, n, m.rows(), m.cols()));
  }
  if (!m.allFinite()) {
    throw SynthesisError(fmt::format("{} has non-finite entries", name));
  }
}

void require_spd(const Matrix& m, Index n, const char* name) {
  require_square(m, n, name);
  if (!is_symmetric(m)) {
    throw SynthesisError(fmt::format("{} is not symmetric", name));
  }
  if (Eigen::LLT<Matrix>(m).info() != Eigen::Success) {
    throw SynthesisError(fmt::format("{} is not positive definite", name));
  }
}

double min_eigenvalue(const Matrix& symmetric) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(symmetric, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

Matrix block_diagonal(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

Matrix symmetric_inverse(const Matrix& m) {
  const Matrix inv = m.llt().solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

void require_constant_coefficients(const FjrModel& model) {
  const auto check = [](const MechanicalModel& side, const char* name) {
    if (!side.constant_inertia() || !side.constant_damping()) {
      throw SynthesisError(
          fmt::format("flexible-joint controller requires constant {} inertia and damping", name));
    }
  };
  check(model.link(), "link");
  check(model.motor(), "motor");
}

void require_order(const ReferenceTrajectory& traj, int order) {
  if (traj.max_order() < order) {
    throw std::invalid_argument(
        fmt::format("reference trajectory provides derivatives up to order {}, {} required", traj.max_order(), order));
  }
}

void check_link_gains(const ControllerConfig& cfg, Index n) {
  require_square(cfg.lambda_l, n, "lambda_l");
  require_spd(cfg.pi_l, n, "pi_l");
  require_spd(cfg.k_ld, n, "k_ld");
  if (contraction_margin(cfg.pi_l, cfg.lambda_l) <= 0.0) {
    throw SynthesisError("link contraction inequality pi_l*lambda_l + lambda_l'*pi_l > 0 fails");
  }
}

PhaseState shifted(const PhaseState& s, const PhaseState& direction, double h) {
  return {s.q + h * direction.q, s.p + h * direction.p};
}

/// Π_m⁻¹Kᵀ M_ℓ⁻¹ applied to a link momentum.
Vector coupling_velocity(const FjrModel& model, const ControllerConfig& cfg, const Vector& q_link,
                         const Vector& link_momentum) {
  return cfg.pi_m.llt().solve(model.stiffness().transpose() * model.link().solve_inertia(q_link, link_momentum));
}

/// Reference chain along the virtual flow: link rates and (q_md, q̇_md, q̈_md).
struct ReferenceChain {
  LinkControl link;
  Vector link_momentum_rate;  // ṗ_ℓv with ω_ℓ = 0
  MotorReference motor;
};

ReferenceChain analytic_chain(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                              const PhaseState& x, const ReferenceTrajectory& traj, double t) {
  const MechanicalModel& link = model.link();
  const MechanicalModel& motor = model.motor();
  const Index n = link.dof();
  const PhaseState lxv = model.link_state(xv);
  const PhaseState mxv = model.motor_state(xv);
  const PhaseState lx = model.link_state(x);
  const PhaseState mx = model.motor_state(x);

  ReferenceChain out;
  out.link = link_controller(link, cfg, lxv, lx, traj, t, Vector::Zero(n));

  const Matrix& k = model.stiffness();
  const Eigen::LLT<Matrix> k_llt(k);
  if (k_llt.info() != Eigen::Success) {
    throw NumericError("joint stiffness is singular");
  }

  const Vector& a = lxv.q;
  const Vector& b = mxv.q;
  const Matrix m_l = link.inertia(lx.q);
  const Matrix d_l = link.damping(lx.q);
  const Vector v = link.solve_inertia(lx.q, lxv.p);
  const Vector w = motor.solve_inertia(mx.q, mxv.p);
  const Vector e_rate = v - traj.derivative(t, 1);

  const Vector c_dot = -link.potential_gradient(a) + k * (b - a) - d_l * v;
  const Vector v_dot = link.solve_inertia(lx.q, c_dot);
  out.link_momentum_rate = c_dot;

  MotorReference& ref = out.motor;
  ref.q = a + k_llt.solve(out.link.u);

  if (cfg.derivatives == DerivativeMode::analytic) {
    require_order(traj, 4);
    const Matrix g1 = m_l * cfg.lambda_l + cfg.k_ld;
    const Matrix g0 = d_l * cfg.lambda_l + cfg.pi_l + cfg.k_ld * cfg.lambda_l;
    const Matrix hess = link.potential_hessian(a);
    const auto& hess_rate = link.potential().hessian_derivative;
    if (!hess_rate) {
      throw SynthesisError("link potential lacks a Hessian derivative");
    }

    const Vector c_ddot = -hess * v + k * (w - v) - d_l * v_dot;
    const Vector v_ddot = link.solve_inertia(lx.q, c_ddot);
    const Vector e_acc = v_dot - traj.derivative(t, 2);
    const Vector e_jerk = v_ddot - traj.derivative(t, 3);

    const Vector u_rate = m_l * traj.derivative(t, 3) + d_l * traj.derivative(t, 2) + hess * v - g1 * e_acc -
                          g0 * e_rate;
    const Vector u_acc = m_l * traj.derivative(t, 4) + d_l * traj.derivative(t, 3) + hess_rate(a, v) * v +
                         hess * v_dot - g1 * e_jerk - g0 * e_acc;
    ref.qdot = v + k_llt.solve(u_rate);
    ref.qddot = v_dot + k_llt.solve(u_acc);
    return out;
  }

  // Lie derivatives along the unforced virtual flow by central differences.
  // Constant inertia makes that flow independent of the actual state.
  const double h = cfg.fd_step;
  const MechanicalModel& combined = model.combined();
  const Vector zero_u = Vector::Zero(model.inputs());
  const auto flow = [&](const PhaseState& s, double tau) { return ph_vector_field(combined, s, zero_u, tau); };
  const auto q_md = [&](const PhaseState& s, double tau) -> Vector {
    const LinkControl lc = link_controller(link, cfg, model.link_state(s), lx, traj, tau, Vector::Zero(n));
    return s.q.head(n) + k_llt.solve(lc.u);
  };
  const auto lie = [&](const auto& fn) {
    return [&, fn](const PhaseState& s, double tau) -> Vector {
      const PhaseState f = flow(s, tau);
      return (fn(shifted(s, f, h), tau + h) - fn(shifted(s, f, -h), tau - h)) / (2.0 * h);
    };
  };
  const auto qd_md = lie(q_md);
  const auto qdd_md = lie(qd_md);
  ref.qdot = qd_md(xv, t);
  ref.qddot = qdd_md(xv, t);
  return out;
}

}  // namespace

ControllerConfig ControllerConfig::scalar(double lambda_l, double lambda_m, double pi_l, double pi_m, double k_ld,
                                          double k_md) {
  const auto s = [](double v) { return Matrix::Constant(1, 1, v); };
  ControllerConfig cfg;
  cfg.lambda_l = s(lambda_l);
  cfg.lambda_m = s(lambda_m);
  cfg.pi_l = s(pi_l);
  cfg.pi_m = s(pi_m);
  cfg.k_ld = s(k_ld);
  cfg.k_md = s(k_md);
  return cfg;
}

void ControllerConfig::validate(Index n_link, Index n_motor) const {
  require_spd(pi_l, n_link, "pi_l");
  require_spd(pi_m, n_motor, "pi_m");
  require_spd(k_ld, n_link, "k_ld");
  require_spd(k_md, n_motor, "k_md");
  require_square(lambda_l, n_link, "lambda_l");
  require_square(lambda_m, n_motor, "lambda_m");
  if (Eigen::LLT<Matrix>(0.5 * (lambda_l + lambda_l.transpose())).info() != Eigen::Success) {
    throw SynthesisError("lambda_l is not positive definite");
  }
  if (Eigen::LLT<Matrix>(0.5 * (lambda_m + lambda_m.transpose())).info() != Eigen::Success) {
    throw SynthesisError("lambda_m is not positive definite");
  }
  if (!(fd_step > 0.0) || !std::isfinite(fd_step)) {
    throw SynthesisError("fd_step must be positive");
  }
}

// ---------------------------------------------------------------------------

SinusoidalTrajectory::SinusoidalTrajectory(Vector amplitude, Vector frequency, Vector phase, Vector offset)
    : amplitude_(std::move(amplitude)),
      frequency_(std::move(frequency)),
      phase_(std::move(phase)),
      offset_(std::move(offset)) {
  const Index n = amplitude_.size();
  if (n == 0 || frequency_.size() != n || phase_.size() != n || offset_.size() != n) {
    throw DimensionError("sinusoidal trajectory components must share one nonzero length");
  }
  if (!amplitude_.allFinite() || !frequency_.allFinite() || !phase_.allFinite() || !offset_.allFinite()) {
    throw DomainError("sinusoidal trajectory has non-finite parameters");
  }
}

SinusoidalTrajectory SinusoidalTrajectory::scalar(double amplitude, double frequency, double phase, double offset) {
  return {Vector::Constant(1, amplitude), Vector::Constant(1, frequency), Vector::Constant(1, phase),
          Vector::Constant(1, offset)};
}

Vector SinusoidalTrajectory::derivative(double t, int order) const {
  if (order < 0 || order > max_order()) {
    throw std::out_of_range(fmt::format("trajectory derivative order {} not available", order));
  }
  // d^k/dt^k sin(ωt + φ) = ω^k sin(ωt + φ + kπ/2).
  Vector out(dof());
  for (Index i = 0; i < dof(); ++i) {
    const double arg = frequency_(i) * t + phase_(i);
    const double w = frequency_(i);
    double value = 0.0;
    switch (order) {
      case 0: value = std::sin(arg); break;
      case 1: value = w * std::cos(arg); break;
      case 2: value = -w * w * std::sin(arg); break;
      case 3: value = -w * w * w * std::cos(arg); break;
      default: value = w * w * w * w * std::sin(arg); break;
    }
    out(i) = amplitude_(i) * value;
  }
  if (order == 0) {
    out += offset_;
  }
  return out;
}

// ---------------------------------------------------------------------------

double contraction_margin(const Matrix& metric, const Matrix& lambda) {
  const Matrix lhs = metric * lambda + lambda.transpose() * metric;
  const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(0.5 * (lhs + lhs.transpose()), metric,
                                                             Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success) {
    throw SynthesisError("metric block is not positive definite");
  }
  return 0.5 * ges.eigenvalues().minCoeff();
}

Matrix contraction_certificate(const Matrix& metric, const Matrix& lambda, double beta) {
  return -metric * lambda - lambda.transpose() * metric + 2.0 * beta * metric;
}

ContractionRates derive_beta(const ControllerConfig& cfg, const FjrModel& model) {
  require_constant_coefficients(model);
  cfg.validate(model.link_dof(), model.motor_dof());

  ContractionRates rates;
  rates.beta_l = contraction_margin(cfg.pi_l, cfg.lambda_l);
  rates.beta_m = contraction_margin(cfg.pi_m, cfg.lambda_m);
  if (rates.beta_l <= 0.0) {
    throw SynthesisError("link contraction inequality pi_l*lambda_l + lambda_l'*pi_l > 0 fails");
  }
  if (rates.beta_m <= 0.0) {
    throw SynthesisError("motor contraction inequality pi_m*lambda_m + lambda_m'*pi_m > 0 fails");
  }

  const Vector q0 = Vector::Zero(model.link_dof());
  const Vector qm0 = Vector::Zero(model.motor_dof());
  const Matrix damp_l = model.link().damping(q0) + cfg.k_ld;
  const Matrix damp_m = model.motor().damping(qm0) + cfg.k_md;
  const Matrix minv_l = symmetric_inverse(model.link().inertia(q0));
  const Matrix minv_m = symmetric_inverse(model.motor().inertia(qm0));

  rates.damping_rate =
      min_eigenvalue(block_diagonal(damp_l, damp_m)) * min_eigenvalue(block_diagonal(minv_l, minv_m));
  rates.blockwise_damping_rate =
      std::min(min_eigenvalue(damp_l) * min_eigenvalue(minv_l), min_eigenvalue(damp_m) * min_eigenvalue(minv_m));
  if (rates.damping_rate <= 0.0) {
    throw SynthesisError("damping injection leaves D + K_d singular");
  }
  rates.beta = std::min({rates.beta_l, rates.beta_m, rates.damping_rate});
  return rates;
}

// ---------------------------------------------------------------------------

LinkControl link_controller(const MechanicalModel& link, const ControllerConfig& cfg, const PhaseState& xv,
                            const PhaseState& x, const ReferenceTrajectory& traj, double t, const Vector& omega) {
  check_state(link, xv);
  check_state(link, x);
  const Index n = link.dof();
  if (traj.dof() != n || omega.size() != n) {
    throw DimensionError("trajectory or feedback input does not match the link dimension");
  }
  if (!omega.allFinite()) {
    throw DomainError("feedback input has non-finite components");
  }
  check_link_gains(cfg, n);
  require_order(traj, 2);

  const Vector qd = traj.derivative(t, 0);
  const Vector qd_rate = traj.derivative(t, 1);
  const Vector qd_acc = traj.derivative(t, 2);

  LinkControl out;
  out.error = xv.q - qd;
  const Matrix m = link.inertia(x.q);
  const Vector velocity_ref = qd_rate - cfg.lambda_l * out.error;
  out.p_ref = m * velocity_ref;
  const Vector error_rate = link.solve_inertia(x.q, xv.p) - qd_rate;
  out.p_ref_rate = m * (qd_acc - cfg.lambda_l * error_rate);

  Matrix drag = link.damping(x.q);
  if (!link.constant_inertia()) {
    out.p_ref_rate += link.inertia_derivative(x.q, link.solve_inertia(x.q, x.p)) * velocity_ref;
    drag += workless_matrix(link, x);
  }

  out.sigma = xv.p - out.p_ref;
  out.u_ff = out.p_ref_rate + link.potential_gradient(xv.q) + drag * link.solve_inertia(x.q, out.p_ref);
  out.u_fb = -cfg.pi_l * out.error - cfg.k_ld * link.solve_inertia(x.q, out.sigma) + omega;
  out.u = out.u_ff + out.u_fb;
  return out;
}

LinkControl link_controller(const MechanicalModel& link, const ControllerConfig& cfg, const PhaseState& x,
                            const ReferenceTrajectory& traj, double t, const Vector& omega) {
  return link_controller(link, cfg, x, x, traj, t, omega);
}

MotorReference motor_reference(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                               const PhaseState& x, const ReferenceTrajectory& traj, double t) {
  require_constant_coefficients(model);
  check_state(model.combined(), xv);
  check_state(model.combined(), x);
  return analytic_chain(model, cfg, xv, x, traj, t).motor;
}

MotorReference motor_reference(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& x,
                               const ReferenceTrajectory& traj, double t) {
  return motor_reference(model, cfg, x, x, traj, t);
}

ControlDecomposition motor_controller(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                                      const PhaseState& x, const ReferenceTrajectory& traj, double t,
                                      const Vector& omega) {
  require_constant_coefficients(model);
  check_state(model.combined(), xv);
  check_state(model.combined(), x);
  if (omega.size() != model.inputs()) {
    throw DimensionError("feedback input does not match the motor input dimension");
  }
  if (!omega.allFinite()) {
    throw DomainError("feedback input has non-finite components");
  }
  require_square(cfg.lambda_m, model.motor_dof(), "lambda_m");
  require_spd(cfg.pi_m, model.motor_dof(), "pi_m");
  require_spd(cfg.k_md, model.motor_dof(), "k_md");

  const MechanicalModel& motor = model.motor();
  const PhaseState lxv = model.link_state(xv);
  const PhaseState mxv = model.motor_state(xv);
  const PhaseState lx = model.link_state(x);
  const PhaseState mx = model.motor_state(x);

  ReferenceChain chain = analytic_chain(model, cfg, xv, x, traj, t);

  ControlDecomposition out;
  out.link = std::move(chain.link);
  out.motor_ref = std::move(chain.motor);
  const LinkControl& lc = out.link;
  const MotorReference& ref = out.motor_ref;

  const Vector sigma_l_rate = chain.link_momentum_rate - lc.p_ref_rate;
  const Matrix m_m = motor.inertia(mx.q);

  out.error_m = mxv.q - ref.q;
  out.p_mr = m_m * (ref.qdot - cfg.lambda_m * out.error_m - coupling_velocity(model, cfg, lx.q, lc.sigma));
  const Vector motor_velocity = motor.solve_inertia(mx.q, mxv.p);
  out.p_mr_rate = m_m * (ref.qddot - cfg.lambda_m * (motor_velocity - ref.qdot) -
                         coupling_velocity(model, cfg, lx.q, sigma_l_rate));
  out.sigma_m = mxv.p - out.p_mr;

  const Vector spring = model.stiffness() * (mxv.q - lxv.q);
  const Vector u_mff = out.p_mr_rate + spring + motor.damping(mx.q) * motor.solve_inertia(mx.q, out.p_mr);
  const Vector u_mfb = -cfg.pi_m * out.error_m - cfg.k_md * motor.solve_inertia(mx.q, out.sigma_m);

  const Eigen::PartialPivLU<Matrix> input(model.motor_input_matrix(mx.q));
  out.u_ff = input.solve(u_mff);
  out.u_fb = input.solve(u_mfb) + omega;
  out.u = out.u_ff + out.u_fb;
  if (!out.u.allFinite()) {
    throw NumericError(fmt::format("control input is not finite at t = {}", t));
  }
  return out;
}

Vector control_input(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& x,
                     const ReferenceTrajectory& traj, double t) {
  return motor_controller(model, cfg, x, x, traj, t, Vector::Zero(model.inputs())).u;
}

Vector error_coordinates(const ControlDecomposition& c) {
  const Index nl = c.link.error.size();
  const Index nm = c.error_m.size();
  Vector out(2 * (nl + nm));
  out << c.link.error, c.error_m, c.link.sigma, c.sigma_m;
  return out;
}

Vector error_coordinates(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                         const PhaseState& x, const ReferenceTrajectory& traj, double t) {
  return error_coordinates(motor_controller(model, cfg, xv, x, traj, t, Vector::Zero(model.inputs())));
}

// The reference enters the error map additively, so Θ does not depend on it.
Matrix error_jacobian(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& xv,
                      const PhaseState& x, const ReferenceTrajectory& /*traj*/, double /*t*/) {
  require_constant_coefficients(model);
  check_state(model.combined(), xv);
  check_state(model.combined(), x);
  cfg.validate(model.link_dof(), model.motor_dof());
  const MechanicalModel& link = model.link();
  const Index nl = model.link_dof();
  const Index nm = model.motor_dof();
  const PhaseState lxv = model.link_state(xv);
  const Vector& a = lxv.q;
  const Vector q_link = model.link_state(x).q;

  const Matrix& k = model.stiffness();
  const Eigen::LLT<Matrix> k_llt(k);
  const Matrix m_l = link.inertia(q_link);
  const Matrix minv_l = symmetric_inverse(m_l);
  const Matrix d_l = link.damping(q_link);
  const Matrix m_m = model.motor().inertia(model.motor_state(x).q);
  const Matrix g1 = m_l * cfg.lambda_l + cfg.k_ld;
  const Matrix g0 = d_l * cfg.lambda_l + cfg.pi_l + cfg.k_ld * cfg.lambda_l;
  const Matrix hess = link.potential_hessian(a);
  const Vector v = minv_l * lxv.p;
  const auto& hess_rate = link.potential().hessian_derivative;
  if (!hess_rate) {
    throw SynthesisError("link potential lacks a Hessian derivative");
  }
  const Matrix id_l = Matrix::Identity(nl, nl);
  const Matrix id_m = Matrix::Identity(nm, nm);

  // Rows of Θ as blocks over the columns (a, b, c, d) = (q_ℓv, q_mv, p_ℓv, p_mv).
  struct Row {
    Matrix a, b, c, d;
  };
  const Row e_l{id_l, Matrix::Zero(nl, nm), Matrix::Zero(nl, nl), Matrix::Zero(nl, nm)};
  const Row q_md{id_l + k_llt.solve(hess - g0), Matrix::Zero(nm, nm), -k_llt.solve(g1 * minv_l),
                 Matrix::Zero(nm, nm)};
  const Row e_m{-q_md.a, id_m, -q_md.c, Matrix::Zero(nm, nm)};
  const Row sigma_l{m_l * cfg.lambda_l, Matrix::Zero(nl, nm), id_l, Matrix::Zero(nl, nm)};

  // u̇_ℓ = M_ℓq⃛_d + D_ℓq̈_d + H(a)v − G1ë − G0ė with ë from the link dynamics.
  const Matrix du_a = hess_rate(a, v) + g1 * minv_l * (hess + k);
  const Matrix du_b = -g1 * minv_l * k;
  const Matrix du_c = hess * minv_l + g1 * minv_l * d_l * minv_l - g0 * minv_l;
  const Row qd_md{k_llt.solve(du_a), k_llt.solve(du_b), minv_l + k_llt.solve(du_c), Matrix::Zero(nm, nm)};

  const auto coupling = [&](const Matrix& m) -> Matrix { return cfg.pi_m.llt().solve(k.transpose() * minv_l * m); };
  const Row p_mr{m_m * (qd_md.a - cfg.lambda_m * e_m.a - coupling(sigma_l.a)),
                 m_m * (qd_md.b - cfg.lambda_m * e_m.b),
                 m_m * (qd_md.c - cfg.lambda_m * e_m.c - coupling(sigma_l.c)), Matrix::Zero(nm, nm)};
  const Row sigma_m{-p_mr.a, -p_mr.b, -p_mr.c, id_m};

  Matrix theta(2 * (nl + nm), 2 * (nl + nm));
  Index row = 0;
  for (const Row* r : {&e_l, &e_m, &sigma_l, &sigma_m}) {
    const Index h = r->a.rows();
    theta.block(row, 0, h, nl) = r->a;
    theta.block(row, nl, h, nm) = r->b;
    theta.block(row, nl + nm, h, nl) = r->c;
    theta.block(row, 2 * nl + nm, h, nm) = r->d;
    row += h;
  }
  return theta;
}

PhaseState virtual_state_from_errors(const FjrModel& model, const ControllerConfig& cfg, const Vector& errors,
                                     const PhaseState& x, const ReferenceTrajectory& traj, double t) {
  const Index nl = model.link_dof();
  const Index nm = model.motor_dof();
  if (errors.size() != 2 * (nl + nm)) {
    throw DimensionError("error coordinates have the wrong dimension");
  }
  check_state(model.combined(), x);
  const Vector q_l = traj.derivative(t, 0) + errors.segment(0, nl);
  const Vector p_l = errors.segment(nl + nm, nl) +
                     model.link().inertia(x.q.head(nl)) * (traj.derivative(t, 1) - cfg.lambda_l * errors.segment(0, nl));

  // q_md depends on the link coordinates only; p_mr additionally on q_m.
  PhaseState xv = model.join({q_l, p_l}, PhaseState::zero(nm));
  const Vector zero_omega = Vector::Zero(model.inputs());
  const MotorReference ref = motor_reference(model, cfg, xv, x, traj, t);
  xv.q.tail(nm) = ref.q + errors.segment(nl, nm);
  const ControlDecomposition c = motor_controller(model, cfg, xv, x, traj, t, zero_omega);
  xv.p.tail(nm) = c.p_mr + errors.tail(nm);
  return xv;
}

PhaseState on_reference_state(const FjrModel& model, const ControllerConfig& cfg,
                              const ReferenceTrajectory& traj, double t) {
  return virtual_state_from_errors(model, cfg, Vector::Zero(2 * model.dof()), PhaseState::zero(model.dof()), traj, t);
}

ClosedLoopStructure closed_loop_structure(const FjrModel& model, const ControllerConfig& cfg, const PhaseState& x) {
  require_constant_coefficients(model);
  check_state(model.combined(), x);
  cfg.validate(model.link_dof(), model.motor_dof());
  const Index nl = model.link_dof();
  const Index nm = model.motor_dof();
  const Index n = 2 * (nl + nm);
  const Index il = 0;
  const Index im = nl;
  const Index isl = nl + nm;
  const Index ism = 2 * nl + nm;

  const PhaseState lx = model.link_state(x);
  const PhaseState mx = model.motor_state(x);
  const Matrix coupling = cfg.pi_m.llt().solve(model.stiffness().transpose());  // Π_m⁻¹Kᵀ

  ClosedLoopStructure s;
  s.interconnection = Matrix::Zero(n, n);
  s.interconnection.block(il, isl, nl, nl).setIdentity();
  s.interconnection.block(isl, il, nl, nl) = -Matrix::Identity(nl, nl);
  s.interconnection.block(im, ism, nm, nm).setIdentity();
  s.interconnection.block(ism, im, nm, nm) = -Matrix::Identity(nm, nm);
  s.interconnection.block(im, isl, nm, nl) = -coupling;
  s.interconnection.block(isl, im, nl, nm) = coupling.transpose();

  s.dissipation = Matrix::Zero(n, n);
  s.dissipation.block(il, il, nl, nl) = cfg.lambda_l * symmetric_inverse(cfg.pi_l);
  s.dissipation.block(im, im, nm, nm) = cfg.lambda_m * symmetric_inverse(cfg.pi_m);
  s.dissipation.block(isl, isl, nl, nl) = model.link().damping(lx.q) + cfg.k_ld;
  s.dissipation.block(ism, ism, nm, nm) = model.motor().damping(mx.q) + cfg.k_md;

  s.storage_hessian = Matrix::Zero(n, n);
  s.storage_hessian.block(il, il, nl, nl) = cfg.pi_l;
  s.storage_hessian.block(im, im, nm, nm) = cfg.pi_m;
  s.storage_hessian.block(isl, isl, nl, nl) = symmetric_inverse(model.link().inertia(lx.q));
  s.storage_hessian.block(ism, ism, nm, nm) = symmetric_inverse(model.motor().inertia(mx.q));

  s.input = Matrix::Zero(n, model.inputs());
  s.input.bottomRows(nm) = model.motor_input_matrix(mx.q);
  return s;
}

DifferentialStorage closed_loop_storage(const FjrModel& model, const ControllerConfig& cfg) {
  const Matrix w = closed_loop_structure(model, cfg, PhaseState::zero(model.dof())).storage_hessian;
  return DifferentialStorage([w](const Vector&, double) { return w; });
}

}  // namespace vdpbc
