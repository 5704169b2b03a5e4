#include "vdpbc/sim.h"

#include "vdpbc/errors.h"
#include "vdpbc/virtualsys.h"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vdpbc {

namespace {

constexpr double kDivergenceBound = 1e6;

/// Earliest sample time after which `norm(sample) < threshold` holds through
/// the end; NaN when the last sample is above the threshold.
template <typename Norm>
double settle_time(const std::vector<SimulationSample>& samples, double threshold, Norm norm) {
  double settled = std::numeric_limits<double>::quiet_NaN();
  for (auto it = samples.rbegin(); it != samples.rend(); ++it) {
    if (norm(*it) >= threshold) {
      break;
    }
    settled = it->t;
  }
  return settled;
}

}  // namespace

void IntegratorConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("integrator dt must be positive");
  }
  if (!(t_end >= dt) || !std::isfinite(t_end)) {
    throw std::invalid_argument("integrator t_end must be at least dt");
  }
  if (record_stride < 1) {
    throw std::invalid_argument("record_stride must be at least 1");
  }
}

Index IntegratorConfig::steps() const {
  return static_cast<Index>(std::llround(t_end / dt));
}

Vector integrator_step(Scheme scheme, const VectorField& f, double t, const Vector& y, double dt) {
  if (scheme == Scheme::euler) {
    return y + dt * f(t, y);
  }
  const double half = 0.5 * dt;
  const Vector k1 = f(t, y);
  const Vector k2 = f(t + half, y + half * k1);
  const Vector k3 = f(t + half, y + half * k2);
  const Vector k4 = f(t + dt, y + dt * k3);
  return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void integrate(const IntegratorConfig& integ, const VectorField& f, Vector y0,
               const std::function<void(Index, double, const Vector&)>& observe) {
  integ.validate();
  const Index steps = integ.steps();
  Vector y = std::move(y0);
  if (!y.allFinite()) {
    throw DivergenceError("initial state is not finite", 0.0);
  }
  observe(0, 0.0, y);
  for (Index k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * integ.dt;
    y = integrator_step(integ.scheme, f, t, y, integ.dt);
    const double t_next = static_cast<double>(k + 1) * integ.dt;
    if (!y.allFinite() || y.norm() > kDivergenceBound) {
      throw DivergenceError(fmt::format("state diverged at t = {:.6g} s", t_next), t_next);
    }
    if ((k + 1) % integ.record_stride == 0 || k + 1 == steps) {
      observe(k + 1, t_next, y);
    }
  }
}

// ---------------------------------------------------------------------------

SimulationRecord simulate_closed_loop(const FjrModel& model, const ControllerConfig& cfg,
                                      const ReferenceTrajectory& traj, const IntegratorConfig& integ,
                                      const PhaseState& x0) {
  SimulationRecord record;
  record.summary.rates = derive_beta(cfg, model);
  check_state(model.combined(), x0);

  const Vector zero_omega = Vector::Zero(model.inputs());
  const VectorField field = [&](double t, const Vector& y) {
    const PhaseState x = PhaseState::from_stacked(y);
    return ph_vector_field(model, x, control_input(model, cfg, x, traj, t), t).stacked();
  };

  const DifferentialStorage storage = closed_loop_storage(model, cfg);
  const Index n_link = model.link_dof();
  const Index n_motor = model.motor_dof();
  integrate(integ, field, x0.stacked(), [&](Index, double t, const Vector& y) {
    SimulationSample s;
    s.t = t;
    s.x = PhaseState::from_stacked(y);
    const ControlDecomposition c = motor_controller(model, cfg, s.x, s.x, traj, t, zero_omega);
    s.u = c.u;
    s.u_ff = c.u_ff;
    s.u_fb = c.u_fb;
    s.errors = error_coordinates(c);
    s.hamiltonian = hamiltonian(model, s.x);
    const Matrix generator = closed_loop_structure(model, cfg, s.x).generator();
    s.storage = storage_value(storage, s.errors, s.errors, t);
    s.storage_rate = storage_rate(storage, {s.errors, s.errors, generator * s.errors, t});
    record.samples.push_back(std::move(s));
  });

  SimulationSummary& sum = record.summary;
  sum.final_errors = record.samples.back().errors;
  for (const auto& s : record.samples) {
    sum.peak_input = std::max(sum.peak_input, s.u.cwiseAbs().maxCoeff());
  }
  sum.transient_time = settle_time(record.samples, sum.threshold,
                                   [&](const SimulationSample& s) { return s.errors.head(n_link).norm(); });
  sum.settle_time = settle_time(record.samples, sum.threshold, [&](const SimulationSample& s) {
    return std::max(s.errors.head(n_link).norm(), s.errors.tail(n_link + n_motor).norm());
  });
  sum.decay = measured_decay_rate(record);
  return record;
}

VirtualRun simulate_virtual_closed_loop(const FjrModel& model, const ControllerConfig& cfg,
                                        const ReferenceTrajectory& traj, const IntegratorConfig& integ,
                                        const PhaseState& x0, const PhaseState& xv0) {
  derive_beta(cfg, model);
  check_state(model.combined(), x0);
  check_state(model.combined(), xv0);
  const VirtualMechanicalSystem vsys(model);
  const Index n = 2 * model.dof();
  const Vector zero_omega = Vector::Zero(model.inputs());

  const VectorField field = [&](double t, const Vector& y) {
    const PhaseState x = PhaseState::from_stacked(y.head(n));
    const PhaseState xv = PhaseState::from_stacked(y.tail(n));
    const Vector u = control_input(model, cfg, x, traj, t);
    const Vector uv = motor_controller(model, cfg, xv, x, traj, t, zero_omega).u;
    Vector dy(2 * n);
    dy << ph_vector_field(model, x, u, t).stacked(), virtual_vector_field(vsys, xv, x, uv, t).stacked();
    return dy;
  };

  Vector y0(2 * n);
  y0 << x0.stacked(), xv0.stacked();
  VirtualRun run;
  integrate(integ, field, y0, [&](Index, double t, const Vector& y) {
    run.times.push_back(t);
    run.actual.push_back(PhaseState::from_stacked(y.head(n)));
    run.virtual_states.push_back(PhaseState::from_stacked(y.tail(n)));
  });
  return run;
}

ProlongedRecord simulate_prolonged(const FjrModel& model, const ControllerConfig& cfg,
                                   const ReferenceTrajectory& traj, const IntegratorConfig& integ,
                                   const PhaseState& x0, const Vector& dx0, const Signal& variation_input) {
  ProlongedRecord record;
  record.rates = derive_beta(cfg, model);
  check_state(model.combined(), x0);
  const Index n = 2 * model.dof();
  const Index m = model.inputs();
  if (dx0.size() != n) {
    throw DimensionError("initial variation has the wrong dimension");
  }
  const auto input = [&](double t) -> Vector {
    if (!variation_input) {
      return Vector::Zero(m);
    }
    Vector dw = variation_input(t);
    if (dw.size() != m) {
      throw DimensionError("variational input has the wrong dimension");
    }
    return dw;
  };

  const VectorField field = [&](double t, const Vector& y) {
    const PhaseState x = PhaseState::from_stacked(y.head(n));
    const ClosedLoopStructure s = closed_loop_structure(model, cfg, x);
    Vector dy(2 * n);
    dy << ph_vector_field(model, x, control_input(model, cfg, x, traj, t), t).stacked(),
        s.generator() * y.tail(n) + s.input * input(t);
    return dy;
  };

  const DifferentialStorage storage = closed_loop_storage(model, cfg);
  Vector y0(2 * n);
  y0 << x0.stacked(), dx0;
  integrate(integ, field, y0, [&](Index, double t, const Vector& y) {
    ProlongedSample s;
    s.t = t;
    s.x = PhaseState::from_stacked(y.head(n));
    s.errors = error_coordinates(model, cfg, s.x, s.x, traj, t);
    s.variation = y.tail(n);
    s.variation_input = input(t);
    const ClosedLoopStructure cl = closed_loop_structure(model, cfg, s.x);
    s.variation_output = cl.input.transpose() * (cl.storage_hessian * s.variation);
    s.storage = storage_value(storage, s.errors, s.variation, t);
    const Vector rate = cl.generator() * s.variation + cl.input * s.variation_input;
    s.storage_rate = storage_rate(storage, {s.errors, s.variation, rate, t});
    s.supply = s.variation_output.dot(s.variation_input);
    record.samples.push_back(std::move(s));
  });
  record.decay = measured_decay_rate(record);
  return record;
}

std::vector<OpenLoopSample> simulate_open_loop(const MechanicalModel& model, const IntegratorConfig& integ,
                                               const PhaseState& x0, const Signal& input) {
  check_state(model, x0);
  const Index n = 2 * model.dof();
  const auto u_at = [&](double t) -> Vector {
    return input ? input(t) : Vector::Zero(model.inputs());
  };

  // Augmented state [x; ∫dissipated; ∫supplied].
  const VectorField field = [&](double t, const Vector& y) {
    const PhaseState x = PhaseState::from_stacked(y.head(n));
    const Vector u = u_at(t);
    const Vector velocity = model.solve_inertia(x.q, x.p);
    Vector dy(n + 2);
    dy << ph_vector_field(model, x, u, t).stacked(), velocity.dot(model.damping(x.q) * velocity),
        natural_output(model, x).dot(u);
    return dy;
  };

  Vector y0 = Vector::Zero(n + 2);
  y0.head(n) = x0.stacked();
  std::vector<OpenLoopSample> samples;
  integrate(integ, field, y0, [&](Index, double t, const Vector& y) {
    OpenLoopSample s;
    s.t = t;
    s.x = PhaseState::from_stacked(y.head(n));
    s.u = u_at(t);
    s.hamiltonian = hamiltonian(model, s.x);
    s.dissipated = y(n);
    s.supplied = y(n + 1);
    samples.push_back(std::move(s));
  });
  return samples;
}

// ---------------------------------------------------------------------------

DecayEstimate measured_decay_rate(const std::vector<double>& times, const std::vector<double>& storage,
                                  double skip_fraction, double floor) {
  if (times.size() != storage.size() || times.size() < 2) {
    throw std::invalid_argument("decay estimate needs matching time and storage traces");
  }
  const double t0 = times.front();
  const double start_time = t0 + skip_fraction * (times.back() - t0);
  std::size_t first = 0;
  while (first < times.size() && times[first] < start_time) {
    ++first;
  }

  DecayEstimate est;
  if (first >= times.size() || !(storage[first] > 0.0)) {
    throw std::invalid_argument("storage trace is not positive on the decay window");
  }
  const double cutoff = floor * storage[first];
  std::size_t last = first;
  while (last + 1 < times.size() && storage[last + 1] > cutoff) {
    ++last;
  }
  est.truncated = last + 1 < times.size();
  if (last == first) {
    throw std::invalid_argument("decay window contains a single sample");
  }

  // Least squares for log V = c − 2β̂ t, centred for conditioning.
  const double count = static_cast<double>(last - first + 1);
  double mean_t = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    mean_t += times[i];
    mean_y += std::log(storage[i]);
  }
  mean_t /= count;
  mean_y /= count;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    const double dt = times[i] - mean_t;
    sxy += dt * (std::log(storage[i]) - mean_y);
    sxx += dt * dt;
  }
  est.rate = -0.5 * sxy / sxx;
  est.window_start = times[first];
  est.window_end = times[last];
  est.samples = static_cast<Index>(count);
  return est;
}

namespace {

/// Record-level estimate; a trace that is zero on the window (for instance a
/// run started on the reference) yields NaN instead of an error.
template <typename Samples>
DecayEstimate record_decay(const Samples& samples) {
  std::vector<double> t;
  std::vector<double> v;
  for (const auto& s : samples) {
    t.push_back(s.t);
    v.push_back(s.storage);
  }
  try {
    return measured_decay_rate(t, v);
  } catch (const std::invalid_argument&) {
    DecayEstimate est;
    est.rate = std::numeric_limits<double>::quiet_NaN();
    est.truncated = true;
    return est;
  }
}

}  // namespace

DecayEstimate measured_decay_rate(const SimulationRecord& record) { return record_decay(record.samples); }

DecayEstimate measured_decay_rate(const ProlongedRecord& record) { return record_decay(record.samples); }

}  // namespace vdpbc
