#pragma once

#include "vdpbc/control.h"
#include "vdpbc/phmech.h"

#include <functional>
#include <vector>

namespace vdpbc {

enum class Scheme { rk4, euler };

struct IntegratorConfig {
  double dt = 1e-4;     // s
  double t_end = 10.0;  // s
  Scheme scheme = Scheme::rk4;
  int record_stride = 1;

  /// Throws std::invalid_argument unless dt > 0, t_end ≥ dt and stride ≥ 1.
  void validate() const;
  /// Number of steps; the final time is steps()·dt (t_end rounded to the grid).
  Index steps() const;
};

/// ẏ = f(t, y) on stacked vectors.
using VectorField = std::function<Vector(double t, const Vector& y)>;
/// Externally supplied time signal (plant input or variational input).
using Signal = std::function<Vector(double t)>;

Vector integrator_step(Scheme scheme, const VectorField& f, double t, const Vector& y, double dt);

/// Fixed-step integration with t_k = k·dt. `observe(k, t_k, y_k)` runs on
/// every record_stride-th step and on the final step. Throws DivergenceError
/// at the first step whose state is non-finite or has norm above 1e6.
void integrate(const IntegratorConfig& integ, const VectorField& f, Vector y0,
               const std::function<void(Index, double, const Vector&)>& observe);

struct SimulationSample {
  double t = 0.0;
  PhaseState x;
  Vector u;
  Vector u_ff;
  Vector u_fb;
  Vector errors;  ///< (q̃_ℓ, q̃_m, σ_ℓ, σ_m)
  double hamiltonian = 0.0;
  double storage = 0.0;       ///< V = ½x̃ᵀWx̃
  double storage_rate = 0.0;  ///< dV/dt along the closed-loop error flow
};

struct DecayEstimate {
  double rate = 0.0;       ///< β̂
  bool truncated = false;  ///< the window ended early at the numeric floor
  double window_start = 0.0;
  double window_end = 0.0;
  Index samples = 0;
};

struct SimulationSummary {
  Vector final_errors;
  ContractionRates rates;
  DecayEstimate decay;
  double peak_input = 0.0;  ///< max_t ‖u‖∞
  /// First time after which ‖q̃_ℓ‖ stays below the threshold; NaN if never.
  double transient_time = 0.0;
  /// Same for ‖q̃_ℓ‖ and ‖(σ_ℓ, σ_m)‖ together.
  double settle_time = 0.0;
  double threshold = 1e-3;
};

struct SimulationRecord {
  std::vector<SimulationSample> samples;
  SimulationSummary summary;
};

/// Closed loop ẋ = f(x) + g(x)·u(x, x, t).
SimulationRecord simulate_closed_loop(const FjrModel& model, const ControllerConfig& cfg,
                                      const ReferenceTrajectory& traj, const IntegratorConfig& integ,
                                      const PhaseState& x0);

/// Actual closed loop co-integrated with the virtual closed loop
/// ẋ_v = f_v(x_v, x) + g(x)·u(x_v, x, t).
struct VirtualRun {
  std::vector<double> times;
  std::vector<PhaseState> actual;
  std::vector<PhaseState> virtual_states;
};

VirtualRun simulate_virtual_closed_loop(const FjrModel& model, const ControllerConfig& cfg,
                                        const ReferenceTrajectory& traj, const IntegratorConfig& integ,
                                        const PhaseState& x0, const PhaseState& xv0);

struct ProlongedSample {
  double t = 0.0;
  PhaseState x;
  Vector errors;     ///< x̃ of the actual state
  Vector variation;  ///< δx̃
  Vector variation_input;   ///< δω
  Vector variation_output;  ///< δy = B_mᵀM_m⁻¹δσ_m
  double storage = 0.0;
  double storage_rate = 0.0;
  double supply = 0.0;  ///< δyᵀδω
};

struct ProlongedRecord {
  std::vector<ProlongedSample> samples;
  ContractionRates rates;
  DecayEstimate decay;
};

/// Prolonged closed loop: the plant together with the variational error
/// dynamics δx̃̇ = [J − R]W δx̃ + Ψ δω. The variation lives in error
/// coordinates; `variation_input` defaults to δω ≡ 0.
ProlongedRecord simulate_prolonged(const FjrModel& model, const ControllerConfig& cfg,
                                   const ReferenceTrajectory& traj, const IntegratorConfig& integ,
                                   const PhaseState& x0, const Vector& dx0, const Signal& variation_input = {});

struct OpenLoopSample {
  double t = 0.0;
  PhaseState x;
  Vector u;
  double hamiltonian = 0.0;
  double dissipated = 0.0;  ///< ∫(M⁻¹p)ᵀD(M⁻¹p) dt
  double supplied = 0.0;    ///< ∫yᵀu dt
};

/// Integrates the plant under an external input (u ≡ 0 when `input` is
/// empty). Dissipated and supplied energy are integrated alongside the state.
std::vector<OpenLoopSample> simulate_open_loop(const MechanicalModel& model, const IntegratorConfig& integ,
                                               const PhaseState& x0, const Signal& input = {});

/// β̂ from the least-squares slope of log V over [skip_fraction·T, T],
/// divided by −2. The window is cut where V first drops below
/// floor·V(window start); `truncated` is then set.
DecayEstimate measured_decay_rate(const std::vector<double>& times, const std::vector<double>& storage,
                                  double skip_fraction = 0.05, double floor = 1e-14);
DecayEstimate measured_decay_rate(const SimulationRecord& record);
DecayEstimate measured_decay_rate(const ProlongedRecord& record);

}  // namespace vdpbc
