#pragma once

#include "vdpbc/control.h"
#include "vdpbc/presets.h"
#include "vdpbc/sim.h"
#include "vdpbc/verify.h"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vdpbc {

/// Process exit codes of the command-line tool.
enum class ExitCode : int {
  success = 0,
  validation = 1,
  divergence = 2,
  certification = 3,
};

/// Single-joint experiment description. Every field has a key in the flat
/// dotted format, e.g. `model.link_inertia = 0.031`; see docs/scenario_schema.md.
struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 20240607;

  SingleJointParameters model;

  double lambda_l = 10.0;
  double lambda_m = 15.0;
  double pi_l = 20.0;
  double pi_m = 60.0;
  double k_ld = 0.6;
  double k_md = 0.3;
  DerivativeMode derivatives = DerivativeMode::analytic;

  double amplitude = 0.78539816339744831;  // rad
  double frequency = 1.0;                  // rad/s
  double phase = 0.0;                      // rad
  double offset = 0.0;                     // rad

  IntegratorConfig integrator{1e-4, 10.0, Scheme::rk4, 10};

  double q_l0 = 0.0;
  double q_m0 = 0.0;
  double p_l0 = 0.0;
  double p_m0 = 0.0;

  std::filesystem::path output_dir = "out";

  FjrModel build_model() const;
  /// Gains as configured. In finite-difference mode the step equals dt.
  ControllerConfig build_gains() const;
  SinusoidalTrajectory build_trajectory() const;
  PhaseState initial_state() const;
};

/// Every key accepted in a scenario file, in schema order.
const std::vector<std::string>& scenario_keys();

/// Resolves a key or an unambiguous last segment (`stiffness` for
/// `model.stiffness`). Throws ValidationError on unknown or ambiguous names.
std::string resolve_scenario_key(const std::string& name);

/// Assigns one field from its text value. Throws ValidationError naming the
/// key when it is unknown or the value does not parse.
void set_scenario_field(Scenario& scenario, const std::string& key, const std::string& value);

/// `key = value` lines; `#` starts a comment. Unset keys keep their defaults.
/// The result is validated before it is returned.
Scenario parse_scenario(std::istream& in, const std::string& default_name = "scenario");
Scenario load_scenario(const std::filesystem::path& path);

/// Schema rules in key order; throws ValidationError for the first violation.
void validate_scenario(const Scenario& scenario);

/// CSV header of the time-series output.
const std::string& timeseries_header();
void write_timeseries(std::ostream& out, const SimulationRecord& record);
void write_summary(std::ostream& out, const Scenario& scenario, const SimulationSummary& summary);

struct RunArtifacts {
  SimulationSummary summary;
  std::filesystem::path timeseries;
  std::filesystem::path summary_file;
};

/// Validates, certifies the gains, simulates and writes
/// `<output_dir>/<name>.csv` and `<output_dir>/<name>_summary.txt`.
/// Throws ValidationError, SynthesisError or DivergenceError.
RunArtifacts run_scenario(const Scenario& scenario);

struct SweepRow {
  std::string value;
  ExitCode status = ExitCode::success;
  double beta = 0.0;
  double beta_hat = 0.0;
  double transient_time = 0.0;
  double peak_input = 0.0;
  std::string error;
};

/// Comma-separated values, or the contents of a file holding them.
std::vector<std::string> parse_value_list(const std::string& text);

/// One run per value, concurrently; run i writes under
/// `<output_dir>/<name>_<key>_<value>/`. Failures are recorded per row.
std::vector<SweepRow> sweep(const Scenario& base, const std::string& parameter,
                            const std::vector<std::string>& values);
void write_sweep(std::ostream& out, const std::string& parameter, const std::vector<SweepRow>& rows);

/// `verify` verb: runs the suite, prints one line per check and writes
/// `<output_dir>/verification_<model>.json`.
ExitCode run_verify_command(const VerifyOptions& options, const std::filesystem::path& output_dir,
                            std::ostream& out);

}  // namespace vdpbc
