#include "vdpbc/cli.h"

#include "vdpbc/errors.h"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace vdpbc {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& key, const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ValidationError(key, fmt::format("{}: expected a decimal number, got '{}'", key, text));
  }
  return value;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  std::uint64_t value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ValidationError(key, fmt::format("{}: expected a non-negative integer, got '{}'", key, text));
  }
  return value;
}

using Setter = std::function<void(Scenario&, const std::string& key, const std::string& value)>;

Setter number(double Scenario::*field) {
  return [field](Scenario& s, const std::string& key, const std::string& v) { s.*field = parse_number(key, v); };
}

Setter model_number(double SingleJointParameters::*field) {
  return [field](Scenario& s, const std::string& key, const std::string& v) {
    s.model.*field = parse_number(key, v);
  };
}

Setter integrator_number(double IntegratorConfig::*field) {
  return [field](Scenario& s, const std::string& key, const std::string& v) {
    s.integrator.*field = parse_number(key, v);
  };
}

struct FieldSpec {
  std::string key;
  Setter set;
};

const std::vector<FieldSpec>& field_specs() {
  static const std::vector<FieldSpec> specs = {
      {"scenario.name", [](Scenario& s, const std::string&, const std::string& v) { s.name = v; }},
      {"scenario.seed", [](Scenario& s, const std::string& k, const std::string& v) { s.seed = parse_unsigned(k, v); }},
      {"model.link_inertia", model_number(&SingleJointParameters::link_inertia)},
      {"model.rotor_inertia", model_number(&SingleJointParameters::rotor_inertia)},
      {"model.link_damping", model_number(&SingleJointParameters::link_damping)},
      {"model.rotor_damping", model_number(&SingleJointParameters::rotor_damping)},
      {"model.nominal_load", model_number(&SingleJointParameters::nominal_load)},
      {"model.stiffness", model_number(&SingleJointParameters::stiffness)},
      {"controller.lambda_l", number(&Scenario::lambda_l)},
      {"controller.lambda_m", number(&Scenario::lambda_m)},
      {"controller.pi_l", number(&Scenario::pi_l)},
      {"controller.pi_m", number(&Scenario::pi_m)},
      {"controller.k_ld", number(&Scenario::k_ld)},
      {"controller.k_md", number(&Scenario::k_md)},
      {"controller.derivatives",
       [](Scenario& s, const std::string& k, const std::string& v) {
         if (v == "analytic") {
           s.derivatives = DerivativeMode::analytic;
         } else if (v == "finite_difference") {
           s.derivatives = DerivativeMode::finite_difference;
         } else {
           throw ValidationError(k, fmt::format("{}: expected analytic or finite_difference, got '{}'", k, v));
         }
       }},
      {"trajectory.amplitude", number(&Scenario::amplitude)},
      {"trajectory.frequency", number(&Scenario::frequency)},
      {"trajectory.phase", number(&Scenario::phase)},
      {"trajectory.offset", number(&Scenario::offset)},
      {"integrator.dt", integrator_number(&IntegratorConfig::dt)},
      {"integrator.t_end", integrator_number(&IntegratorConfig::t_end)},
      {"integrator.scheme",
       [](Scenario& s, const std::string& k, const std::string& v) {
         if (v == "rk4") {
           s.integrator.scheme = Scheme::rk4;
         } else if (v == "euler") {
           s.integrator.scheme = Scheme::euler;
         } else {
           throw ValidationError(k, fmt::format("{}: expected rk4 or euler, got '{}'", k, v));
         }
       }},
      {"integrator.record_stride",
       [](Scenario& s, const std::string& k, const std::string& v) {
         const std::uint64_t stride = parse_unsigned(k, v);
         if (stride < 1 || stride > 1000000000ULL) {
           throw ValidationError(k, fmt::format("{}: must be in [1, 1e9], got {}", k, v));
         }
         s.integrator.record_stride = static_cast<int>(stride);
       }},
      {"initial.q_l", number(&Scenario::q_l0)},
      {"initial.q_m", number(&Scenario::q_m0)},
      {"initial.p_l", number(&Scenario::p_l0)},
      {"initial.p_m", number(&Scenario::p_m0)},
      {"output.dir", [](Scenario& s, const std::string&, const std::string& v) { s.output_dir = v; }},
  };
  return specs;
}

void require(bool ok, const std::string& key, const std::string& rule, double value) {
  if (!ok) {
    throw ValidationError(key, fmt::format("{}: {}, got {}", key, rule, value));
  }
}

std::string format_number(double v) { return std::isfinite(v) ? fmt::format("{:.10g}", v) : std::string("nan"); }

std::string status_name(ExitCode code) {
  switch (code) {
    case ExitCode::success:
      return "ok";
    case ExitCode::validation:
      return "validation_error";
    case ExitCode::divergence:
      return "diverged";
    case ExitCode::certification:
      return "certification_failed";
  }
  return "unknown";
}

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    if (!keep) {
      c = (c == '.') ? 'p' : '_';
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

FjrModel Scenario::build_model() const { return single_joint_model(model); }

ControllerConfig Scenario::build_gains() const {
  ControllerConfig cfg = ControllerConfig::scalar(lambda_l, lambda_m, pi_l, pi_m, k_ld, k_md);
  cfg.derivatives = derivatives;
  if (derivatives == DerivativeMode::finite_difference) {
    cfg.fd_step = integrator.dt;
  }
  return cfg;
}

SinusoidalTrajectory Scenario::build_trajectory() const {
  return SinusoidalTrajectory::scalar(amplitude, frequency, phase, offset);
}

PhaseState Scenario::initial_state() const {
  return PhaseState{Eigen::Vector2d(q_l0, q_m0), Eigen::Vector2d(p_l0, p_m0)};
}

const std::vector<std::string>& scenario_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& f : field_specs()) {
      out.push_back(f.key);
    }
    return out;
  }();
  return keys;
}

std::string resolve_scenario_key(const std::string& name) {
  std::vector<std::string> matches;
  for (const auto& key : scenario_keys()) {
    if (key == name) {
      return key;
    }
    const auto dot = key.rfind('.');
    if (key.substr(dot + 1) == name) {
      matches.push_back(key);
    }
  }
  if (matches.size() == 1) {
    return matches.front();
  }
  if (matches.empty()) {
    throw ValidationError(name, fmt::format("{}: unknown scenario key", name));
  }
  throw ValidationError(name, fmt::format("{}: ambiguous scenario key", name));
}

void set_scenario_field(Scenario& scenario, const std::string& key, const std::string& value) {
  for (const auto& f : field_specs()) {
    if (f.key == key) {
      f.set(scenario, key, value);
      return;
    }
  }
  throw ValidationError(key, fmt::format("{}: unknown scenario key", key));
}

Scenario parse_scenario(std::istream& in, const std::string& default_name) {
  Scenario scenario;
  scenario.name = default_name;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("line " + std::to_string(line_no),
                            fmt::format("line {}: expected 'key = value'", line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ValidationError(key, fmt::format("{}: duplicate key on line {}", key, line_no));
    }
    set_scenario_field(scenario, key, value);
  }
  validate_scenario(scenario);
  return scenario;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("file", fmt::format("cannot open scenario file '{}'", path.string()));
  }
  return parse_scenario(in, path.stem().string());
}

void validate_scenario(const Scenario& s) {
  if (s.name.empty()) {
    throw ValidationError("scenario.name", "scenario.name: must not be empty");
  }
  const auto finite = [](double v) { return std::isfinite(v); };
  const auto positive = [&](double v) { return finite(v) && v > 0.0; };
  const auto nonnegative = [&](double v) { return finite(v) && v >= 0.0; };

  require(positive(s.model.link_inertia), "model.link_inertia", "must be > 0", s.model.link_inertia);
  require(positive(s.model.rotor_inertia), "model.rotor_inertia", "must be > 0", s.model.rotor_inertia);
  require(nonnegative(s.model.link_damping), "model.link_damping", "must be >= 0", s.model.link_damping);
  require(nonnegative(s.model.rotor_damping), "model.rotor_damping", "must be >= 0", s.model.rotor_damping);
  require(nonnegative(s.model.nominal_load), "model.nominal_load", "must be >= 0", s.model.nominal_load);
  require(positive(s.model.stiffness), "model.stiffness", "must be > 0", s.model.stiffness);

  // Gain positivity is a synthesis condition, checked by the controller.
  require(finite(s.lambda_l), "controller.lambda_l", "must be finite", s.lambda_l);
  require(finite(s.lambda_m), "controller.lambda_m", "must be finite", s.lambda_m);
  require(finite(s.pi_l), "controller.pi_l", "must be finite", s.pi_l);
  require(finite(s.pi_m), "controller.pi_m", "must be finite", s.pi_m);
  require(finite(s.k_ld), "controller.k_ld", "must be finite", s.k_ld);
  require(finite(s.k_md), "controller.k_md", "must be finite", s.k_md);

  require(finite(s.amplitude), "trajectory.amplitude", "must be finite", s.amplitude);
  require(nonnegative(s.frequency), "trajectory.frequency", "must be >= 0", s.frequency);
  require(finite(s.phase), "trajectory.phase", "must be finite", s.phase);
  require(finite(s.offset), "trajectory.offset", "must be finite", s.offset);

  require(positive(s.integrator.dt), "integrator.dt", "must be > 0", s.integrator.dt);
  require(finite(s.integrator.t_end) && s.integrator.t_end >= s.integrator.dt, "integrator.t_end",
          "must be >= integrator.dt", s.integrator.t_end);

  require(finite(s.q_l0), "initial.q_l", "must be finite", s.q_l0);
  require(finite(s.q_m0), "initial.q_m", "must be finite", s.q_m0);
  require(finite(s.p_l0), "initial.p_l", "must be finite", s.p_l0);
  require(finite(s.p_m0), "initial.p_m", "must be finite", s.p_m0);

  if (s.output_dir.empty()) {
    throw ValidationError("output.dir", "output.dir: must not be empty");
  }
}

// ---------------------------------------------------------------------------

const std::string& timeseries_header() {
  static const std::string header = "t,q_l,q_m,p_l,p_m,u,u_ff,u_fb,err_q_l,err_q_m,sigma_l,sigma_m,H,V,dVdt";
  return header;
}

void write_timeseries(std::ostream& out, const SimulationRecord& record) {
  out << timeseries_header() << '\n';
  for (const auto& s : record.samples) {
    fmt::print(out, "{:.10g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},"
                    "{:.17g},{:.17g},{:.17g}\n",
               s.t, s.x.q(0), s.x.q(1), s.x.p(0), s.x.p(1), s.u(0), s.u_ff(0), s.u_fb(0), s.errors(0), s.errors(1),
               s.errors(2), s.errors(3), s.hamiltonian, s.storage, s.storage_rate);
  }
}

void write_summary(std::ostream& out, const Scenario& scenario, const SimulationSummary& summary) {
  const auto& e = summary.final_errors;
  fmt::print(out, "scenario = {}\n", scenario.name);
  fmt::print(out, "stiffness = {}\n", format_number(scenario.model.stiffness));
  fmt::print(out, "dt = {}\n", format_number(scenario.integrator.dt));
  fmt::print(out, "t_end = {}\n", format_number(scenario.integrator.t_end));
  fmt::print(out, "final_err_q_l = {}\n", format_number(e(0)));
  fmt::print(out, "final_err_q_m = {}\n", format_number(e(1)));
  fmt::print(out, "final_sigma_l = {}\n", format_number(e(2)));
  fmt::print(out, "final_sigma_m = {}\n", format_number(e(3)));
  fmt::print(out, "beta_l = {}\n", format_number(summary.rates.beta_l));
  fmt::print(out, "beta_m = {}\n", format_number(summary.rates.beta_m));
  fmt::print(out, "damping_rate = {}\n", format_number(summary.rates.damping_rate));
  fmt::print(out, "beta = {}\n", format_number(summary.rates.beta));
  fmt::print(out, "beta_hat = {}\n", format_number(summary.decay.rate));
  fmt::print(out, "beta_hat_truncated = {}\n", summary.decay.truncated ? "true" : "false");
  fmt::print(out, "peak_abs_u = {}\n", format_number(summary.peak_input));
  fmt::print(out, "transient_time = {}\n", format_number(summary.transient_time));
  fmt::print(out, "settle_time = {}\n", format_number(summary.settle_time));
  fmt::print(out, "threshold = {}\n", format_number(summary.threshold));
  fmt::print(out, "converged = {}\n", std::isfinite(summary.settle_time) ? "true" : "false");
}

RunArtifacts run_scenario(const Scenario& scenario) {
  validate_scenario(scenario);
  const FjrModel model = scenario.build_model();
  const ControllerConfig cfg = scenario.build_gains();
  // Certificate gate: throws SynthesisError before any integration.
  derive_beta(cfg, model);
  const SinusoidalTrajectory traj = scenario.build_trajectory();
  const SimulationRecord record =
      simulate_closed_loop(model, cfg, traj, scenario.integrator, scenario.initial_state());

  RunArtifacts artifacts;
  artifacts.summary = record.summary;
  std::filesystem::create_directories(scenario.output_dir);
  artifacts.timeseries = scenario.output_dir / (scenario.name + ".csv");
  artifacts.summary_file = scenario.output_dir / (scenario.name + "_summary.txt");
  {
    std::ofstream csv(artifacts.timeseries);
    write_timeseries(csv, record);
    if (!csv) {
      throw std::runtime_error("failed to write " + artifacts.timeseries.string());
    }
  }
  {
    std::ofstream txt(artifacts.summary_file);
    write_summary(txt, scenario, record.summary);
    if (!txt) {
      throw std::runtime_error("failed to write " + artifacts.summary_file.string());
    }
  }
  return artifacts;
}

// ---------------------------------------------------------------------------

std::vector<std::string> parse_value_list(const std::string& text) {
  std::string content = text;
  std::error_code ec;
  if (std::filesystem::is_regular_file(text, ec)) {
    std::ifstream in(text);
    std::stringstream buffer;
    buffer << in.rdbuf();
    content = buffer.str();
  }
  std::replace(content.begin(), content.end(), '\n', ',');
  std::vector<std::string> values;
  std::stringstream stream(content);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) {
      values.push_back(item);
    }
  }
  return values;
}

std::vector<SweepRow> sweep(const Scenario& base, const std::string& parameter,
                            const std::vector<std::string>& values) {
  if (values.empty()) {
    throw ValidationError("values", "values: the sweep value list is empty");
  }
  const std::string key = resolve_scenario_key(parameter);
  // Every value must parse before any run starts.
  std::vector<Scenario> scenarios;
  for (const auto& value : values) {
    Scenario s = base;
    set_scenario_field(s, key, value);
    const std::string leaf = key.substr(key.rfind('.') + 1);
    s.output_dir = base.output_dir / sanitize(base.name + "_" + leaf + "_" + value);
    scenarios.push_back(std::move(s));
  }

  std::vector<std::future<SweepRow>> jobs;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, [&scenario = scenarios[i], value = values[i]] {
      SweepRow row;
      row.value = value;
      row.beta = std::numeric_limits<double>::quiet_NaN();
      row.beta_hat = row.beta;
      row.transient_time = row.beta;
      row.peak_input = row.beta;
      try {
        const RunArtifacts a = run_scenario(scenario);
        row.beta = a.summary.rates.beta;
        row.beta_hat = a.summary.decay.rate;
        row.transient_time = a.summary.transient_time;
        row.peak_input = a.summary.peak_input;
      } catch (const ValidationError& e) {
        row.status = ExitCode::validation;
        row.error = e.what();
      } catch (const DivergenceError& e) {
        row.status = ExitCode::divergence;
        row.error = fmt::format("{} at t = {}", e.what(), e.time());
      } catch (const SynthesisError& e) {
        row.status = ExitCode::certification;
        row.error = e.what();
      } catch (const CertificateError& e) {
        row.status = ExitCode::certification;
        row.error = e.what();
      }
      return row;
    }));
  }
  std::vector<SweepRow> rows;
  for (auto& job : jobs) {
    rows.push_back(job.get());
  }
  return rows;
}

void write_sweep(std::ostream& out, const std::string& parameter, const std::vector<SweepRow>& rows) {
  fmt::print(out, "{},status,beta,beta_hat,transient_time,peak_abs_u,error\n", parameter);
  for (const auto& r : rows) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    fmt::print(out, "{},{},{},{},{},{},{}\n", r.value, status_name(r.status), format_number(r.beta),
               format_number(r.beta_hat), format_number(r.transient_time), format_number(r.peak_input), error);
  }
}

// ---------------------------------------------------------------------------

ExitCode run_verify_command(const VerifyOptions& options, const std::filesystem::path& output_dir,
                            std::ostream& out) {
  const Report report = run_verification(options);
  for (const auto& c : report.checks) {
    fmt::print(out, "{} {:<32} measured={:.3e} tol={:.1e}  {}\n", c.passed ? "PASS" : "FAIL", c.name, c.measured,
               c.tolerance, c.property);
  }
  std::filesystem::create_directories(output_dir);
  const auto path = output_dir / fmt::format("verification_{}.json", report.model);
  std::ofstream json(path);
  json << report.to_json() << '\n';
  fmt::print(out, "report: {}\n", path.string());
  return report.passed() ? ExitCode::success : ExitCode::certification;
}

}  // namespace vdpbc
