#include "vdpbc/cli.h"
#include "vdpbc/errors.h"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using vdpbc::ExitCode;

struct Overrides {
  std::optional<double> dt;
  std::optional<double> t_end;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;

  void apply(vdpbc::Scenario& s) const {
    if (dt) {
      s.integrator.dt = *dt;
    }
    if (t_end) {
      s.integrator.t_end = *t_end;
    }
    if (out) {
      s.output_dir = *out;
    }
    if (seed) {
      s.seed = *seed;
    }
  }
};

int code(ExitCode c) { return static_cast<int>(c); }

template <typename Fn>
int guarded(Fn&& body) {
  try {
    return code(body());
  } catch (const vdpbc::ValidationError& e) {
    fmt::print(stderr, "validation error: {}\n", e.what());
    return code(ExitCode::validation);
  } catch (const vdpbc::DivergenceError& e) {
    fmt::print(stderr, "divergence: {}\n", e.what());
    return code(ExitCode::divergence);
  } catch (const vdpbc::SynthesisError& e) {
    fmt::print(stderr, "synthesis error: {}\n", e.what());
    return code(ExitCode::certification);
  } catch (const vdpbc::CertificateError& e) {
    fmt::print(stderr, "certificate error: {}\n", e.what());
    return code(ExitCode::certification);
  }
}

vdpbc::Scenario load(const std::string& file, const Overrides& overrides) {
  vdpbc::Scenario s = vdpbc::load_scenario(file);
  overrides.apply(s);
  vdpbc::validate_scenario(s);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual differential passivity based control of flexible-joint robots"};
  app.require_subcommand(1);

  Overrides overrides;
  const auto add_overrides = [&](CLI::App* sub, bool scenario_flags) {
    if (scenario_flags) {
      sub->add_option("--dt", overrides.dt, "Integration step [s]");
      sub->add_option("--t-end", overrides.t_end, "Final time [s]");
    }
    sub->add_option("--out", overrides.out, "Output directory");
    sub->add_option("--seed", overrides.seed, "Random seed");
  };

  std::string scenario_file;
  auto* run = app.add_subcommand("run", "Simulate a scenario and write its time series and summary");
  run->add_option("file", scenario_file, "Scenario file")->required();
  add_overrides(run, true);

  std::string model_name = "table1";
  std::string fault;
  auto* verify = app.add_subcommand("verify", "Run the numerical certification suite");
  verify->add_option("--model", model_name, "Model: table1 or two-link")
      ->check(CLI::IsMember({"table1", "two-link"}));
  verify->add_option("--inject-fault", fault, "")->group("")->check(CLI::IsMember({"flip-gyroscopic"}));
  add_overrides(verify, false);

  std::string parameter;
  std::string values_text;
  auto* sweep = app.add_subcommand("sweep", "Run a scenario once per parameter value");
  sweep->add_option("--param", parameter, "Scenario key, e.g. model.stiffness or stiffness")->required();
  sweep->add_option("--values", values_text, "Comma-separated values or a file of them")->required();
  sweep->add_option("file", scenario_file, "Base scenario file")->required();
  add_overrides(sweep, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : code(ExitCode::validation);
  }

  if (*run) {
    return guarded([&] {
      const vdpbc::Scenario s = load(scenario_file, overrides);
      const vdpbc::RunArtifacts a = vdpbc::run_scenario(s);
      vdpbc::write_summary(std::cout, s, a.summary);
      fmt::print("timeseries: {}\nsummary: {}\n", a.timeseries.string(), a.summary_file.string());
      return ExitCode::success;
    });
  }

  if (*verify) {
    return guarded([&] {
      vdpbc::VerifyOptions options;
      options.model = model_name == "two-link" ? vdpbc::VerifyModel::two_link : vdpbc::VerifyModel::single_joint;
      options.flip_gyroscopic = fault == "flip-gyroscopic";
      if (overrides.seed) {
        options.seed = *overrides.seed;
      }
      return vdpbc::run_verify_command(options, overrides.out.value_or("out"), std::cout);
    });
  }

  return guarded([&] {
    const vdpbc::Scenario s = load(scenario_file, overrides);
    const auto values = vdpbc::parse_value_list(values_text);
    const std::string key = vdpbc::resolve_scenario_key(parameter);
    const auto rows = vdpbc::sweep(s, key, values);
    std::filesystem::create_directories(s.output_dir);
    const auto path = s.output_dir / fmt::format("{}_sweep_{}.csv", s.name, key.substr(key.rfind('.') + 1));
    std::ofstream csv(path);
    vdpbc::write_sweep(csv, key, rows);
    vdpbc::write_sweep(std::cout, key, rows);
    fmt::print("sweep: {}\n", path.string());
    bool any_ok = false;
    for (const auto& r : rows) {
      any_ok = any_ok || r.status == ExitCode::success;
    }
    return any_ok ? ExitCode::success : rows.front().status;
  });
}
