// simulate <scenario|config.json> [options]
//
// Runs a preset or a JSON run configuration and writes signal, spectra,
// summary and a gnuplot script into the output directory.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>
#include <json.hpp>

#include "lambda_echo/runner.hpp"

namespace le = lambda_echo;

namespace {

le::Nanos micros_to_ns(double us) { return std::llround(us * 1000.0); }

int error_record(const std::string& kind, const std::string& msg) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", msg}}.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-level Lambda photon-echo simulator"};
  std::string target;
  std::optional<std::string> out;
  std::optional<double> grid_step, grid_span, dt_pulse, tau_us, dt_b1_us, b2_offset_us,
      input_area;
  std::optional<le::Nanos> dt_out;
  std::optional<bool> angular;
  std::vector<double> areas;
  std::optional<unsigned> threads;
  bool check = false;
  bool all_numeric = false;
  std::string sweep_param;
  std::vector<double> sweep_values;

  app.add_option("target", target, "preset name or path to a JSON run config")->required();
  app.add_option("--out", out, "output directory");
  app.add_option("--grid-step", grid_step, "detuning grid step (Hz)");
  app.add_option("--grid-span", grid_span, "detuning grid half-width (Hz)");
  app.add_option("--dt-pulse", dt_pulse, "integration step inside pulses (ns)");
  app.add_option("--dt-out", dt_out, "output sampling interval (ns)");
  app.add_option("--angular-rates", angular, "multiply rates given in Hz by 2 pi");
  app.add_option("--tau", tau_us, "pulse-pair spacing (us)");
  app.add_option("--delta-t-b1", dt_b1_us, "B1 delay after INPUT or P2 (us)");
  app.add_option("--b2-offset", b2_offset_us, "B2 delay after B1 (us)");
  app.add_option("--areas", areas, "control areas B1,B2 in units of pi")
      ->delimiter(',')
      ->expected(2);
  app.add_option("--input-area", input_area, "INPUT pulse area in units of pi");
  app.add_option("--threads", threads, "worker threads (0: all cores)");
  app.add_flag("--check", check, "exit 3 when the analysis finds an anomaly");
  app.add_flag("--all-numeric", all_numeric, "integrate gaps with RK4 as well");
  app.add_option("--sweep", sweep_param, "input_area, delta_t_b1, tau or control_areas");
  app.add_option("--values", sweep_values, "sweep values: pi for areas, us for times")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return error_record("usage", e.what());
  }

  le::RunConfig config;
  try {
    if (std::filesystem::is_regular_file(target)) {
      std::ifstream f(target);
      config = le::config_from_json(nlohmann::json::parse(f));
    } else {
      config.scenario = target;
    }
  } catch (const le::ValidationError& e) {
    return error_record("validation", e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_record("config", e.what());
  }

  if (out) config.out_dir = *out;
  if (grid_step) config.grid_step_hz = grid_step;
  if (grid_span) config.grid_span_hz = grid_span;
  if (dt_pulse) config.dt_pulse_ns = dt_pulse;
  if (dt_out) config.dt_out_ns = dt_out;
  if (angular) config.angular_rates = angular;
  if (tau_us) config.knobs.tau = micros_to_ns(*tau_us);
  if (dt_b1_us) config.knobs.delta_t_b1 = micros_to_ns(*dt_b1_us);
  if (b2_offset_us) config.knobs.b2_offset = micros_to_ns(*b2_offset_us);
  if (areas.size() == 2) config.knobs.control_areas = std::pair{areas[0] * std::numbers::pi, areas[1] * std::numbers::pi};
  if (input_area) config.knobs.input_area = *input_area * std::numbers::pi;
  if (threads) config.threads = *threads;
  if (check) config.check = true;
  if (all_numeric) config.all_numeric = true;
  if (!sweep_param.empty()) {
    if (sweep_values.empty()) return error_record("usage", "--sweep needs --values");
    le::SweepSpec spec{sweep_param, {}};
    const bool time = sweep_param == "delta_t_b1" || sweep_param == "tau";
    for (double v : sweep_values) {
      spec.values.push_back(time ? static_cast<double>(micros_to_ns(v)) : v);
    }
    config.sweep = spec;
  }
  return le::run(config, std::cout, std::cerr);
}
