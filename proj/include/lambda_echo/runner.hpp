#pragma once

// Run orchestration: configuration, echo expectations for a schedule, the
// simulate-and-analyse pass, and the files a run leaves behind.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lambda_echo/analysis.hpp"
#include "lambda_echo/scenarios.hpp"

namespace lambda_echo {

struct RateOverrides {
  std::optional<double> decay31, decay32, decay21;
  std::optional<double> dephase31, dephase32, dephase21;
  std::optional<double> fwhm;
};

/// Config file form: times in integer ns, rates in Hz, areas in units of pi.
struct RunConfig {
  std::string scenario;  // preset name; "custom" (or empty) needs `sequence`
  std::optional<Sequence> sequence;  // replaces the preset schedule
  ScenarioKnobs knobs;
  RateOverrides rates;
  std::optional<bool> angular_rates;
  std::optional<double> grid_span_hz;
  std::optional<double> grid_step_hz;
  std::optional<double> single_atom_hz;
  std::optional<double> dt_pulse_ns;
  std::optional<Nanos> dt_out_ns;
  std::optional<std::vector<Nanos>> snapshots;
  std::optional<std::vector<double>> probes_hz;
  std::optional<SweepSpec> sweep;
  std::string out_dir = "out";
  unsigned threads = 0;
  bool all_numeric = false;
  bool check = false;
};

RunConfig config_from_json(const nlohmann::json& j);

/// Builds and validates the scenario a config describes. Throws
/// ValidationError.
Scenario resolve(const RunConfig& config);

/// Re-loadable config describing `sc` exactly (every default spelled out).
nlohmann::json resolved_config(const Scenario& sc);

struct Expectation {
  EchoKind kind = EchoKind::TwoPulse;
  std::optional<double> time;  // s; nullopt when the timing law gives none
  bool expect_echo = true;
  std::string reason;  // why no echo is expected
  double window_begin = 0;  // s
  double window_end = 0;
};

/// Echoes implied by the pulse labels: P1/P2 (two-pulse), a third "input"
/// after P1/P2 (three-pulse), "prep" + "input" (AFC), B1/B2 (controlled).
std::vector<Expectation> expected_echoes(const Sequence& seq);

struct ExpectationResult {
  Expectation expectation;
  std::optional<EchoEvent> echo;
  std::optional<double> deviation;  // t_peak - predicted, s
  bool ok = false;
};

struct LevelComb {
  int level = 1;
  Nanos time = 0;
  CombMetrics metrics;
};

struct PhaseReturn {
  double delta = 0;         // rad/s
  double echo_time = 0;     // s
  double phase_return = 0;  // wrapped phase(echo) - phase(end of P1), rad
  double rho33_min = 0;
  double rho33_max = 0;
};

struct SimOptions {
  unsigned threads = 0;
  bool all_numeric = false;
  DetectOptions detect;
};

struct RunReport {
  Scenario scenario;
  Observables observables;
  std::optional<EchoDetection> detection;  // skipped for a single atom
  std::vector<ExpectationResult> results;
  std::vector<LevelComb> combs;
  std::vector<PhaseReturn> phases;
  std::vector<std::string> warnings;
  std::vector<std::string> anomalies;
};

/// Echo match tolerance around a prediction.
double match_tolerance(const Scenario& sc);

RunReport simulate(const Scenario& sc, const SimOptions& options = {});

nlohmann::json summarize(const RunReport& report);

/// signal.csv, spectrum_<level>_<time>ns.csv, probe_<k>.csv, summary.json
/// and plot.gnu.
void write_artifacts(const RunReport& report, const std::filesystem::path& dir);

struct SweepRow {
  double value = 0;  // config units: pi for areas, ns for times
  std::optional<double> echo_time;
  double echo_amplitude = 0;
  std::optional<double> predicted;
  std::string status;  // echo, no_echo, below_threshold
  RunReport report;
};

struct SweepReport {
  SweepSpec spec;
  std::vector<SweepRow> rows;
  nlohmann::json analysis;
};

SweepReport sweep(const RunConfig& config, const SweepSpec& spec, const SimOptions& options = {});

void write_sweep(const SweepReport& report, const std::filesystem::path& dir);

/// Full pipeline behind the CLI. Returns 0, 2 (validation) or 3 (anomaly
/// with config.check). Validation errors are written as JSON to `err`.
int run(const RunConfig& config, std::ostream& log, std::ostream& err);

}  // namespace lambda_echo
