#pragma once

// Named run specifications for the echo schemes: AFC storage, conventional
// two- and three-pulse echoes, control-pulse storage and phase-locked echoes.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lambda_echo/ensemble.hpp"

namespace lambda_echo {

inline constexpr Nanos kPulseDuration = 100;
inline constexpr Nanos kFirstPulse = 5 * kMicro;
inline constexpr Nanos kSetPeriod = 30 * kMicro;
inline constexpr Nanos kInputTime = 175 * kMicro;
inline constexpr Nanos kWindowEnd = 200 * kMicro;
inline constexpr Nanos kDefaultB2Offset = 10 * kMicro;
inline constexpr double kProbeDetuningHz = 40e3;

/// Optional overrides of preset geometry. Unset fields keep preset defaults.
struct ScenarioKnobs {
  std::optional<Nanos> tau;         // spacing within a pulse pair
  std::optional<Nanos> delta_t_b1;  // B1 start minus INPUT (or second pulse) start
  std::optional<Nanos> b2_offset;   // B2 start minus B1 start
  std::optional<std::pair<double, double>> control_areas;  // rad
  std::optional<double> input_area;                        // rad
};

struct SweepSpec {
  std::string parameter;  // input_area, delta_t_b1, tau, control_areas
  std::vector<double> values;  // units of pi for areas, ns for times
};

/// Everything a run needs. Inputs stay in the units they are configured in
/// (Hz, ns) so a resolved scenario can be written out and reloaded exactly.
struct Scenario {
  std::string name;
  Sequence sequence;
  RatesHz rates;
  bool angular_rates = true;
  GridSpec grid;
  double dt_pulse_ns = 0.5;
  Nanos dt_out = 50;
  std::vector<Nanos> snapshots;
  std::vector<double> probe_hz;
  Nanos tau = 0;  // rephasing delay written by the first pulse pair
  ScenarioKnobs knobs;  // as resolved
  std::optional<SweepSpec> sweep;

  SystemParams params() const { return rates.to_params(angular_rates); }
  SamplingPlan plan() const;
  DetuningGrid detuning_grid() const { return make_grid(grid, params().fwhm_inhom); }
  std::vector<double> probe_deltas() const;
};

const std::vector<std::string>& scenario_names();

/// Pure: identical inputs give identical scenarios. Throws ValidationError
/// for unknown names or inconsistent knobs.
Scenario build_scenario(const std::string& name, const ScenarioKnobs& knobs = {});

}  // namespace lambda_echo
