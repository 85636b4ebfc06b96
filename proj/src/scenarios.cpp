#include "lambda_echo/scenarios.hpp"

#include <algorithm>
#include <numbers>

namespace lambda_echo {

namespace {

constexpr double kPi = std::numbers::pi;
Scenario base(const std::string& name) {
  Scenario sc;
  sc.name = name;
  return sc;
}

void finish(Scenario& sc) {
  require_valid(sc.sequence);
}

Scenario afc(const std::string& name, const ScenarioKnobs& knobs, Nanos default_tau) {
  Scenario sc = base(name);
  sc.knobs = knobs;
  sc.tau = knobs.tau.value_or(default_tau);
  sc.knobs.tau = sc.tau;
  const double input_area = knobs.input_area.value_or(kPi / 5);
  sc.knobs.input_area = input_area;
  sc.sequence = make_afc_preparation(5, kFirstPulse, sc.tau, kSetPeriod, kPi / 5, kPulseDuration);
  sc.sequence = add_input(std::move(sc.sequence), kInputTime, input_area, kPulseDuration);
  return sc;
}

Scenario with_controls(Scenario sc, Nanos reference, Nanos default_dt_b1,
                       std::optional<Nanos> fixed_b2, double default_b2_area) {
  const Nanos dt_b1 = sc.knobs.delta_t_b1.value_or(default_dt_b1);
  const auto areas = sc.knobs.control_areas.value_or(std::pair{kPi, default_b2_area});
  const Nanos t_b1 = reference + dt_b1;
  Nanos t_b2 = 0;
  if (sc.knobs.b2_offset || !fixed_b2) {
    t_b2 = t_b1 + sc.knobs.b2_offset.value_or(kDefaultB2Offset);
  } else {
    t_b2 = *fixed_b2;
  }
  sc.knobs.delta_t_b1 = dt_b1;
  sc.knobs.b2_offset = t_b2 - t_b1;
  sc.knobs.control_areas = areas;
  sc.sequence = add_control_pair(std::move(sc.sequence), t_b1, t_b2, areas.first, areas.second,
                                 kPulseDuration);
  sc.sequence.t_end = std::max(kWindowEnd, t_b2 + 20 * kMicro);
  return sc;
}

Scenario two_pulse(const std::string& name, const ScenarioKnobs& knobs, double second_area,
                   double second_phase) {
  Scenario sc = base(name);
  sc.knobs = knobs;
  sc.tau = knobs.tau.value_or(10 * kMicro);
  sc.knobs.tau = sc.tau;
  const Nanos t2 = kFirstPulse + sc.tau;
  sc.sequence.pulses = {
      {Channel::P, kFirstPulse, kPulseDuration, kPi / 2, 0.0, PulseShape::Square, "P1"},
      {Channel::P, t2, kPulseDuration, second_area, second_phase, PulseShape::Square, "P2"}};
  sc.sequence.t_end = t2 + kPulseDuration;
  return sc;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"fig2a", "fig2c_sweep", "fig2e", "fig3a",
                                                 "fig3b", "fig3c",       "fig3g", "fig3i"};
  return names;
}

SamplingPlan Scenario::plan() const {
  return SamplingPlan::uniform(sequence.t_end, dt_out, dt_pulse_ns * 1e-9, snapshots);
}

std::vector<double> Scenario::probe_deltas() const {
  std::vector<double> out;
  for (double hz : probe_hz) out.push_back(kTwoPi * hz);
  return out;
}

Scenario build_scenario(const std::string& name, const ScenarioKnobs& knobs) {
  if (name == "fig2a" || name == "fig2c_sweep") {
    Scenario sc = afc(name, knobs, 10 * kMicro);
    sc.sequence.t_end = kWindowEnd;
    sc.snapshots = {16 * kMicro, 46 * kMicro, 76 * kMicro, 106 * kMicro, 136 * kMicro};
    if (name == "fig2c_sweep") {
      sc.sweep = SweepSpec{"input_area", {1.0 / 40, 1.0 / 20, 1.0 / 10, 1.0 / 5}};
    }
    finish(sc);
    return sc;
  }
  if (name == "fig2e") {
    Scenario sc = two_pulse(name, knobs, kPi / 2, 0.0);
    const double third = knobs.input_area.value_or(kPi / 2);
    sc.knobs.input_area = third;
    sc.sequence = add_input(std::move(sc.sequence), kInputTime, third, kPulseDuration);
    sc.sequence.t_end = kWindowEnd;
    sc.snapshots = {16 * kMicro, 136 * kMicro};
    finish(sc);
    return sc;
  }
  if (name == "fig3a" || name == "fig3b" || name == "fig3c") {
    ScenarioKnobs k = knobs;
    if (name == "fig3c" && !k.control_areas) k.control_areas = std::pair{kPi, kPi};
    Scenario sc = afc(name, k, 5 * kMicro);
    const Nanos default_dt = name == "fig3b" ? 6 * kMicro : 2 * kMicro;
    sc = with_controls(std::move(sc), kInputTime, default_dt, std::nullopt, 3 * kPi);
    sc.snapshots = {136 * kMicro};
    finish(sc);
    return sc;
  }
  if (name == "fig3g") {
    Scenario sc = two_pulse(name, knobs, kPi, 0.0);
    const Nanos t2 = sc.sequence.pulses[1].start;
    // B2 takes the place of the third pulse unless an offset is requested.
    sc = with_controls(std::move(sc), t2, 200, kInputTime, 3 * kPi);
    sc.probe_hz = {kProbeDetuningHz, -kProbeDetuningHz};
    finish(sc);
    return sc;
  }
  if (name == "fig3i") {
    // Refocusing pulse in quadrature with the first pulse.
    Scenario sc = two_pulse(name, knobs, kPi, kPi / 2);
    sc.rates.decay31 = sc.rates.decay32 = 0;
    sc.rates.dephase31 = sc.rates.dephase32 = 0;
    sc.grid.single_atom_hz = kProbeDetuningHz;
    sc.probe_hz = {kProbeDetuningHz, -kProbeDetuningHz};
    sc.sequence.t_end = 30 * kMicro;
    finish(sc);
    return sc;
  }
  std::string msg = "unknown scenario '" + name + "'; known:";
  for (const auto& n : scenario_names()) msg += " " + n;
  throw ValidationError(msg);
}

}  // namespace lambda_echo
