#include "lambda_echo/runner.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>

namespace lambda_echo {

namespace {

using nlohmann::json;

constexpr double kPi = std::numbers::pi;

// Conservation limits checked at the end of every run.
constexpr double kTraceLimit = 1e-9;
constexpr double kHermiticityLimit = 1e-12;
constexpr double kEigenLimit = -1e-6;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Exact decimal seconds for an integer nanosecond time.
std::string fmt_time(Nanos t) {
  char buf[40];
  const char* sign = t < 0 ? "-" : "";
  const auto a = static_cast<std::uint64_t>(t < 0 ? -t : t);
  std::snprintf(buf, sizeof buf, "%s%" PRIu64 ".%09" PRIu64, sign, a / 1000000000u,
                a % 1000000000u);
  return buf;
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

std::optional<double> read_area(const json& j, const std::string& base) {
  if (j.contains(base + "_rad")) return j[base + "_rad"].get<double>();
  if (j.contains(base + "_pi")) return j[base + "_pi"].get<double>() * kPi;
  return std::nullopt;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ValidationError(std::string("unknown key '") + key + "' in " + where);
    }
  }
}

const std::set<std::string>& sweep_parameters() {
  static const std::set<std::string> names = {"input_area", "delta_t_b1", "tau",
                                              "control_areas"};
  return names;
}

std::vector<const Pulse*> labelled(const Sequence& seq, const std::string& label) {
  std::vector<const Pulse*> out;
  for (const auto& p : seq.pulses) {
    if (p.label == label) out.push_back(&p);
  }
  return out;
}

Nanos derived_tau(const Sequence& seq) {
  const auto prep = labelled(seq, "prep");
  if (prep.size() >= 2) return prep[1]->start - prep[0]->start;
  const Pulse* p1 = seq.find("P1");
  const Pulse* p2 = seq.find("P2");
  if (p1 && p2) return p2->start - p1->start;
  return 0;
}

json echo_json(const EchoEvent& e, const std::optional<std::string>& label) {
  json j{{"t_peak_s", e.t_peak},
         {"amplitude", e.amplitude},
         {"fwhm_s", e.fwhm},
         {"window", e.window}};
  j["label"] = label ? json(*label) : json(nullptr);
  return j;
}

std::size_t nearest_sample(const std::vector<Nanos>& times, Nanos t) {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return times.size() - 1;
  if (it == times.begin()) return 0;
  const auto i = static_cast<std::size_t>(it - times.begin());
  return (times[i] - t) < (t - times[i - 1]) ? i : i - 1;
}

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  reject_unknown(j,
                 {"scenario", "sequence", "knobs", "params", "grid", "sampling", "snapshots_ns",
                  "probes_hz", "sweep", "out", "threads", "all_numeric", "check"},
                 "config");
  RunConfig c;
  c.scenario = j.value("scenario", std::string());
  if (j.contains("sequence")) c.sequence = j["sequence"].get<Sequence>();
  if (j.contains("knobs")) {
    const json& k = j["knobs"];
    reject_unknown(k,
                   {"tau_ns", "delta_t_b1_ns", "b2_offset_ns", "control_areas_pi",
                    "control_areas_rad", "input_area_pi", "input_area_rad"},
                   "knobs");
    read_opt(k, "tau_ns", c.knobs.tau);
    read_opt(k, "delta_t_b1_ns", c.knobs.delta_t_b1);
    read_opt(k, "b2_offset_ns", c.knobs.b2_offset);
    c.knobs.input_area = read_area(k, "input_area");
    const char* key = k.contains("control_areas_rad") ? "control_areas_rad"
                      : k.contains("control_areas_pi") ? "control_areas_pi"
                                                       : nullptr;
    if (key) {
      const auto v = k[key].get<std::vector<double>>();
      if (v.size() != 2) throw ValidationError("control areas need two values (B1, B2)");
      const double scale = std::string(key) == "control_areas_pi" ? kPi : 1.0;
      c.knobs.control_areas = std::pair{v[0] * scale, v[1] * scale};
    }
  }
  if (j.contains("params")) {
    const json& p = j["params"];
    reject_unknown(p,
                   {"decay31_hz", "decay32_hz", "decay21_hz", "dephase31_hz", "dephase32_hz",
                    "dephase21_hz", "fwhm_hz", "angular_rates"},
                   "params");
    read_opt(p, "decay31_hz", c.rates.decay31);
    read_opt(p, "decay32_hz", c.rates.decay32);
    read_opt(p, "decay21_hz", c.rates.decay21);
    read_opt(p, "dephase31_hz", c.rates.dephase31);
    read_opt(p, "dephase32_hz", c.rates.dephase32);
    read_opt(p, "dephase21_hz", c.rates.dephase21);
    read_opt(p, "fwhm_hz", c.rates.fwhm);
    read_opt(p, "angular_rates", c.angular_rates);
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    reject_unknown(g, {"span_hz", "step_hz", "single_atom_hz"}, "grid");
    read_opt(g, "span_hz", c.grid_span_hz);
    read_opt(g, "step_hz", c.grid_step_hz);
    read_opt(g, "single_atom_hz", c.single_atom_hz);
  }
  if (j.contains("sampling")) {
    const json& s = j["sampling"];
    reject_unknown(s, {"dt_pulse_ns", "dt_out_ns"}, "sampling");
    read_opt(s, "dt_pulse_ns", c.dt_pulse_ns);
    read_opt(s, "dt_out_ns", c.dt_out_ns);
  }
  read_opt(j, "snapshots_ns", c.snapshots);
  read_opt(j, "probes_hz", c.probes_hz);
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    reject_unknown(s, {"parameter", "values"}, "sweep");
    c.sweep = SweepSpec{s.at("parameter").get<std::string>(),
                        s.at("values").get<std::vector<double>>()};
  }
  c.out_dir = j.value("out", c.out_dir);
  c.threads = j.value("threads", 0u);
  c.all_numeric = j.value("all_numeric", false);
  c.check = j.value("check", false);
  return c;
}

Scenario resolve(const RunConfig& c) {
  Scenario sc;
  const bool custom = c.scenario.empty() || c.scenario == "custom";
  if (custom) {
    if (!c.sequence) throw ValidationError("a custom run needs an inline sequence");
    sc.name = "custom";
  } else {
    sc = build_scenario(c.scenario, c.knobs);
  }
  if (c.sequence) {
    sc.sequence = *c.sequence;
    const Pulse* b1 = sc.sequence.find("B1");
    const Pulse* b2 = sc.sequence.find("B2");
    sc.sequence.recovery_satisfied.reset();
    if (b1 && b2) sc.sequence.recovery_satisfied = phase_recovery_satisfied(b1->area, b2->area);
    require_valid(sc.sequence);
    if (custom) sc.tau = derived_tau(sc.sequence);
  }

  auto set = [](double& dst, const std::optional<double>& v) {
    if (v) dst = *v;
  };
  set(sc.rates.decay31, c.rates.decay31);
  set(sc.rates.decay32, c.rates.decay32);
  set(sc.rates.decay21, c.rates.decay21);
  set(sc.rates.dephase31, c.rates.dephase31);
  set(sc.rates.dephase32, c.rates.dephase32);
  set(sc.rates.dephase21, c.rates.dephase21);
  set(sc.rates.fwhm, c.rates.fwhm);
  if (c.angular_rates) sc.angular_rates = *c.angular_rates;
  set(sc.grid.span_hz, c.grid_span_hz);
  set(sc.grid.step_hz, c.grid_step_hz);
  if (c.single_atom_hz) sc.grid.single_atom_hz = c.single_atom_hz;
  set(sc.dt_pulse_ns, c.dt_pulse_ns);
  if (c.dt_out_ns) sc.dt_out = *c.dt_out_ns;
  if (c.snapshots) sc.snapshots = *c.snapshots;
  if (c.probes_hz) sc.probe_hz = *c.probes_hz;
  if (c.sweep) sc.sweep = c.sweep;

  const SystemParams params = sc.params();
  try {
    check_params(params);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  if (params.decay21 != 0 && !c.all_numeric) {
    throw ValidationError("decay21 > 0 has no closed-form gap propagator; set all_numeric");
  }
  if (!(sc.dt_pulse_ns > 0)) throw ValidationError("dt_pulse must be positive");
  if (sc.dt_out <= 0) throw ValidationError("dt_out must be positive");
  sc.detuning_grid();
  for (Nanos t : sc.snapshots) {
    if (t < 0 || t > sc.sequence.t_end) {
      throw ValidationError("snapshot time " + std::to_string(t) + " ns outside [0, t_end]");
    }
  }
  check_plan(sc.plan(), sc.sequence);
  if (sc.sweep) {
    if (!sweep_parameters().count(sc.sweep->parameter)) {
      throw ValidationError("unknown sweep parameter '" + sc.sweep->parameter + "'");
    }
    if (custom) throw ValidationError("sweeps vary preset knobs and need a preset scenario");
  }
  return sc;
}

json resolved_config(const Scenario& sc) {
  json knobs = json::object();
  const ScenarioKnobs& k = sc.knobs;
  if (k.tau) knobs["tau_ns"] = *k.tau;
  if (k.delta_t_b1) knobs["delta_t_b1_ns"] = *k.delta_t_b1;
  if (k.b2_offset) knobs["b2_offset_ns"] = *k.b2_offset;
  if (k.input_area) {
    knobs["input_area_pi"] = *k.input_area / kPi;
    knobs["input_area_rad"] = *k.input_area;
  }
  if (k.control_areas) {
    knobs["control_areas_pi"] = {k.control_areas->first / kPi, k.control_areas->second / kPi};
    knobs["control_areas_rad"] = {k.control_areas->first, k.control_areas->second};
  }
  json grid{{"span_hz", sc.grid.span_hz}, {"step_hz", sc.grid.step_hz}};
  if (sc.grid.single_atom_hz) grid["single_atom_hz"] = *sc.grid.single_atom_hz;
  return json{{"scenario", sc.name},
              {"knobs", knobs},
              {"sequence", sc.sequence},
              {"params",
               {{"decay31_hz", sc.rates.decay31},
                {"decay32_hz", sc.rates.decay32},
                {"decay21_hz", sc.rates.decay21},
                {"dephase31_hz", sc.rates.dephase31},
                {"dephase32_hz", sc.rates.dephase32},
                {"dephase21_hz", sc.rates.dephase21},
                {"fwhm_hz", sc.rates.fwhm},
                {"angular_rates", sc.angular_rates}}},
              {"grid", grid},
              {"sampling", {{"dt_pulse_ns", sc.dt_pulse_ns}, {"dt_out_ns", sc.dt_out}}},
              {"snapshots_ns", sc.snapshots},
              {"probes_hz", sc.probe_hz}};
}

std::vector<Expectation> expected_echoes(const Sequence& seq) {
  std::vector<Expectation> out;
  const double t_end = to_seconds(seq.t_end);
  const Pulse* p1 = seq.find("P1");
  const Pulse* p2 = seq.find("P2");
  const Pulse* in = seq.find("input");
  const Pulse* b1 = seq.find("B1");
  const Pulse* b2 = seq.find("B2");
  const auto prep = labelled(seq, "prep");
  auto center = [](const Pulse* p) { return p->center_seconds(); };
  auto end = [](const Pulse* p) { return to_seconds(p->end()); };

  const Pulse* ref = nullptr;
  double tau = 0;
  EchoKind plain = EchoKind::Afc;
  if (prep.size() >= 2 && in) {
    ref = in;
    tau = center(prep[1]) - center(prep[0]);
    // Each preparation pair is itself a two-pulse sequence.
    for (std::size_t m = 0; m + 1 < prep.size(); m += 2) {
      const double two[] = {center(prep[m]), center(prep[m + 1])};
      const double next = m + 2 < prep.size() ? to_seconds(prep[m + 2]->start)
                                              : to_seconds(in->start);
      out.push_back({EchoKind::TwoPulse, predict_echo_time(EchoKind::TwoPulse, two), true, "",
                     end(prep[m + 1]), next});
    }
  } else if (p1 && p2) {
    ref = p2;
    tau = center(p2) - center(p1);
    plain = EchoKind::TwoPulse;
  } else {
    return out;
  }

  if (b1 && b2 && b1->start > ref->start) {
    const double timings[] = {center(ref), center(b1) - center(ref), center(b2), tau};
    Expectation e;
    e.kind = EchoKind::AfcControl;
    e.time = predict_echo_time(EchoKind::AfcControl, timings);
    e.window_begin = end(b2);
    e.window_end = t_end;
    if (!e.time) {
      e.expect_echo = false;
      e.reason = "B1 arrives after the rephasing time";
    } else if (seq.recovery_satisfied == false) {
      e.expect_echo = false;
      e.reason = "control areas do not sum to 4 pi";
    }
    out.push_back(e);
    // The ordinary echo still forms if it completes before B1.
    if (center(ref) + tau < to_seconds(b1->start)) {
      Expectation early;
      early.kind = plain;
      early.time = center(ref) + tau;
      early.window_begin = end(ref);
      early.window_end = to_seconds(b1->start);
      out.push_back(early);
    }
    return out;
  }

  if (plain == EchoKind::Afc) {
    const double timings[] = {center(in), tau};
    out.push_back({EchoKind::Afc, predict_echo_time(EchoKind::Afc, timings), true, "", end(in),
                   t_end});
    return out;
  }
  const double two[] = {center(p1), center(p2)};
  const double next = in && in->start > p2->start ? to_seconds(in->start) : t_end;
  out.push_back({EchoKind::TwoPulse, predict_echo_time(EchoKind::TwoPulse, two), true, "",
                 end(p2), next});
  if (in && in->start > p2->start) {
    const double three[] = {center(p1), center(p2), center(in)};
    out.push_back({EchoKind::ThreePulse, predict_echo_time(EchoKind::ThreePulse, three), true,
                   "", end(in), t_end});
  }
  return out;
}

double match_tolerance(const Scenario& sc) {
  return std::max(0.2e-6, 2 * to_seconds(sc.dt_out));
}

RunReport simulate(const Scenario& sc, const SimOptions& options) {
  RunReport rep;
  rep.scenario = sc;
  const SystemParams params = sc.params();
  rep.warnings = check_params(params);
  if (sc.sequence.recovery_satisfied == false) {
    rep.warnings.emplace_back("control areas do not sum to 4 pi; no echo recovery expected");
  }
  const DetuningGrid grid = sc.detuning_grid();

  EnsembleOptions eo;
  eo.threads = options.threads;
  eo.evolve.all_numeric = options.all_numeric;
  rep.observables = run_ensemble(sc.sequence, grid, params, sc.plan(), sc.snapshots,
                                 sc.probe_deltas(), eo);
  const Observables& obs = rep.observables;

  if (grid.size() > 1) {
    rep.detection = detect_echoes(obs, pulse_intervals(sc.sequence), options.detect);
    const double tol = match_tolerance(sc);
    for (const Expectation& e : expected_echoes(sc.sequence)) {
      ExpectationResult r;
      r.expectation = e;
      for (const EchoEvent& ev : rep.detection->events) {
        if (ev.t_peak < e.window_begin || ev.t_peak > e.window_end) continue;
        if (e.expect_echo) {
          const double dev = ev.t_peak - *e.time;
          if (std::abs(dev) <= tol && (!r.deviation || std::abs(dev) < std::abs(*r.deviation))) {
            r.echo = ev;
            r.deviation = dev;
          }
        } else if (!r.echo || ev.amplitude > r.echo->amplitude) {
          r.echo = ev;
          if (e.time) r.deviation = ev.t_peak - *e.time;
        }
      }
      r.ok = e.expect_echo ? r.echo.has_value() : !r.echo.has_value();
      char buf[200];
      if (!r.ok && e.expect_echo) {
        std::snprintf(buf, sizeof buf, "expected %s echo near %.3f us not detected",
                      to_string(e.kind).c_str(), *e.time * 1e6);
        rep.anomalies.emplace_back(buf);
      } else if (!r.ok) {
        std::snprintf(buf, sizeof buf, "echo at %.3f us where none is expected (%s)",
                      r.echo->t_peak * 1e6, e.reason.c_str());
        rep.anomalies.emplace_back(buf);
      }
      rep.results.push_back(r);
    }

    std::size_t in_window = 0;
    for (double d : grid.deltas) in_window += std::abs(d) <= params.fwhm_inhom / 2;
    if (in_window >= 16) {
      for (const auto& [key, spectrum] : obs.spectra) {
        rep.combs.push_back(
            {key.level, key.time, comb_metrics(spectrum, obs.deltas, params.fwhm_inhom)});
      }
    }
  }

  const Pulse* p1 = sc.sequence.find("P1");
  const Pulse* p2 = sc.sequence.find("P2");
  if (p1 && p2) {
    // 2 t2 - t1 between pulse centres, in ns.
    const Nanos echo2 = 2 * (2 * p2->start + p2->duration) - (2 * p1->start + p1->duration);
    for (const auto& probe : obs.probes) {
      const PhaseTrajectory ph = phase_trajectory(probe.trajectory);
      const std::size_t i0 = nearest_sample(ph.times, p1->end());
      const std::size_t ie = nearest_sample(ph.times, echo2 / 2);
      PhaseReturn pr;
      pr.delta = probe.delta;
      pr.echo_time = to_seconds(ph.times[ie]);
      pr.phase_return = wrap_phase(ph.phase[ie] - ph.phase[i0]);
      pr.rho33_min = *std::min_element(ph.rho33.begin(), ph.rho33.end());
      pr.rho33_max = *std::max_element(ph.rho33.begin(), ph.rho33.end());
      rep.phases.push_back(pr);
    }
  }

  const auto& w = obs.worst_final;
  char buf[160];
  if (w.trace_deviation > kTraceLimit) {
    std::snprintf(buf, sizeof buf, "trace deviation %.3g exceeds %.0e", w.trace_deviation,
                  kTraceLimit);
    rep.anomalies.emplace_back(buf);
  }
  if (w.hermiticity_defect > kHermiticityLimit) {
    std::snprintf(buf, sizeof buf, "hermiticity defect %.3g exceeds %.0e", w.hermiticity_defect,
                  kHermiticityLimit);
    rep.anomalies.emplace_back(buf);
  }
  if (w.min_eigenvalue < kEigenLimit) {
    std::snprintf(buf, sizeof buf, "eigenvalue %.3g below %.0e", w.min_eigenvalue, kEigenLimit);
    rep.anomalies.emplace_back(buf);
  }
  return rep;
}

json summarize(const RunReport& rep) {
  const Scenario& sc = rep.scenario;
  json j;
  j["scenario"] = sc.name;
  j["config"] = resolved_config(sc);
  j["recovery_satisfied"] =
      sc.sequence.recovery_satisfied ? json(*sc.sequence.recovery_satisfied) : json(nullptr);
  j["atoms"] = sc.detuning_grid().size();
  j["samples"] = rep.observables.times.size();
  j["warnings"] = rep.warnings;
  j["anomalies"] = rep.anomalies;

  if (rep.detection) {
    const EchoDetection& d = *rep.detection;
    const DetectOptions defaults;
    auto label_of = [&](const EchoEvent& ev) -> std::optional<std::string> {
      for (const auto& r : rep.results) {
        if (r.echo && r.expectation.expect_echo && r.echo->t_peak == ev.t_peak) {
          return to_string(r.expectation.kind);
        }
      }
      return std::nullopt;
    };
    json echoes = json::array(), weak = json::array();
    for (const auto& ev : d.events) echoes.push_back(echo_json(ev, label_of(ev)));
    for (const auto& ev : d.weak) weak.push_back(echo_json(ev, std::nullopt));
    j["detection"] = {{"guard_ns", defaults.guard},
                      {"median_factor", defaults.median_factor},
                      {"floor", defaults.floor},
                      {"relative", defaults.relative},
                      {"quiet_median", d.quiet_median},
                      {"threshold", d.threshold}};
    j["echoes"] = echoes;
    j["weak_echoes"] = weak;
  } else {
    j["detection"] = nullptr;
    j["echoes"] = json::array();
    j["weak_echoes"] = json::array();
  }

  json preds = json::array();
  for (const auto& r : rep.results) {
    const Expectation& e = r.expectation;
    json p{{"kind", to_string(e.kind)},
           {"predicted_t_s", e.time ? json(*e.time) : json(nullptr)},
           {"expect_echo", e.expect_echo},
           {"window_s", {e.window_begin, e.window_end}},
           {"ok", r.ok}};
    if (!e.reason.empty()) p["reason"] = e.reason;
    p["echo"] = r.echo ? echo_json(*r.echo, std::nullopt) : json(nullptr);
    p["deviation_s"] = r.deviation ? json(*r.deviation) : json(nullptr);
    preds.push_back(p);
  }
  j["predictions"] = preds;

  json combs = json::array();
  for (const auto& c : rep.combs) {
    const CombMetrics& m = c.metrics;
    combs.push_back({{"level", c.level},
                     {"time_ns", c.time},
                     {"has_comb", m.has_comb},
                     {"spacing_rad_s", m.spacing},
                     {"spacing_hz", m.spacing / kTwoPi},
                     {"delay_s", m.delay},
                     {"resolution_s", m.resolution},
                     {"contrast", m.contrast},
                     {"fundamental", m.fundamental},
                     {"noise_floor", m.noise_floor}});
  }
  j["comb"] = combs;

  json phases = json::array();
  for (const auto& p : rep.phases) {
    phases.push_back({{"delta_rad_s", p.delta},
                      {"echo_time_s", p.echo_time},
                      {"phase_return_rad", p.phase_return},
                      {"rho33_min", p.rho33_min},
                      {"rho33_max", p.rho33_max}});
  }
  j["phase"] = phases;

  const auto& w = rep.observables.worst_final;
  j["conservation"] = {{"max_trace_deviation", w.trace_deviation},
                       {"max_hermiticity_defect", w.hermiticity_defect},
                       {"min_eigenvalue", w.min_eigenvalue}};
  return j;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

std::string spectrum_name(const SpectrumKey& key) {
  return "spectrum_" + std::to_string(key.level) + "_" + std::to_string(key.time) + "ns.csv";
}

void write_plot(const RunReport& rep, const std::filesystem::path& dir) {
  std::ofstream f = open_out(dir / "plot.gnu");
  f << "# gnuplot " << (dir / "plot.gnu").filename().string() << "\n";
  f << "set datafile separator ','\n";
  f << "set key autotitle columnhead\n";
  f << "set multiplot layout 2,1\n";
  f << "set xlabel 'time (us)'\n";
  f << "plot 'signal.csv' using ($1*1e6):2 with lines title 'absorption', \\\n";
  f << "     'signal.csv' using ($1*1e6):3 with lines title 'coherence magnitude'\n";
  f << "set xlabel 'detuning (kHz)'\n";
  if (rep.observables.spectra.empty()) {
    f << "plot 'signal.csv' using ($1*1e6):3 with lines notitle\n";
  } else {
    f << "plot ";
    bool first = true;
    for (const auto& [key, _] : rep.observables.spectra) {
      if (key.level != 1) continue;
      if (!first) f << ", \\\n     ";
      f << "'" << spectrum_name(key) << "' using ($1/(2*pi)/1e3):2 with lines title 'rho11 at "
        << key.time / kMicro << " us'";
      first = false;
    }
    f << "\n";
  }
  f << "unset multiplot\n";
}

}  // namespace

void write_artifacts(const RunReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Observables& obs = rep.observables;
  {
    std::ofstream f = open_out(dir / "signal.csv");
    f << "t_s,absorption,coherence_magnitude\n";
    for (std::size_t k = 0; k < obs.times.size(); ++k) {
      f << fmt_time(obs.times[k]) << ',' << fmt(obs.absorption[k]) << ','
        << fmt(obs.coherence_magnitude[k]) << '\n';
    }
  }
  for (const auto& [key, pops] : obs.spectra) {
    std::ofstream f = open_out(dir / spectrum_name(key));
    f << "delta_rad_s,population\n";
    for (std::size_t i = 0; i < pops.size(); ++i) {
      f << fmt(obs.deltas[i]) << ',' << fmt(pops[i]) << '\n';
    }
  }
  for (std::size_t p = 0; p < obs.probes.size(); ++p) {
    const auto& traj = obs.probes[p].trajectory;
    const PhaseTrajectory ph = phase_trajectory(traj);
    std::ofstream f = open_out(dir / ("probe_" + std::to_string(p) + ".csv"));
    f << "# delta_rad_s=" << fmt(obs.probes[p].delta) << '\n';
    f << "t_s,re_rho13,im_rho13,phase_rad,rho11,rho22,rho33\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      const DensityMatrix& rho = traj.states[k];
      f << fmt_time(traj.times[k]) << ',' << fmt(rho(kLevel1, kLevel3).real()) << ','
        << fmt(rho(kLevel1, kLevel3).imag()) << ',' << fmt(ph.phase[k]) << ','
        << fmt(rho(kLevel1, kLevel1).real()) << ',' << fmt(rho(kLevel2, kLevel2).real()) << ','
        << fmt(rho(kLevel3, kLevel3).real()) << '\n';
    }
  }
  {
    std::ofstream f = open_out(dir / "summary.json");
    f << summarize(rep).dump(2) << '\n';
  }
  write_plot(rep, dir);
}

SweepReport sweep(const RunConfig& config, const SweepSpec& spec, const SimOptions& options) {
  if (!sweep_parameters().count(spec.parameter)) {
    throw ValidationError("unknown sweep parameter '" + spec.parameter + "'");
  }
  if (config.sequence) {
    throw ValidationError("sweeps vary preset knobs; drop the inline sequence");
  }
  if (spec.values.empty()) throw ValidationError("sweep needs at least one value");

  SweepReport out;
  out.spec = spec;
  for (double v : spec.values) {
    RunConfig c = config;
    c.sweep.reset();
    if (spec.parameter == "input_area") {
      c.knobs.input_area = v * kPi;
    } else if (spec.parameter == "control_areas") {
      c.knobs.control_areas = std::pair{kPi, v * kPi};
    } else {
      const Nanos ns = std::llround(v);
      if (spec.parameter == "tau") {
        c.knobs.tau = ns;
      } else {
        c.knobs.delta_t_b1 = ns;
      }
    }
    Scenario sc = resolve(c);
    sc.sweep.reset();

    SweepRow row;
    row.value = v;
    row.report = simulate(sc, options);
    const auto& results = row.report.results;
    auto primary = std::find_if(results.begin(), results.end(), [](const ExpectationResult& r) {
      return r.expectation.kind == EchoKind::AfcControl;
    });
    if (primary == results.end() && !results.empty()) primary = results.end() - 1;
    if (primary == results.end()) {
      row.status = "no_prediction";
    } else {
      const ExpectationResult& r = *primary;
      row.predicted = r.expectation.time;
      if (r.echo) {
        row.echo_time = r.echo->t_peak;
        row.echo_amplitude = r.echo->amplitude;
      }
      if (!r.expectation.expect_echo) {
        row.status = r.echo ? "unexpected_echo" : "no_echo";
      } else if (r.echo) {
        row.status = "echo";
      } else {
        // Largest coherence within tolerance of the prediction.
        row.status = "below_threshold";
        const Observables& obs = row.report.observables;
        const double tol = match_tolerance(sc);
        for (std::size_t k = 0; k < obs.times.size(); ++k) {
          if (std::abs(to_seconds(obs.times[k]) - *row.predicted) <= tol) {
            row.echo_amplitude = std::max(row.echo_amplitude, obs.coherence_magnitude[k]);
          }
        }
      }
    }
    out.rows.push_back(std::move(row));
  }

  json analysis;
  analysis["parameter"] = spec.parameter;
  if (spec.parameter == "input_area") {
    std::vector<std::pair<double, double>> pts;
    double peak = 0;
    for (const auto& r : out.rows) {
      if (!r.predicted) continue;
      pts.emplace_back(r.value, r.echo_amplitude);
      peak = std::max(peak, r.echo_amplitude);
    }
    if (pts.size() >= 3) {
      const LinearFit fit = linearity_fit(pts);
      analysis["linearity"] = {{"slope_per_pi", fit.slope},
                               {"intercept", fit.intercept},
                               {"r_squared", fit.r_squared},
                               {"intercept_ratio", peak > 0 ? std::abs(fit.intercept) / peak : 0}};
    } else {
      analysis["linearity"] = nullptr;
    }
  } else if (spec.parameter == "delta_t_b1") {
    json res = json::array();
    double worst = 0;
    for (const auto& r : out.rows) {
      const Sequence& seq = r.report.scenario.sequence;
      const Pulse* b1 = seq.find("B1");
      const Pulse* b2 = seq.find("B2");
      const Pulse* ref = seq.find("input") ? seq.find("input") : seq.find("P2");
      if (!b1 || !b2 || !ref || !r.echo_time || r.status != "echo") {
        res.push_back({{"value", r.value}, {"status", r.status}, {"residual_s", nullptr}});
        continue;
      }
      const double dt = b1->center_seconds() - ref->center_seconds();
      const double resid =
          dt + (*r.echo_time - b2->center_seconds()) - to_seconds(r.report.scenario.tau);
      worst = std::max(worst, std::abs(resid));
      res.push_back({{"value", r.value}, {"status", r.status}, {"residual_s", resid}});
    }
    analysis["complementarity"] = {{"residuals", res}, {"max_abs_residual_s", worst}};
  } else {
    json rows = json::array();
    for (const auto& r : out.rows) {
      json row{{"value", r.value},
               {"status", r.status},
               {"amplitude", r.echo_amplitude},
               {"timing_residual_s", r.echo_time && r.predicted
                                         ? json(*r.echo_time - *r.predicted)
                                         : json(nullptr)}};
      const auto& rec = r.report.scenario.sequence.recovery_satisfied;
      row["recovery_satisfied"] = rec ? json(*rec) : json(nullptr);
      rows.push_back(row);
    }
    analysis["rows"] = rows;
  }
  out.analysis = analysis;
  return out;
}

void write_sweep(const SweepReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f = open_out(dir / "sweep.csv");
    f << "value,echo_time_s,echo_amplitude,predicted_time_s,status\n";
    for (const auto& r : rep.rows) {
      f << fmt(r.value) << ',' << (r.echo_time ? fmt(*r.echo_time) : "") << ','
        << fmt(r.echo_amplitude) << ',' << (r.predicted ? fmt(*r.predicted) : "") << ','
        << r.status << '\n';
    }
  }
  json runs = json::array();
  for (const auto& r : rep.rows) runs.push_back(summarize(r.report));
  json j{{"sweep", {{"parameter", rep.spec.parameter}, {"values", rep.spec.values}}},
         {"analysis", rep.analysis},
         {"runs", runs}};
  std::ofstream f = open_out(dir / "summary.json");
  f << j.dump(2) << '\n';
}

int run(const RunConfig& config, std::ostream& log, std::ostream& err) {
  auto fail = [&](const char* kind, const std::string& msg) {
    err << json{{"error", kind}, {"message", msg}}.dump() << '\n';
    return 2;
  };
  try {
    const Scenario sc = resolve(config);
    SimOptions options;
    options.threads = config.threads;
    options.all_numeric = config.all_numeric;
    const std::filesystem::path dir = config.out_dir;
    std::vector<std::string> anomalies;
    if (sc.sweep) {
      RunConfig base = config;
      if (base.scenario.empty()) base.scenario = sc.name;
      const SweepReport rep = sweep(base, *sc.sweep, options);
      write_sweep(rep, dir);
      for (const auto& r : rep.rows) {
        log << sc.sweep->parameter << "=" << r.value << ": " << r.status;
        if (r.echo_time) log << " at " << *r.echo_time * 1e6 << " us";
        log << " amplitude " << r.echo_amplitude << '\n';
        for (const auto& a : r.report.anomalies) {
          anomalies.push_back(sc.sweep->parameter + "=" + fmt(r.value) + ": " + a);
        }
      }
    } else {
      const RunReport rep = simulate(sc, options);
      write_artifacts(rep, dir);
      if (rep.detection) {
        for (const auto& ev : rep.detection->events) {
          log << "echo at " << ev.t_peak * 1e6 << " us, amplitude " << ev.amplitude << '\n';
        }
      }
      anomalies = rep.anomalies;
    }
    for (const auto& w : anomalies) log << "anomaly: " << w << '\n';
    log << "wrote " << dir.string() << '\n';
    if (config.check && !anomalies.empty()) return 3;
    return 0;
  } catch (const ValidationError& e) {
    return fail("validation", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what());
  }
}

}  // namespace lambda_echo
