#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lambda_echo/runner.hpp"

using namespace lambda_echo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lambda_echo_runner_" + name);
  fs::remove_all(dir);
  return dir;
}

// A 4 kHz grid keeps the artificial grid revival (1/step = 250 us) outside
// every preset window while running twice as fast as the default.
RunConfig quick(const std::string& scenario, const fs::path& out) {
  RunConfig c;
  c.scenario = scenario;
  c.grid_step_hz = 4e3;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = config_from_json(json::parse(R"({
    "scenario": "fig3a",
    "knobs": {"delta_t_b1_ns": 3000, "control_areas_pi": [1, 3]},
    "params": {"decay31_hz": 1e4, "angular_rates": false},
    "grid": {"step_hz": 4000},
    "sampling": {"dt_out_ns": 100},
    "threads": 2
  })"));
  CHECK(c.scenario == "fig3a");
  CHECK(*c.knobs.delta_t_b1 == 3000);
  CHECK(c.knobs.control_areas->second == doctest::Approx(3 * kPi));
  CHECK(*c.rates.decay31 == 1e4);
  CHECK_FALSE(*c.angular_rates);
  CHECK(*c.dt_out_ns == 100);
  CHECK(c.threads == 2);

  const Scenario sc = resolve(c);
  CHECK(sc.params().decay31 == 1e4);
  CHECK(sc.params().decay32 == 20e3);
  CHECK(sc.sequence.find("B1")->start - sc.sequence.find("input")->start == 3000);

  CHECK_THROWS_AS(config_from_json(json::parse(R"({"scenaro": "fig2a"})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"params": {"gamma": 1}})")), ValidationError);
}

TEST_CASE("resolve rejects bad configs") {
  RunConfig c;
  CHECK_THROWS_AS(resolve(c), ValidationError);
  c.scenario = "fig2a";
  c.rates.decay21 = 1e3;
  CHECK_THROWS_AS(resolve(c), ValidationError);
  c.all_numeric = true;
  CHECK_NOTHROW(resolve(c));
  c = RunConfig{};
  c.scenario = "fig2a";
  c.grid_step_hz = -1;
  CHECK_THROWS_AS(resolve(c), ValidationError);
  c = RunConfig{};
  c.scenario = "fig2a";
  c.snapshots = std::vector<Nanos>{250 * kMicro};
  CHECK_THROWS_AS(resolve(c), ValidationError);
  c = RunConfig{};
  c.scenario = "fig2a";
  c.dt_pulse_ns = 5;
  CHECK_THROWS_AS(resolve(c), ValidationError);
  c = RunConfig{};
  c.scenario = "fig2a";
  c.rates.dephase31 = -3;
  CHECK_THROWS_AS(resolve(c), ValidationError);
}

TEST_CASE("resolved config reloads to the same scenario") {
  for (const auto& name : scenario_names()) {
    RunConfig c;
    c.scenario = name;
    const Scenario sc = resolve(c);
    const json first = resolved_config(sc);
    const Scenario again = resolve(config_from_json(json::parse(first.dump())));
    CHECK(again.sequence == sc.sequence);
    CHECK(resolved_config(again) == first);
  }
  // Custom schedules go through the same path.
  RunConfig c;
  c.sequence = build_scenario("fig2e").sequence;
  const Scenario custom = resolve(c);
  CHECK(custom.name == "custom");
  CHECK(custom.tau == 10 * kMicro);
  const Scenario back = resolve(config_from_json(resolved_config(custom)));
  CHECK(back.sequence == custom.sequence);
}

TEST_CASE("expected echoes follow the labels") {
  auto exp = expected_echoes(build_scenario("fig2a").sequence);
  REQUIRE(exp.size() == 6);
  CHECK(exp.back().kind == EchoKind::Afc);
  CHECK(*exp.back().time == doctest::Approx(185.05e-6));

  exp = expected_echoes(build_scenario("fig2e").sequence);
  REQUIRE(exp.size() == 2);
  CHECK(*exp[0].time == doctest::Approx(25.05e-6));
  CHECK(exp[1].kind == EchoKind::ThreePulse);
  CHECK(*exp[1].time == doctest::Approx(185.05e-6));

  exp = expected_echoes(build_scenario("fig3b").sequence);
  const auto ctrl = std::find_if(exp.begin(), exp.end(),
                                 [](const auto& e) { return e.kind == EchoKind::AfcControl; });
  REQUIRE(ctrl != exp.end());
  CHECK_FALSE(ctrl->expect_echo);
  CHECK_FALSE(ctrl->time.has_value());
  CHECK(exp.back().kind == EchoKind::Afc);
  CHECK(*exp.back().time == doctest::Approx(180.05e-6));

  exp = expected_echoes(build_scenario("fig3c").sequence);
  CHECK_FALSE(exp.back().expect_echo);
  CHECK(exp.back().reason.find("4 pi") != std::string::npos);

  exp = expected_echoes(build_scenario("fig3g").sequence);
  REQUIRE(exp.size() == 1);
  CHECK(*exp[0].time == doctest::Approx(184.85e-6));
}

TEST_CASE("run writes deterministic artifacts") {
  const fs::path a = scratch("a"), b = scratch("b");
  RunConfig ca = quick("fig2e", a);
  ca.threads = 1;
  RunConfig cb = quick("fig2e", b);
  cb.threads = 3;
  std::ostringstream log, err;
  REQUIRE(run(ca, log, err) == 0);
  REQUIRE(run(cb, log, err) == 0);
  CHECK(err.str().empty());

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"plot.gnu", "signal.csv", "spectrum_1_136000ns.csv",
                                          "spectrum_1_16000ns.csv", "spectrum_2_136000ns.csv",
                                          "spectrum_2_16000ns.csv", "spectrum_3_136000ns.csv",
                                          "spectrum_3_16000ns.csv", "summary.json"});
  for (const auto& n : names) CHECK_MESSAGE(slurp(a / n) == slurp(b / n), n);

  const json s = json::parse(slurp(a / "summary.json"));
  REQUIRE(s["echoes"].size() == 2);
  CHECK(s["echoes"][0]["label"] == "two_pulse");
  CHECK(s["echoes"][1]["label"] == "three_pulse");
  CHECK(s["echoes"][1]["amplitude"].get<double>() < s["echoes"][0]["amplitude"].get<double>());
  CHECK(s["config"]["grid"]["step_hz"] == 4e3);
  CHECK(s["config"]["params"]["decay31_hz"] == 20e3);
  CHECK_FALSE(s.contains("threads"));
  CHECK(slurp(a / "signal.csv").rfind("t_s,absorption,coherence_magnitude\n", 0) == 0);
  CHECK(slurp(a / "plot.gnu").find("signal.csv") != std::string::npos);
}

TEST_CASE("exit codes") {
  std::ostringstream log, err;
  RunConfig bad = quick("fig9", scratch("bad"));
  CHECK(run(bad, log, err) == 2);
  const json rec = json::parse(err.str());
  CHECK(rec["error"] == "validation");
  CHECK(rec["message"].get<std::string>().find("fig9") != std::string::npos);

  // fig3b: B1 after the rephasing time, nothing after B2 and no anomaly.
  const fs::path dir = scratch("fig3b");
  RunConfig fig3b = quick("fig3b", dir);
  fig3b.check = true;
  CHECK(run(fig3b, log, err) == 0);
  const json s = json::parse(slurp(dir / "summary.json"));
  CHECK(s["recovery_satisfied"] == true);
  CHECK(s["anomalies"].empty());
}

TEST_CASE("single-atom runs report the probe phase") {
  const fs::path dir = scratch("fig3i");
  std::ostringstream log, err;
  REQUIRE(run(quick("fig3i", dir), log, err) == 0);
  const json s = json::parse(slurp(dir / "summary.json"));
  CHECK(s["detection"].is_null());
  REQUIRE(s["phase"].size() == 2);
  for (const auto& p : s["phase"]) {
    CHECK(std::abs(p["phase_return_rad"].get<double>()) < 0.05);
    CHECK(p["rho33_min"].get<double>() >= 0);
    CHECK(p["rho33_max"].get<double>() <= 1);
  }
  CHECK(fs::exists(dir / "probe_0.csv"));
}

TEST_CASE("sweeps") {
  SimOptions opt;
  RunConfig c = quick("fig2a", scratch("unused"));
  const auto lin = sweep(c, {"input_area", {1.0 / 40, 1.0 / 20, 1.0 / 10, 1.0 / 5}}, opt);
  REQUIRE(lin.rows.size() == 4);
  for (const auto& r : lin.rows) CHECK(r.status == "echo");
  CHECK(lin.analysis["linearity"]["r_squared"].get<double>() > 0.99);

  RunConfig f3 = quick("fig3a", scratch("unused"));
  const auto dts = sweep(f3, {"delta_t_b1", {2000, 6000}}, opt);
  REQUIRE(dts.rows.size() == 2);
  CHECK(dts.rows[0].status == "echo");
  CHECK(dts.rows[1].status == "no_echo");
  const auto& res = dts.analysis["complementarity"];
  CHECK(res["max_abs_residual_s"].get<double>() < 0.2e-6);
  CHECK(res["residuals"][1]["residual_s"].is_null());

  CHECK_THROWS_AS(sweep(c, {"colour", {1}}, opt), ValidationError);

  const fs::path dir = scratch("sweep");
  write_sweep(dts, dir);
  const std::string csv = slurp(dir / "sweep.csv");
  CHECK(csv.rfind("value,echo_time_s,echo_amplitude,predicted_time_s,status\n", 0) == 0);
  CHECK(csv.find(",no_echo\n") != std::string::npos);
}
