#include <doctest.h>

#include <numbers>

#include "lambda_echo/scenarios.hpp"

using namespace lambda_echo;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Nanos> starts(const Sequence& s) {
  std::vector<Nanos> out;
  for (const auto& p : s.pulses) out.push_back(p.start);
  return out;
}

std::vector<Nanos> micros(std::initializer_list<int> us) {
  std::vector<Nanos> out;
  for (int u : us) out.push_back(u * kMicro);
  return out;
}

}  // namespace

TEST_CASE("rabi from area") {
  CHECK(rabi_from_area(kPi, 100e-9) == doctest::Approx(kPi * 1e7));
  CHECK(rabi_from_area(kPi / 5, 100e-9) == doctest::Approx(kTwoPi * 1e6));
  CHECK(rabi_from_area(0, 100e-9) == 0);
}

TEST_CASE("afc preparation") {
  const auto five = make_afc_preparation(5, 5 * kMicro, 10 * kMicro, 30 * kMicro, kPi / 5, 100);
  CHECK(starts(five) == micros({5, 15, 35, 45, 65, 75, 95, 105, 125, 135}));
  for (const auto& p : five.pulses) {
    CHECK(p.channel == Channel::P);
    CHECK(p.area == kPi / 5);
    CHECK(p.label == "prep");
  }
  const auto one = make_afc_preparation(1, 5 * kMicro, 10 * kMicro, 30 * kMicro, kPi / 2, 100);
  CHECK(starts(one) == micros({5, 15}));
  CHECK(make_afc_preparation(0, 5 * kMicro, 10 * kMicro, 30 * kMicro, kPi, 100).pulses.empty());
  CHECK_THROWS_AS(make_afc_preparation(2, 0, 100, 30 * kMicro, kPi, 100), ValidationError);
  CHECK_THROWS_AS(make_afc_preparation(2, 0, 10 * kMicro, 10 * kMicro, kPi, 100),
                  ValidationError);
}

TEST_CASE("input and controls") {
  auto seq = make_afc_preparation(5, 5 * kMicro, 10 * kMicro, 30 * kMicro, kPi / 5, 100);
  seq = add_input(seq, 175 * kMicro, kPi / 5, 100);
  CHECK(seq.pulses.back().label == "input");
  CHECK_THROWS_AS(add_input(seq, 135 * kMicro, kPi / 5, 100), ValidationError);

  const auto ok = add_control_pair(seq, 177 * kMicro, 187 * kMicro, kPi, 3 * kPi, 100);
  REQUIRE(ok.recovery_satisfied.has_value());
  CHECK(*ok.recovery_satisfied);
  CHECK(ok.find("B1")->channel == Channel::B);
  const auto bad = add_control_pair(seq, 177 * kMicro, 187 * kMicro, kPi, kPi, 100);
  CHECK_FALSE(*bad.recovery_satisfied);
  CHECK_THROWS_AS(add_control_pair(seq, 187 * kMicro, 177 * kMicro, kPi, 3 * kPi, 100),
                  ValidationError);
  CHECK(phase_recovery_satisfied(2 * kPi, 2 * kPi));
}

TEST_CASE("validation") {
  Sequence s;
  s.pulses = {{Channel::P, 0, 100, kPi, 0, PulseShape::Square, ""},
              {Channel::P, 200, 100, kPi, 0, PulseShape::Square, ""}};
  s.t_end = 1000;
  CHECK(validate(s).empty());

  Sequence touch = s;
  touch.pulses[1].start = 100;
  CHECK_FALSE(validate(touch).empty());

  Sequence cross = s;
  cross.pulses[1].channel = Channel::B;
  cross.pulses[1].start = 50;
  CHECK_FALSE(validate(cross).empty());

  Sequence neg = s;
  neg.pulses[0].start = -10;
  CHECK_FALSE(validate(neg).empty());

  Sequence late = s;
  late.t_end = 250;
  CHECK_FALSE(validate(late).empty());
  CHECK_THROWS_AS(require_valid(late), ValidationError);
}

TEST_CASE("json round trip is exact") {
  for (const auto& name : scenario_names()) {
    const Sequence s = build_scenario(name).sequence;
    const nlohmann::json j = s;
    const Sequence back = nlohmann::json::parse(j.dump()).get<Sequence>();
    CHECK(back == s);
  }
  // Areas may be written in units of pi alone.
  const auto p = nlohmann::json::parse(
                     R"({"channel":"B","start_ns":1000,"duration_ns":100,"area_pi":3})")
                     .get<Pulse>();
  CHECK(p.area == doctest::Approx(3 * kPi));
  CHECK(p.channel == Channel::B);
  CHECK_THROWS(nlohmann::json::parse(R"({"channel":"X","start_ns":0,"area_pi":1})").get<Pulse>());
}

TEST_CASE("presets") {
  for (const auto& name : scenario_names()) {
    const Scenario a = build_scenario(name);
    const Scenario b = build_scenario(name);
    CHECK(a.sequence == b.sequence);
    CHECK(validate(a.sequence).empty());
    CHECK_NOTHROW(check_plan(a.plan(), a.sequence));
  }

  const auto fig2a = build_scenario("fig2a");
  CHECK(starts(fig2a.sequence) == micros({5, 15, 35, 45, 65, 75, 95, 105, 125, 135, 175}));
  CHECK(fig2a.snapshots == micros({16, 46, 76, 106, 136}));
  CHECK(fig2a.sequence.t_end == 200 * kMicro);

  const auto sweep = build_scenario("fig2c_sweep");
  REQUIRE(sweep.sweep.has_value());
  CHECK(sweep.sweep->parameter == "input_area");
  CHECK(sweep.sweep->values.size() == 4);

  const auto fig2e = build_scenario("fig2e");
  CHECK(starts(fig2e.sequence) == micros({5, 15, 175}));
  for (const auto& p : fig2e.sequence.pulses) CHECK(p.area == doctest::Approx(kPi / 2));

  ScenarioKnobs two;
  two.delta_t_b1 = 2 * kMicro;
  const auto fig3a = build_scenario("fig3a", two);
  const Pulse* b1 = fig3a.sequence.find("B1");
  REQUIRE(b1);
  CHECK(b1->start - fig3a.sequence.find("input")->start == 2 * kMicro);
  CHECK(b1->area == doctest::Approx(kPi));
  CHECK(fig3a.sequence.find("B2")->area == doctest::Approx(3 * kPi));
  CHECK(fig3a.tau == 5 * kMicro);
  CHECK(*fig3a.sequence.recovery_satisfied);

  const auto fig3b = build_scenario("fig3b");
  CHECK(fig3b.sequence.find("B1")->start - fig3b.sequence.find("input")->start > fig3b.tau);

  const auto fig3c = build_scenario("fig3c");
  CHECK(fig3c.sequence.find("B1")->area + fig3c.sequence.find("B2")->area ==
        doctest::Approx(2 * kPi));
  CHECK_FALSE(*fig3c.sequence.recovery_satisfied);

  const auto fig3g = build_scenario("fig3g");
  CHECK(fig3g.sequence.find("B1")->start > fig3g.sequence.find("P2")->end());
  CHECK(fig3g.sequence.find("B2")->start == 175 * kMicro);
  CHECK(fig3g.sequence.find("input") == nullptr);

  const auto fig3i = build_scenario("fig3i");
  CHECK(fig3i.grid.single_atom_hz.has_value());
  CHECK(fig3i.params().dephase31 == 0);
  CHECK(fig3i.params().decay31 == 0);

  CHECK_THROWS_AS(build_scenario("fig9"), ValidationError);
  ScenarioKnobs wide;
  wide.tau = 50;
  CHECK_THROWS_AS(build_scenario("fig2a", wide), ValidationError);
}
