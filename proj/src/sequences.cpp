#include "lambda_echo/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace lambda_echo {

std::string to_string(Channel c) { return c == Channel::P ? "P" : "B"; }

Channel channel_from_string(const std::string& s) {
  if (s == "P") return Channel::P;
  if (s == "B") return Channel::B;
  throw ValidationError("unknown channel '" + s + "' (expected P or B)");
}

Complex<double> Pulse::rabi() const {
  return std::polar(rabi_from_area(area, to_seconds(duration)), phase);
}

const Pulse* Sequence::find(const std::string& label) const {
  auto it = std::find_if(pulses.begin(), pulses.end(),
                         [&](const Pulse& p) { return p.label == label; });
  return it == pulses.end() ? nullptr : &*it;
}

double rabi_from_area(double area, double duration_seconds) {
  if (!(duration_seconds > 0)) {
    throw ValidationError("pulse duration must be positive");
  }
  return area / duration_seconds;
}

std::vector<std::string> validate(const Sequence& seq) {
  std::vector<std::string> out;
  auto describe = [](std::size_t i, const Pulse& p) {
    std::ostringstream os;
    os << "pulse " << i;
    if (!p.label.empty()) os << " (" << p.label << ")";
    return os.str();
  };
  for (std::size_t i = 0; i < seq.pulses.size(); ++i) {
    const Pulse& p = seq.pulses[i];
    if (p.start < 0) out.push_back(describe(i, p) + ": negative start time");
    if (p.duration <= 0) out.push_back(describe(i, p) + ": non-positive duration");
    if (!std::isfinite(p.area) || p.area < 0) {
      out.push_back(describe(i, p) + ": area must be finite and non-negative");
    }
    if (!std::isfinite(p.phase)) out.push_back(describe(i, p) + ": non-finite phase");
    if (i > 0) {
      const Pulse& prev = seq.pulses[i - 1];
      if (p.start < prev.start) {
        out.push_back(describe(i, p) + ": not sorted by start time");
      } else if (p.start <= prev.end()) {
        out.push_back(describe(i, p) + ": overlaps " + describe(i - 1, prev));
      }
    }
  }
  if (seq.t_end < 0) out.emplace_back("negative t_end");
  if (!seq.pulses.empty()) {
    Nanos last = 0;
    for (const Pulse& p : seq.pulses) last = std::max(last, p.end());
    if (seq.t_end < last) out.emplace_back("t_end precedes the end of the last pulse");
  }
  return out;
}

void require_valid(const Sequence& seq) {
  const auto v = validate(seq);
  if (v.empty()) return;
  std::string msg = "invalid sequence:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ValidationError(msg);
}

Sequence make_afc_preparation(int n_pairs, Nanos t_first, Nanos tau, Nanos set_period,
                              double area, Nanos duration) {
  if (n_pairs < 0) throw ValidationError("n_pairs must be non-negative");
  if (duration <= 0) throw ValidationError("pulse duration must be positive");
  if (tau <= duration) throw ValidationError("tau must exceed the pulse duration");
  if (n_pairs > 1 && set_period <= tau + duration) {
    throw ValidationError("set period must leave room for a full pulse pair");
  }
  Sequence seq;
  for (int m = 0; m < n_pairs; ++m) {
    const Nanos t0 = t_first + m * set_period;
    seq.pulses.push_back({Channel::P, t0, duration, area, 0.0, PulseShape::Square, "prep"});
    seq.pulses.push_back({Channel::P, t0 + tau, duration, area, 0.0, PulseShape::Square, "prep"});
  }
  seq.t_end = seq.pulses.empty() ? 0 : seq.pulses.back().end();
  require_valid(seq);
  return seq;
}

namespace {

Sequence append(Sequence seq, const Pulse& p) {
  if (!seq.pulses.empty() && p.start <= seq.pulses.back().end()) {
    throw ValidationError("pulse '" + p.label + "' at " + std::to_string(p.start) +
                          " ns overlaps or precedes the existing schedule");
  }
  seq.pulses.push_back(p);
  seq.t_end = std::max(seq.t_end, p.end());
  require_valid(seq);
  return seq;
}

}  // namespace

Sequence add_input(Sequence seq, Nanos t_input, double area, Nanos duration) {
  return append(std::move(seq),
                {Channel::P, t_input, duration, area, 0.0, PulseShape::Square, "input"});
}

bool phase_recovery_satisfied(double area_b1, double area_b2) {
  return std::abs(area_b1 + area_b2 - 4 * std::numbers::pi) <= 1e-9;
}

Sequence add_control_pair(Sequence seq, Nanos t_b1, Nanos t_b2, double area_b1,
                          double area_b2, Nanos duration) {
  if (t_b2 <= t_b1) throw ValidationError("B2 must start after B1");
  seq = append(std::move(seq),
               {Channel::B, t_b1, duration, area_b1, 0.0, PulseShape::Square, "B1"});
  seq = append(std::move(seq),
               {Channel::B, t_b2, duration, area_b2, 0.0, PulseShape::Square, "B2"});
  seq.recovery_satisfied = phase_recovery_satisfied(area_b1, area_b2);
  return seq;
}

void to_json(nlohmann::json& j, const Pulse& p) {
  j = nlohmann::json{{"channel", to_string(p.channel)},
                     {"start_ns", p.start},
                     {"duration_ns", p.duration},
                     {"area_pi", p.area / std::numbers::pi},
                     {"area_rad", p.area},
                     {"phase_rad", p.phase},
                     {"shape", "square"}};
  if (!p.label.empty()) j["label"] = p.label;
}

void from_json(const nlohmann::json& j, Pulse& p) {
  p.channel = channel_from_string(j.at("channel").get<std::string>());
  p.start = j.at("start_ns").get<Nanos>();
  p.duration = j.value("duration_ns", Nanos{100});
  // area_rad, when present, is authoritative so reloads are bit-exact.
  p.area = j.contains("area_rad") ? j["area_rad"].get<double>()
                                  : j.at("area_pi").get<double>() * std::numbers::pi;
  p.phase = j.value("phase_rad", 0.0);
  if (j.value("shape", std::string("square")) != "square") {
    throw ValidationError("only square pulses are supported");
  }
  p.shape = PulseShape::Square;
  p.label = j.value("label", std::string());
}

void to_json(nlohmann::json& j, const Sequence& s) {
  j = nlohmann::json{{"pulses", s.pulses}, {"t_end_ns", s.t_end}};
  if (s.recovery_satisfied) j["recovery_satisfied"] = *s.recovery_satisfied;
}

void from_json(const nlohmann::json& j, Sequence& s) {
  s.pulses = j.at("pulses").get<std::vector<Pulse>>();
  s.t_end = j.at("t_end_ns").get<Nanos>();
  s.recovery_satisfied.reset();
  if (j.contains("recovery_satisfied")) s.recovery_satisfied = j["recovery_satisfied"].get<bool>();
}

}  // namespace lambda_echo
