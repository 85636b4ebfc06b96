#pragma once

// Pulse schedules. All times are integer nanoseconds so schedules compare
// exactly; only the integrator converts them to seconds.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lambda_echo/lambda_core.hpp"

namespace lambda_echo {

using Nanos = std::int64_t;

inline constexpr Nanos kMicro = 1000;
inline constexpr double kSecondsPerNano = 1e-9;

inline double to_seconds(Nanos t) { return static_cast<double>(t) * kSecondsPerNano; }

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// P drives |1>-|3>, B drives |2>-|3>.
enum class Channel { P, B };

enum class PulseShape { Square };

std::string to_string(Channel c);
Channel channel_from_string(const std::string& s);

struct Pulse {
  Channel channel = Channel::P;
  Nanos start = 0;
  Nanos duration = 100;
  double area = 0;   // rad
  double phase = 0;  // rad
  PulseShape shape = PulseShape::Square;
  std::string label;

  Nanos end() const { return start + duration; }
  double center_seconds() const { return to_seconds(2 * start + duration) / 2; }
  /// Complex Rabi amplitude while the pulse is on.
  Complex<double> rabi() const;

  bool operator==(const Pulse&) const = default;
};

struct Sequence {
  std::vector<Pulse> pulses;
  Nanos t_end = 0;
  // Set by add_control_pair: control areas sum to 4*pi.
  std::optional<bool> recovery_satisfied;

  bool operator==(const Sequence&) const = default;

  const Pulse* find(const std::string& label) const;
};

/// Omega = area / duration for a square pulse.
double rabi_from_area(double area, double duration_seconds);

/// Time-ordering, overlap and sign checks. Empty means valid. Pulses that
/// share an instant (one ends where the next starts) count as overlapping.
std::vector<std::string> validate(const Sequence& seq);

/// Throws ValidationError listing every violation.
void require_valid(const Sequence& seq);

/// `n_pairs` P-channel pulse pairs separated by `tau`, pair m starting at
/// t_first + m * set_period. Pulses are labelled "prep".
Sequence make_afc_preparation(int n_pairs, Nanos t_first, Nanos tau, Nanos set_period,
                              double area, Nanos duration);

/// Appends a P pulse labelled "input" after everything already scheduled.
Sequence add_input(Sequence seq, Nanos t_input, double area, Nanos duration);

/// Appends B-channel pulses "B1" and "B2" and records whether their areas
/// meet the 4*pi recovery condition. The run is never blocked on it.
Sequence add_control_pair(Sequence seq, Nanos t_b1, Nanos t_b2, double area_b1,
                          double area_b2, Nanos duration);

bool phase_recovery_satisfied(double area_b1, double area_b2);

// JSON form: times in integer ns, areas in units of pi.
void to_json(nlohmann::json& j, const Pulse& p);
void from_json(const nlohmann::json& j, Pulse& p);
void to_json(nlohmann::json& j, const Sequence& s);
void from_json(const nlohmann::json& j, Sequence& s);

}  // namespace lambda_echo
