#include "lambda_echo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace lambda_echo {

namespace {

constexpr double kPi = std::numbers::pi;

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return (lo + hi) / 2;
}

}  // namespace

std::vector<Interval> pulse_intervals(const Sequence& seq) {
  std::vector<Interval> out;
  out.reserve(seq.pulses.size());
  for (const Pulse& p : seq.pulses) out.push_back({p.start, p.end()});
  return out;
}

EchoDetection detect_echoes(const Observables& obs, const std::vector<Interval>& exclusions,
                            const DetectOptions& options) {
  const auto& c = obs.coherence_magnitude;
  const auto& t = obs.times;
  if (c.empty() || c.size() != t.size()) throw std::invalid_argument("empty signal");
  Nanos longest = 0;
  for (const auto& e : exclusions) longest = std::max(longest, e.end - e.begin);
  if (options.relative < 0 || options.relative > 1) {
    throw std::invalid_argument("relative threshold must lie in [0, 1]");
  }
  if (options.guard < 2 * longest) {
    throw std::invalid_argument("guard must be at least twice the pulse duration");
  }

  auto excluded = [&](Nanos time) {
    return std::any_of(exclusions.begin(), exclusions.end(), [&](const Interval& e) {
      return time >= e.begin && time <= e.end + options.guard;
    });
  };

  // Quiet windows as [first, last] sample index ranges.
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t i = 0; i < t.size();) {
    if (excluded(t[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < t.size() && !excluded(t[j + 1])) ++j;
    ranges.emplace_back(i, j);
    i = j + 1;
  }

  EchoDetection det;
  std::vector<double> quiet;
  for (const auto& [a, b] : ranges) {
    det.windows.push_back({t[a], t[b]});
    quiet.insert(quiet.end(), c.begin() + static_cast<std::ptrdiff_t>(a),
                 c.begin() + static_cast<std::ptrdiff_t>(b) + 1);
  }
  det.quiet_median = median(std::move(quiet));
  det.threshold = std::max(options.median_factor * det.quiet_median, options.floor);

  auto crossing = [&](std::size_t from, std::size_t to, double half) {
    // Walks from the peak toward `to` and interpolates the half-maximum time.
    const int dir = to > from ? 1 : -1;
    std::size_t i = from;
    while (i != to) {
      const std::size_t n = static_cast<std::size_t>(static_cast<long>(i) + dir);
      if (c[n] < half) {
        const double f = (c[i] - half) / (c[i] - c[n]);
        return to_seconds(t[i]) + f * (to_seconds(t[n]) - to_seconds(t[i]));
      }
      i = n;
    }
    return to_seconds(t[to]);
  };

  std::vector<EchoEvent> candidates;
  double strongest = 0;
  for (std::size_t w = 0; w < ranges.size(); ++w) {
    const auto [a, b] = ranges[w];
    for (std::size_t i = a + 1; i < b; ++i) {
      if (!(c[i] > c[i - 1] && c[i] >= c[i + 1]) || c[i] <= det.threshold) continue;
      const double half = c[i] / 2;
      EchoEvent ev;
      ev.t_peak = to_seconds(t[i]);
      ev.amplitude = c[i];
      ev.fwhm = crossing(i, b, half) - crossing(i, a, half);
      ev.window = static_cast<int>(w);
      candidates.push_back(ev);
      strongest = std::max(strongest, ev.amplitude);
    }
  }
  for (const auto& ev : candidates) {
    (ev.amplitude >= options.relative * strongest ? det.events : det.weak).push_back(ev);
  }
  return det;
}

std::string to_string(EchoKind k) {
  switch (k) {
    case EchoKind::TwoPulse: return "two_pulse";
    case EchoKind::ThreePulse: return "three_pulse";
    case EchoKind::Afc: return "afc";
    case EchoKind::AfcControl: return "afc_control";
  }
  return "unknown";
}

std::optional<double> predict_echo_time(EchoKind kind, std::span<const double> timings) {
  auto need = [&](std::size_t n) {
    if (timings.size() != n) {
      throw std::invalid_argument(to_string(kind) + " needs " + std::to_string(n) + " timings");
    }
  };
  switch (kind) {
    case EchoKind::TwoPulse:
      need(2);
      if (timings[1] <= timings[0]) throw std::invalid_argument("need t1 < t2");
      return 2 * timings[1] - timings[0];
    case EchoKind::ThreePulse:
      need(3);
      if (!(timings[0] < timings[1] && timings[1] < timings[2])) {
        throw std::invalid_argument("need t1 < t2 < t3");
      }
      return timings[2] + (timings[1] - timings[0]);
    case EchoKind::Afc:
      need(2);
      if (timings[1] <= 0) throw std::invalid_argument("tau must be positive");
      return timings[0] + timings[1];
    case EchoKind::AfcControl: {
      need(4);
      const double t_in = timings[0], dt_b1 = timings[1], t_b2 = timings[2], tau = timings[3];
      if (dt_b1 <= 0 || tau <= 0 || t_b2 <= t_in + dt_b1) {
        throw std::invalid_argument("need dt_b1 > 0, tau > 0 and B2 after B1");
      }
      if (dt_b1 >= tau) return std::nullopt;
      return t_b2 + (tau - dt_b1);
    }
  }
  throw std::invalid_argument("unknown echo kind");
}

CombMetrics comb_metrics(std::span<const double> spectrum, std::span<const double> deltas,
                         double window) {
  if (spectrum.size() != deltas.size()) {
    throw std::invalid_argument("spectrum and detuning grid differ in length");
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (std::abs(deltas[i]) <= window / 2) {
      x.push_back(deltas[i]);
      y.push_back(spectrum[i]);
    }
  }
  const std::size_t m = x.size();
  if (m < 16) throw std::invalid_argument("comb window holds fewer than 16 grid points");
  const double step = (x.back() - x.front()) / static_cast<double>(m - 1);
  const double width = step * static_cast<double>(m);

  CombMetrics out;
  out.resolution = 2 * kPi / width;

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(m);
  std::vector<double> tapered(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2 * kPi * static_cast<double>(i) /
                                             static_cast<double>(m - 1));
    tapered[i] = (y[i] - mean) * hann;
  }

  // Magnitude of the transform on a delay grid 1/16 bin wide, from two bins
  // up to the Nyquist delay of the detuning grid.
  const double d_lo = 2 * out.resolution;
  const double d_hi = kPi / step;
  const double d_step = out.resolution / 16;
  std::vector<double> delays, mags;
  for (std::size_t k = 0; d_lo + static_cast<double>(k) * d_step <= d_hi; ++k) {
    const double d = d_lo + static_cast<double>(k) * d_step;
    Complex<double> acc(0, 0);
    for (std::size_t i = 0; i < m; ++i) acc += tapered[i] * std::polar(1.0, -x[i] * d);
    delays.push_back(d);
    mags.push_back(std::abs(acc));
  }
  if (mags.size() < 3) return out;
  const auto peak = static_cast<std::size_t>(std::max_element(mags.begin(), mags.end()) -
                                             mags.begin());
  out.fundamental = mags[peak];
  out.noise_floor = median(mags);
  const double scale = std::accumulate(y.begin(), y.end(), 0.0,
                                       [](double s, double v) { return s + std::abs(v); });
  if (out.fundamental < 3 * out.noise_floor || out.fundamental <= 1e-12 * scale) return out;

  double delay = delays[peak];
  if (peak > 0 && peak + 1 < mags.size()) {
    const double l = mags[peak - 1], c = mags[peak], r = mags[peak + 1];
    const double denom = l - 2 * c + r;
    if (denom != 0) delay += 0.5 * (l - r) / denom * d_step;
  }
  out.has_comb = true;
  out.delay = delay;
  out.spacing = 2 * kPi / delay;

  // Extrema per full grating period inside the window.
  double peaks = 0, valleys = 0;
  int periods = 0;
  for (double lo = x.front(); lo + out.spacing <= x.back() + step / 2; lo += out.spacing) {
    double hi_v = -std::numeric_limits<double>::infinity();
    double lo_v = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      if (x[i] >= lo && x[i] < lo + out.spacing) {
        hi_v = std::max(hi_v, y[i]);
        lo_v = std::min(lo_v, y[i]);
      }
    }
    peaks += hi_v;
    valleys += lo_v;
    ++periods;
  }
  if (periods > 0 && peaks + valleys > 0) {
    out.contrast = std::clamp((peaks - valleys) / (peaks + valleys), 0.0, 1.0);
  }
  return out;
}

double wrap_phase(double phi) {
  double w = std::remainder(phi, 2 * kPi);
  if (w <= -kPi) w += 2 * kPi;
  return w;
}

PhaseTrajectory phase_trajectory(const Trajectory& traj) {
  PhaseTrajectory out;
  out.times = traj.times;
  out.phase.reserve(traj.states.size());
  out.rho33.reserve(traj.states.size());
  double last = 0;
  bool have = false;
  for (const auto& rho : traj.states) {
    const Complex<double> z = rho(kLevel1, kLevel3);
    if (std::abs(z) >= 1e-12) {
      const double raw = std::arg(z);
      last = have ? last + wrap_phase(raw - last) : raw;
      have = true;
    }
    out.phase.push_back(last);
    out.rho33.push_back(rho(kLevel3, kLevel3).real());
  }
  return out;
}

LinearFit linearity_fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw std::invalid_argument("linear fit needs at least 3 points");
  const auto n = static_cast<double>(points.size());
  double sx = 0, sy = 0;
  for (const auto& [x, y] : points) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx <= 0) throw std::invalid_argument("degenerate fit: all x values coincide");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0;
  for (const auto& [x, y] : points) {
    const double r = y - (fit.intercept + fit.slope * x);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0 ? 1 - ss_res / syy : (ss_res == 0 ? 1.0 : 0.0);
  return fit;
}

}  // namespace lambda_echo
