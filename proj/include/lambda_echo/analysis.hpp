#pragma once

// Post-processing of ensemble observables: echo finding, echo timing laws,
// spectral-grating metrics, single-atom phase and linear fits.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lambda_echo/ensemble.hpp"

namespace lambda_echo {

struct Interval {
  Nanos begin = 0;
  Nanos end = 0;
};

/// [start, end) of every pulse, in schedule order.
std::vector<Interval> pulse_intervals(const Sequence& seq);

struct EchoEvent {
  double t_peak = 0;     // s
  double amplitude = 0;  // coherence magnitude at the peak
  double fwhm = 0;       // s
  int window = 0;        // index of the quiet window the peak sits in
};

struct DetectOptions {
  Nanos guard = 500;  // excluded after each pulse end; at least 2x the pulse duration
  double median_factor = 5;
  double floor = 1e-6;
  // Peaks below this fraction of the strongest candidate peak in the record
  // are reported as weak rather than as echoes. 0 disables the check.
  double relative = 0.05;
};

struct EchoDetection {
  std::vector<EchoEvent> events;
  std::vector<EchoEvent> weak;  // above `threshold` but below the relative floor
  std::vector<Interval> windows;  // quiet windows, inclusive sample times
  double quiet_median = 0;
  double threshold = 0;
};

/// Local maxima of the coherence magnitude outside pulses (plus guard) that
/// exceed max(median_factor * quiet median, floor) and `relative` times the
/// largest such maximum. Maxima on a window edge are not peaks.
EchoDetection detect_echoes(const Observables& obs, const std::vector<Interval>& exclusions,
                            const DetectOptions& options = {});

enum class EchoKind { TwoPulse, ThreePulse, Afc, AfcControl };

std::string to_string(EchoKind k);

/// Echo timing laws, all times in seconds:
///   TwoPulse   (t1, t2)                -> 2 t2 - t1
///   ThreePulse (t1, t2, t3)            -> t3 + t2 - t1
///   Afc        (t_in, tau)             -> t_in + tau
///   AfcControl (t_in, dt_b1, t_b2, tau) -> t_b2 + tau - dt_b1, or nullopt
///                                          (no echo) when dt_b1 >= tau
std::optional<double> predict_echo_time(EchoKind kind, std::span<const double> timings);

struct CombMetrics {
  bool has_comb = false;
  double spacing = 0;     // rad/s
  double delay = 0;       // 2 pi / spacing, s
  double resolution = 0;  // delay width of one Fourier bin, s
  double contrast = 0;    // (peak - valley) / (peak + valley)
  double fundamental = 0;
  double noise_floor = 0;
};

/// Grating period from the strongest Fourier component of the mean-removed
/// spectrum over |delta| <= window/2, contrast from per-period extrema.
CombMetrics comb_metrics(std::span<const double> spectrum, std::span<const double> deltas,
                         double window);

struct PhaseTrajectory {
  std::vector<Nanos> times;
  std::vector<double> phase;  // unwrapped arg(rho13)
  std::vector<double> rho33;
};

/// Unwraps arg(rho13); samples with |rho13| < 1e-12 carry the last phase.
PhaseTrajectory phase_trajectory(const Trajectory& traj);

/// Phase difference folded into (-pi, pi].
double wrap_phase(double phi);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
};

LinearFit linearity_fit(std::span<const std::pair<double, double>> points);

}  // namespace lambda_echo
