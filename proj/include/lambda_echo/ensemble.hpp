#pragma once

// Inhomogeneously broadened ensemble: a uniform detuning grid with Gaussian
// weights, run atom by atom and reduced in fixed grid order.

#include <compare>
#include <map>
#include <optional>
#include <vector>

#include "lambda_echo/propagator.hpp"

namespace lambda_echo {

/// Grid geometry in Hz (detunings are 2 pi times these). `span_hz` is the
/// half-width. A set `single_atom_hz` replaces the grid with one atom.
struct GridSpec {
  double span_hz = 1.5e6;
  double step_hz = 2e3;
  std::optional<double> single_atom_hz;
};

struct DetuningGrid {
  std::vector<double> deltas;   // rad/s, ascending, symmetric about 0
  std::vector<double> weights;  // sum to 1
  double span = 0;
  double step = 0;
  double fwhm = 0;

  std::size_t size() const { return deltas.size(); }
};

/// Gaussian weights exp(-d^2 / 2 sigma^2), sigma = fwhm / sqrt(8 ln 2).
DetuningGrid build_grid(double fwhm, double span, double step);
DetuningGrid single_atom_grid(double delta);
DetuningGrid make_grid(const GridSpec& spec, double fwhm);

struct SpectrumKey {
  int level = 1;  // 1, 2 or 3
  Nanos time = 0;
  auto operator<=>(const SpectrumKey&) const = default;
};

struct ProbeTrajectory {
  double delta = 0;
  Trajectory trajectory;
};

struct Observables {
  std::vector<Nanos> times;
  // Weighted sum of rho13 over the grid; absorption is its imaginary part.
  std::vector<Complex<double>> mean_coherence;
  std::vector<double> absorption;
  std::vector<double> coherence_magnitude;
  std::vector<double> deltas;
  std::map<SpectrumKey, std::vector<double>> spectra;
  std::vector<ProbeTrajectory> probes;
  // Worst case over atoms of the final-state diagnostics.
  DensityReport<double> worst_final;
};

struct EnsembleOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  EvolveOptions evolve;
  std::optional<DensityMatrix> initial;  // default: everything in |1>
};

/// Atoms are processed in fixed-size chunks whose partial sums are combined
/// in chunk order, so results do not depend on the thread count.
Observables run_ensemble(const Sequence& seq, const DetuningGrid& grid,
                         const SystemParams& params, const SamplingPlan& plan,
                         const std::vector<Nanos>& snapshot_times,
                         const std::vector<double>& probe_deltas,
                         const EnsembleOptions& options = {});

/// rho_ll(delta) at a captured snapshot, index-aligned with the grid.
const std::vector<double>& population_spectrum(const Observables& obs, int level, Nanos time);

}  // namespace lambda_echo
