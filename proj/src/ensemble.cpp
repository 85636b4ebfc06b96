#include "lambda_echo/ensemble.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

namespace lambda_echo {

namespace {

constexpr std::size_t kChunk = 16;

}  // namespace

DetuningGrid build_grid(double fwhm, double span, double step) {
  if (!(step > 0)) throw ValidationError("grid step must be positive");
  if (!(span > 0)) throw ValidationError("grid span must be positive");
  if (!(fwhm > 0)) throw ValidationError("inhomogeneous FWHM must be positive");
  const auto half = static_cast<long>(std::floor(span / step + 1e-9));
  const double sigma = fwhm / std::sqrt(8.0 * std::log(2.0));

  DetuningGrid g;
  g.span = span;
  g.step = step;
  g.fwhm = fwhm;
  g.deltas.reserve(2 * half + 1);
  for (long k = -half; k <= half; ++k) g.deltas.push_back(static_cast<double>(k) * step);
  g.weights.reserve(g.deltas.size());
  for (double d : g.deltas) g.weights.push_back(std::exp(-d * d / (2 * sigma * sigma)));
  const double total = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
  for (double& w : g.weights) w /= total;
  return g;
}

DetuningGrid single_atom_grid(double delta) {
  DetuningGrid g;
  g.deltas = {delta};
  g.weights = {1.0};
  return g;
}

DetuningGrid make_grid(const GridSpec& spec, double fwhm) {
  if (spec.single_atom_hz) return single_atom_grid(kTwoPi * *spec.single_atom_hz);
  return build_grid(fwhm, kTwoPi * spec.span_hz, kTwoPi * spec.step_hz);
}

Observables run_ensemble(const Sequence& seq, const DetuningGrid& grid,
                         const SystemParams& params, const SamplingPlan& plan,
                         const std::vector<Nanos>& snapshot_times,
                         const std::vector<double>& probe_deltas,
                         const EnsembleOptions& options) {
  if (grid.deltas.empty() || grid.deltas.size() != grid.weights.size()) {
    throw ValidationError("detuning grid is empty or inconsistent");
  }
  check_plan(plan, seq);
  const Nanos t_last = plan.sample_times.back();
  for (Nanos t : snapshot_times) {
    if (t < plan.sample_times.front() || t > t_last) {
      throw ValidationError("snapshot time " + std::to_string(t) +
                            " ns lies outside the simulated span");
    }
  }

  SamplingPlan merged = plan;
  merged.sample_times.insert(merged.sample_times.end(), snapshot_times.begin(),
                             snapshot_times.end());
  std::sort(merged.sample_times.begin(), merged.sample_times.end());
  merged.sample_times.erase(
      std::unique(merged.sample_times.begin(), merged.sample_times.end()),
      merged.sample_times.end());
  const std::size_t n_samples = merged.sample_times.size();

  // sample index -> snapshot slot, or -1
  std::vector<int> slot_of(n_samples, -1);
  std::vector<Nanos> snaps(snapshot_times);
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  for (std::size_t s = 0; s < snaps.size(); ++s) {
    const auto it = std::lower_bound(merged.sample_times.begin(), merged.sample_times.end(),
                                     snaps[s]);
    slot_of[static_cast<std::size_t>(it - merged.sample_times.begin())] = static_cast<int>(s);
  }

  const std::size_t n_atoms = grid.size();
  const std::size_t n_chunks = (n_atoms + kChunk - 1) / kChunk;
  std::vector<std::vector<Complex<double>>> partial(n_chunks);
  // [slot][level][atom]
  std::vector<std::array<std::vector<double>, 3>> pops(snaps.size());
  for (auto& lv : pops) {
    for (auto& v : lv) v.assign(n_atoms, 0.0);
  }
  std::vector<DensityReport<double>> final_report(n_atoms);

  const DensityMatrix rho0 = options.initial.value_or(ground_state<double>());

  auto run_chunk = [&](std::size_t c) {
    std::vector<Complex<double>> acc(n_samples, Complex<double>(0, 0));
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(n_atoms, lo + kChunk);
    for (std::size_t i = lo; i < hi; ++i) {
      const double w = grid.weights[i];
      evolve_sequence(
          rho0, grid.deltas[i], seq, params, merged,
          [&](std::size_t k, Nanos, const DensityMatrix& rho) {
            acc[k] += w * rho(kLevel1, kLevel3);
            if (const int s = slot_of[k]; s >= 0) {
              for (int l = 0; l < 3; ++l) pops[s][l][i] = rho(l, l).real();
            }
            if (k + 1 == n_samples) final_report[i] = validate_density(rho);
          },
          options.evolve);
    }
    partial[c] = std::move(acc);
  };

  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_chunks)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < n_chunks; c = next++) {
      try {
        run_chunk(c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_chunks;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  Observables obs;
  obs.times = merged.sample_times;
  obs.deltas = grid.deltas;
  obs.mean_coherence.assign(n_samples, Complex<double>(0, 0));
  for (const auto& acc : partial) {
    for (std::size_t k = 0; k < n_samples; ++k) obs.mean_coherence[k] += acc[k];
  }
  obs.absorption.reserve(n_samples);
  obs.coherence_magnitude.reserve(n_samples);
  for (const auto& z : obs.mean_coherence) {
    obs.absorption.push_back(z.imag());
    obs.coherence_magnitude.push_back(std::abs(z));
  }
  for (std::size_t s = 0; s < snaps.size(); ++s) {
    for (int l = 0; l < 3; ++l) obs.spectra[{l + 1, snaps[s]}] = std::move(pops[s][l]);
  }
  obs.worst_final = {0, 0, 1};
  for (const auto& r : final_report) {
    obs.worst_final.hermiticity_defect =
        std::max(obs.worst_final.hermiticity_defect, r.hermiticity_defect);
    obs.worst_final.trace_deviation = std::max(obs.worst_final.trace_deviation, r.trace_deviation);
    obs.worst_final.min_eigenvalue = std::min(obs.worst_final.min_eigenvalue, r.min_eigenvalue);
  }
  for (double d : probe_deltas) {
    obs.probes.push_back({d, evolve_sequence(rho0, d, seq, params, merged, options.evolve)});
  }
  return obs;
}

const std::vector<double>& population_spectrum(const Observables& obs, int level, Nanos time) {
  if (auto it = obs.spectra.find({level, time}); it != obs.spectra.end()) return it->second;
  std::string msg = "no population snapshot for level " + std::to_string(level) + " at " +
                    std::to_string(time) + " ns; available:";
  for (const auto& [key, _] : obs.spectra) {
    msg += " (" + std::to_string(key.level) + ", " + std::to_string(key.time) + " ns)";
  }
  throw std::out_of_range(msg);
}

}  // namespace lambda_echo
