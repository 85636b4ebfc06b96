#include "lambda_echo/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace lambda_echo {

SamplingPlan SamplingPlan::uniform(Nanos t_end, Nanos dt_out, double dt_pulse,
                                   const std::vector<Nanos>& extra) {
  if (dt_out <= 0) throw ValidationError("dt_out must be positive");
  if (t_end < 0) throw ValidationError("t_end must be non-negative");
  SamplingPlan plan;
  plan.dt_pulse = dt_pulse;
  plan.dt_out = dt_out;
  for (Nanos k = 0; k * dt_out <= t_end; ++k) plan.sample_times.push_back(k * dt_out);
  if (plan.sample_times.back() != t_end) plan.sample_times.push_back(t_end);
  for (Nanos t : extra) {
    if (t < 0 || t > t_end) {
      throw ValidationError("requested time " + std::to_string(t) +
                            " ns lies outside the simulated span [0, " +
                            std::to_string(t_end) + "] ns");
    }
    plan.sample_times.push_back(t);
  }
  std::sort(plan.sample_times.begin(), plan.sample_times.end());
  plan.sample_times.erase(std::unique(plan.sample_times.begin(), plan.sample_times.end()),
                          plan.sample_times.end());
  return plan;
}

void check_plan(const SamplingPlan& plan, const Sequence& seq) {
  if (!(plan.dt_pulse > 0)) throw ValidationError("dt_pulse must be positive");
  for (const Pulse& p : seq.pulses) {
    if (plan.dt_pulse > to_seconds(p.duration) / 50 * (1 + 1e-12)) {
      throw ValidationError("dt_pulse must not exceed 1/50 of every pulse duration");
    }
  }
  if (plan.sample_times.empty()) throw ValidationError("sampling plan has no sample times");
  if (plan.sample_times.front() < 0) throw ValidationError("negative sample time");
  for (std::size_t i = 1; i < plan.sample_times.size(); ++i) {
    if (plan.sample_times[i] <= plan.sample_times[i - 1]) {
      throw ValidationError("sample times must be strictly increasing");
    }
  }
  if (plan.sample_times.back() > seq.t_end) {
    throw ValidationError("sample times extend past the end of the sequence");
  }
}

namespace {

int step_count(double length, double dt) {
  return std::max(1, static_cast<int>(std::ceil(length / dt - 1e-9)));
}

DriveField drive_of(const Pulse& p) {
  DriveField d;
  (p.channel == Channel::P ? d.probe : d.control) = p.rabi();
  return d;
}

}  // namespace

void evolve_sequence(const DensityMatrix& rho0, double delta, const Sequence& seq,
                     const SystemParams& params, const SamplingPlan& plan,
                     const SampleObserver& observer, const EvolveOptions& options) {
  require_valid(seq);
  check_plan(plan, seq);
  if (!options.all_numeric && params.decay21 != 0) {
    throw ValidationError("decay21 != 0 needs all-numeric evolution");
  }
  const double dt_gap = options.dt_gap > 0 ? options.dt_gap : plan.dt_pulse;
  const auto& pulses = seq.pulses;

  std::optional<FreeEvolution<double>> sample_step;
  if (!options.all_numeric) sample_step.emplace(delta, params, to_seconds(plan.dt_out));

  DensityMatrix rho = rho0;
  Nanos now = 0;
  std::size_t next = 0;

  auto integrate = [&](const DriveField& drive, Nanos from, Nanos to, double dt_max) {
    const double length = to_seconds(to - from);
    const int n = step_count(length, dt_max);
    const double dt = length / n;
    for (int i = 0; i < n; ++i) rho = rk4_step(rho, delta, drive, params, dt);
  };

  auto advance = [&](Nanos target) {
    while (now < target) {
      while (next < pulses.size() && pulses[next].end() <= now) ++next;
      if (next < pulses.size() && pulses[next].start <= now) {
        const Pulse& p = pulses[next];
        const Nanos stop = std::min(target, p.end());
        integrate(drive_of(p), now, stop, plan.dt_pulse);
        now = stop;
        continue;
      }
      const Nanos stop = next < pulses.size() ? std::min(target, pulses[next].start) : target;
      if (options.all_numeric) {
        integrate(DriveField{}, now, stop, dt_gap);
      } else if (stop - now == plan.dt_out) {
        rho = sample_step->apply(rho);
      } else {
        rho = free_propagate(rho, delta, params, to_seconds(stop - now));
      }
      now = stop;
    }
  };

  for (std::size_t k = 0; k < plan.sample_times.size(); ++k) {
    advance(plan.sample_times[k]);
    observer(k, now, rho);
  }
}

Trajectory evolve_sequence(const DensityMatrix& rho0, double delta, const Sequence& seq,
                           const SystemParams& params, const SamplingPlan& plan,
                           const EvolveOptions& options) {
  Trajectory traj;
  traj.times.reserve(plan.sample_times.size());
  traj.states.reserve(plan.sample_times.size());
  evolve_sequence(
      rho0, delta, seq, params, plan,
      [&](std::size_t, Nanos t, const DensityMatrix& rho) {
        traj.times.push_back(t);
        traj.states.push_back(rho);
      },
      options);
  return traj;
}

}  // namespace lambda_echo
