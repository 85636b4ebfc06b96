#pragma once

// Single-atom time evolution: RK4 while a field is on, exact exponentials in
// the field-free gaps.

#include <functional>
#include <vector>

#include "lambda_echo/lambda_core.hpp"
#include "lambda_echo/sequences.hpp"

namespace lambda_echo {

/// Classical RK4 step. The result is re-symmetrized; trace is left alone so
/// drift stays visible.
template <typename Scalar>
DensityMatrixT<Scalar> rk4_step(const DensityMatrixT<Scalar>& rho, Scalar delta,
                                const DriveFieldT<Scalar>& drive,
                                const SystemParamsT<Scalar>& params, Scalar dt) {
  const auto k1 = liouville_rhs(rho, delta, drive, params);
  const auto k2 = liouville_rhs<Scalar>(rho + (dt / 2) * k1, delta, drive, params);
  const auto k3 = liouville_rhs<Scalar>(rho + (dt / 2) * k2, delta, drive, params);
  const auto k4 = liouville_rhs<Scalar>(rho + dt * k3, delta, drive, params);
  return hermitize(rho + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4));
}

/// Exact zero-drive propagator over a fixed interval. Requires decay21 == 0.
template <typename Scalar>
class FreeEvolution {
 public:
  FreeEvolution(Scalar delta, const SystemParamsT<Scalar>& params, Scalar dt) {
    if (params.decay21 != 0) {
      throw std::invalid_argument("closed-form free evolution requires decay21 == 0");
    }
    if (!(dt >= 0)) throw std::invalid_argument("free evolution interval must be >= 0");
    const Scalar g3 = params.excited_decay();
    keep33_ = std::exp(-g3 * dt);
    if (g3 > 0) {
      const Scalar lost = -std::expm1(-g3 * dt);
      to1_ = params.decay31 / g3 * lost;
      to2_ = params.decay32 / g3 * lost;
    }
    f13_ = std::exp(Complex<Scalar>(-params.dephase31 * dt, -delta * dt));
    f23_ = std::exp(Complex<Scalar>(-params.dephase32 * dt, -delta * dt));
    f12_ = std::exp(-params.dephase21 * dt);
  }

  DensityMatrixT<Scalar> apply(const DensityMatrixT<Scalar>& rho) const {
    DensityMatrixT<Scalar> out;
    const Scalar p33 = rho(kLevel3, kLevel3).real();
    out(kLevel1, kLevel1) = rho(kLevel1, kLevel1).real() + to1_ * p33;
    out(kLevel2, kLevel2) = rho(kLevel2, kLevel2).real() + to2_ * p33;
    out(kLevel3, kLevel3) = keep33_ * p33;
    out(kLevel1, kLevel3) = f13_ * rho(kLevel1, kLevel3);
    out(kLevel2, kLevel3) = f23_ * rho(kLevel2, kLevel3);
    out(kLevel1, kLevel2) = f12_ * rho(kLevel1, kLevel2);
    out(kLevel3, kLevel1) = std::conj(out(kLevel1, kLevel3));
    out(kLevel3, kLevel2) = std::conj(out(kLevel2, kLevel3));
    out(kLevel2, kLevel1) = std::conj(out(kLevel1, kLevel2));
    return out;
  }

 private:
  Scalar keep33_ = 1;
  Scalar to1_ = 0;
  Scalar to2_ = 0;
  Complex<Scalar> f13_{1, 0};
  Complex<Scalar> f23_{1, 0};
  Scalar f12_ = 1;
};

template <typename Scalar>
DensityMatrixT<Scalar> free_propagate(const DensityMatrixT<Scalar>& rho, Scalar delta,
                                      const SystemParamsT<Scalar>& params, Scalar dt) {
  return FreeEvolution<Scalar>(delta, params, dt).apply(rho);
}

/// Where the trajectory is recorded and how finely pulses are integrated.
struct SamplingPlan {
  double dt_pulse = 0.5e-9;  // s
  Nanos dt_out = 50;
  std::vector<Nanos> sample_times;  // strictly increasing

  /// Uniform samples 0, dt_out, ..., t_end merged with `extra` times.
  static SamplingPlan uniform(Nanos t_end, Nanos dt_out, double dt_pulse,
                              const std::vector<Nanos>& extra = {});
};

/// Throws ValidationError when the plan is inconsistent with `seq`.
void check_plan(const SamplingPlan& plan, const Sequence& seq);

struct EvolveOptions {
  // Step through gaps with RK4 instead of the closed form (needed when
  // decay21 != 0, and used to cross-check the closed form).
  bool all_numeric = false;
  // Gap step for all_numeric mode; 0 means plan.dt_pulse.
  double dt_gap = 0;
};

struct Trajectory {
  std::vector<Nanos> times;
  std::vector<DensityMatrix> states;
};

/// Called once per sample time, in order, with the sample index.
using SampleObserver = std::function<void(std::size_t, Nanos, const DensityMatrix&)>;

void evolve_sequence(const DensityMatrix& rho0, double delta, const Sequence& seq,
                     const SystemParams& params, const SamplingPlan& plan,
                     const SampleObserver& observer, const EvolveOptions& options = {});

Trajectory evolve_sequence(const DensityMatrix& rho0, double delta, const Sequence& seq,
                           const SystemParams& params, const SamplingPlan& plan,
                           const EvolveOptions& options = {});

}  // namespace lambda_echo
