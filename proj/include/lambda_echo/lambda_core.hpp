#pragma once

// Three-level Lambda atom: state, parameters, rotating-frame Hamiltonian and
// the Liouvillian right-hand side (coherent commutator plus decay).
//
// Level |1> and |2> are ground states, |3> is the shared excited state. Index
// mapping into the 3x3 matrices is |1> -> 0, |2> -> 1, |3> -> 2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace lambda_echo {

template <typename Scalar>
using Complex = std::complex<Scalar>;

template <typename Scalar>
using Matrix3c = Eigen::Matrix<Complex<Scalar>, 3, 3>;

template <typename Scalar>
using DensityMatrixT = Matrix3c<Scalar>;
using DensityMatrix = DensityMatrixT<double>;

inline constexpr int kLevel1 = 0;
inline constexpr int kLevel2 = 1;
inline constexpr int kLevel3 = 2;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Decay, dephasing and inhomogeneous width, all in rad/s.
///
/// `decay3j` are population rates out of |3> into |j>, `dephase_ij` are the
/// total off-diagonal decay rates applied directly to rho_ij.
template <typename Scalar = double>
struct SystemParamsT {
  Scalar decay31 = 0;
  Scalar decay32 = 0;
  Scalar decay21 = 0;
  Scalar dephase31 = 0;
  Scalar dephase32 = 0;
  Scalar dephase21 = 0;
  Scalar fwhm_inhom = 0;
  // Whether the Hz values these were loaded from were multiplied by 2*pi.
  bool rates_angular_input = true;

  Scalar excited_decay() const { return decay31 + decay32; }
};
using SystemParams = SystemParamsT<double>;

/// Builds parameters from rates given in Hz. Rates are scaled by 2*pi when
/// `angular` is set; the inhomogeneous width is a detuning and always is.
template <typename Scalar = double>
SystemParamsT<Scalar> params_from_hz(Scalar decay31_hz, Scalar decay32_hz, Scalar decay21_hz,
                                     Scalar dephase31_hz, Scalar dephase32_hz,
                                     Scalar dephase21_hz, Scalar fwhm_hz, bool angular = true) {
  const Scalar k = angular ? Scalar(kTwoPi) : Scalar(1);
  SystemParamsT<Scalar> p;
  p.decay31 = k * decay31_hz;
  p.decay32 = k * decay32_hz;
  p.decay21 = k * decay21_hz;
  p.dephase31 = k * dephase31_hz;
  p.dephase32 = k * dephase32_hz;
  p.dephase21 = k * dephase21_hz;
  p.fwhm_inhom = Scalar(kTwoPi) * fwhm_hz;
  p.rates_angular_input = angular;
  return p;
}

/// Rates and inhomogeneous width as entered in configuration files, in Hz.
struct RatesHz {
  double decay31 = 20e3;
  double decay32 = 20e3;
  double decay21 = 0;
  double dephase31 = 30e3;
  double dephase32 = 30e3;
  double dephase21 = 0;
  double fwhm = 680e3;

  SystemParamsT<double> to_params(bool angular) const {
    return params_from_hz<double>(decay31, decay32, decay21, dephase31, dephase32, dephase21,
                                  fwhm, angular);
  }
};

/// Rare-earth-like defaults: 20 kHz population decay, 30 kHz optical
/// dephasing, no spin relaxation, 680 kHz Gaussian inhomogeneous width.
inline SystemParamsT<double> default_params(bool angular = true) {
  return RatesHz{}.to_params(angular);
}

/// Throws on negative or non-finite rates. Returns soft warnings for
/// optical dephasing slower than half the excited-state decay.
template <typename Scalar>
std::vector<std::string> check_params(const SystemParamsT<Scalar>& p) {
  const Scalar rates[] = {p.decay31,   p.decay32,   p.decay21,   p.dephase31,
                          p.dephase32, p.dephase21, p.fwhm_inhom};
  for (Scalar r : rates) {
    if (!std::isfinite(r) || r < 0) {
      throw std::invalid_argument("system parameters must be finite and non-negative");
    }
  }
  std::vector<std::string> warnings;
  const Scalar half = p.excited_decay() / 2;
  if (p.dephase31 < half) {
    warnings.emplace_back("dephase31 below (decay31+decay32)/2: coherence outlives the lifetime limit");
  }
  if (p.dephase32 < half) {
    warnings.emplace_back("dephase32 below (decay31+decay32)/2: coherence outlives the lifetime limit");
  }
  return warnings;
}

/// Complex Rabi amplitudes (rad/s) on |1>-|3> (probe) and |2>-|3> (control).
template <typename Scalar = double>
struct DriveFieldT {
  Complex<Scalar> probe{0, 0};
  Complex<Scalar> control{0, 0};
};
using DriveField = DriveFieldT<double>;

template <typename Scalar>
DensityMatrixT<Scalar> ground_state() {
  DensityMatrixT<Scalar> rho = DensityMatrixT<Scalar>::Zero();
  rho(kLevel1, kLevel1) = 1;
  return rho;
}

/// H = -delta |3><3| - (Op |1><3| + h.c.)/2 - (Ob |2><3| + h.c.)/2, in rad/s.
template <typename Scalar>
Matrix3c<Scalar> hamiltonian(Scalar delta, const DriveFieldT<Scalar>& drive) {
  Matrix3c<Scalar> h = Matrix3c<Scalar>::Zero();
  h(kLevel3, kLevel3) = -delta;
  h(kLevel1, kLevel3) = -drive.probe / Scalar(2);
  h(kLevel3, kLevel1) = -std::conj(drive.probe) / Scalar(2);
  h(kLevel2, kLevel3) = -drive.control / Scalar(2);
  h(kLevel3, kLevel2) = -std::conj(drive.control) / Scalar(2);
  return h;
}

/// Averages a matrix with its conjugate transpose.
template <typename Derived>
auto hermitize(const Eigen::MatrixBase<Derived>& m) {
  using Matrix = typename Derived::PlainObject;
  Matrix out = (m + m.adjoint()) / typename Derived::RealScalar(2);
  return out;
}

/// d(rho)/dt = -i[H, rho] + D(rho). Trace preserving: everything leaving |3>
/// lands in |1> or |2>, and |2> relaxes into |1>.
template <typename Scalar>
DensityMatrixT<Scalar> liouville_rhs(const DensityMatrixT<Scalar>& rho, Scalar delta,
                                     const DriveFieldT<Scalar>& drive,
                                     const SystemParamsT<Scalar>& params) {
  const Matrix3c<Scalar> h = hamiltonian(delta, drive);
  const Complex<Scalar> minus_i(0, -1);
  DensityMatrixT<Scalar> d = minus_i * (h * rho - rho * h);

  const Complex<Scalar> p33 = rho(kLevel3, kLevel3);
  const Complex<Scalar> p22 = rho(kLevel2, kLevel2);
  d(kLevel3, kLevel3) -= params.excited_decay() * p33;
  d(kLevel1, kLevel1) += params.decay31 * p33 + params.decay21 * p22;
  d(kLevel2, kLevel2) += params.decay32 * p33 - params.decay21 * p22;

  d(kLevel1, kLevel3) -= params.dephase31 * rho(kLevel1, kLevel3);
  d(kLevel3, kLevel1) -= params.dephase31 * rho(kLevel3, kLevel1);
  d(kLevel2, kLevel3) -= params.dephase32 * rho(kLevel2, kLevel3);
  d(kLevel3, kLevel2) -= params.dephase32 * rho(kLevel3, kLevel2);
  d(kLevel1, kLevel2) -= params.dephase21 * rho(kLevel1, kLevel2);
  d(kLevel2, kLevel1) -= params.dephase21 * rho(kLevel2, kLevel1);
  return hermitize(d);
}

template <typename Scalar = double>
struct DensityReport {
  Scalar hermiticity_defect = 0;
  Scalar trace_deviation = 0;
  Scalar min_eigenvalue = 0;
};

/// Pure diagnostic; thresholds are the caller's business.
template <typename Scalar>
DensityReport<Scalar> validate_density(const DensityMatrixT<Scalar>& rho) {
  DensityReport<Scalar> r;
  r.hermiticity_defect = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  r.trace_deviation = std::abs(rho.trace() - Complex<Scalar>(1, 0));
  Eigen::SelfAdjointEigenSolver<Matrix3c<Scalar>> solver(hermitize(rho),
                                                         Eigen::EigenvaluesOnly);
  r.min_eigenvalue = solver.eigenvalues().minCoeff();
  return r;
}

}  // namespace lambda_echo
