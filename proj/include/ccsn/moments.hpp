// Conditional second moments of the measured test mass: Riccati dynamics for
// both gravity models and both thermal prescriptions, steady states,
// linearization, the squeezing-ellipse parameterization and the stationary
// spectrum closed forms.
//
// States are dimensionless: h1 = Vxx / Vxx_vac, h2 = 2 Vxp / hbar,
// h3 = Vpp / Vpp_vac with zero-point scales taken at omega_q. Time is in
// seconds.
#pragma once

#include "ccsn/params.hpp"

#include <array>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccsn {

/// Numerical failure (Heisenberg violation, factorization, non-convergence).
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct MomentState {
  double t = 0.0;
  double h1 = 1.0;
  double h2 = 0.0;
  double h3 = 1.0;

  /// h1 h3 - h2^2; >= 1 for physical states.
  double uncertainty_product() const { return h1 * h3 - h2 * h2; }
};

struct DimensionalMoments {
  double vxx = 0.0;
  double vxp = 0.0;
  double vpp = 0.0;
};

DimensionalMoments to_dimensional(const MomentState &s, const ScalingConstants &k);
MomentState from_dimensional(const DimensionalMoments &v, const ScalingConstants &k, double t = 0.0);

struct MomentRates {
  double dh1 = 0.0;
  double dh2 = 0.0;
  double dh3 = 0.0;
};

MomentRates riccati_rhs(const MomentState &s, const DerivedParams &d, Prescription pr);

/// Uniformly gridded moment history.
class MomentTrajectory {
public:
  MomentTrajectory() = default;
  MomentTrajectory(double dt, std::vector<MomentState> states, GravityModel model,
                   Prescription prescription);

  std::size_t size() const { return states_.size(); }
  double dt() const { return dt_; }
  double t_begin() const { return states_.front().t; }
  double t_end() const { return states_.back().t; }
  const MomentState &operator[](std::size_t i) const { return states_[i]; }
  const std::vector<MomentState> &states() const { return states_; }
  GravityModel model() const { return model_; }
  Prescription prescription() const { return prescription_; }

  /// Six-point Lagrange interpolation; exact on grid nodes.
  MomentState at(double t) const;
  /// Index of grid node at time t; throws if t is not on the grid.
  std::size_t index_of(double t) const;

private:
  double dt_ = 0.0;
  std::vector<MomentState> states_;
  GravityModel model_ = GravityModel::sn;
  Prescription prescription_ = Prescription::classical;
};

/// Default fixed RK4 step, 200 steps per covariance oscillation 2 pi / omega_q.
double default_moment_step(const DerivedParams &d);
/// Largest step accepted by integrate_moments.
double max_moment_step(const DerivedParams &d);
/// Step bound from the measurement stiffness of a start state: strongly
/// squeezed or large-beta states relax at ~2 omega_q Lambda_q^2 max(h1, h3).
double stiff_moment_step(const DerivedParams &d, const MomentState &initial);
/// Moment step that divides `sampling_dt` and respects the default bound.
double moment_step_for_sampling(const DerivedParams &d, double sampling_dt);
/// Same, also respecting the stiffness bound of `initial`.
double moment_step_for_sampling(const DerivedParams &d, double sampling_dt,
                                const MomentState &initial);

/// Fixed-step classical RK4 from `initial` over [initial.t, initial.t + t_obs].
/// Every `stride`-th state is stored, and the final state always is.
MomentTrajectory integrate_moments(const MomentState &initial, const DerivedParams &d,
                                   Prescription pr, double t_obs, double dt,
                                   std::size_t stride = 1);

MomentState steady_state_classical(const DerivedParams &d);

struct QuantumSteadyState {
  MomentState state;
  double residual = 0.0;
  int iterations = 0;
};

/// Fixed point of the quantum-prescription Riccati system.
QuantumSteadyState steady_state_quantum(const DerivedParams &d);

/// Largest |rate| / (omega_q * term scale) over the three equations.
double scaled_residual(const MomentState &s, const DerivedParams &d, Prescription pr);

/// Roots (rad/s) of the linearized third-order equation for delta h1,
/// the real root first.
std::array<std::complex<double>, 3> linearized_roots(const DerivedParams &d);

struct EffectiveDecay {
  std::vector<std::pair<int, double>> rates; // (n, gamma_eff(n))
  double first_peak_time = 0.0;
  std::string diagnostic;
};

/// Peak-to-peak log-ratio decay rate of h1 - h1_eq sampled every pi / omega_q
/// from the first interpolated maximum.
EffectiveDecay effective_decay_rate(const MomentTrajectory &traj, double omega_q, double h1_eq);

// ---------------------------------------------------------------------------
// Squeezing ellipse

struct EllipseParams {
  double r = 0.0;     // squeezing degree
  double theta = 0.0; // squeezing angle
  double beta = 1.0;  // scale factor
};

struct EllipseRates {
  double dr = 0.0;
  double dtheta = 0.0;
  double dbeta = 0.0;
};

MomentState ellipse_to_moments(const EllipseParams &e, double t = 0.0);
/// Inverse map; theta is returned in [0, pi). Throws std::invalid_argument
/// when h1 h3 - h2^2 < 1.
EllipseParams moments_to_ellipse(const MomentState &s);

EllipseRates ellipse_rhs(const EllipseParams &e, const DerivedParams &d);

/// RK4 on (r, theta, beta), mapped back to (h1, h2, h3) on the output grid.
MomentTrajectory integrate_ellipse(const EllipseParams &e0, const DerivedParams &d, double t_obs,
                                   double dt);

/// Left side of the rotation condition, Lambda_q^2 e^{-2r} (1 + beta^2) / (2 beta).
double rotation_ratio(const EllipseParams &e, const DerivedParams &d);

struct Case2Solution {
  double r = 0.0;
  double beta = 0.0;
  double g = 0.0;
  double h1 = 0.0;
  double h1_max = 0.0;
};

inline constexpr double kRotationRatioLimit = 0.1;

/// Weak-measurement approximate solution for a strongly squeezed, large-beta
/// start. Throws std::invalid_argument if the rotation ratio reaches 0.1 on
/// [0, t].
Case2Solution analytic_case2(const EllipseParams &e0, const DerivedParams &d, double t);

/// Minor/major axis decibel scale of the uncertainty ellipse.
double sqz_db(double h1, double h2, double h3);
inline double sqz_db(const MomentState &s) { return sqz_db(s.h1, s.h2, s.h3); }

/// Squeezed thermal state with the given decibel level and scale factor.
EllipseParams squeezed_thermal(double db, double beta, double theta0 = M_PI / 2);
/// Squeezed thermal state whose minor quadrature variance equals
/// `min_variance` zero-point units.
EllipseParams squeezed_thermal_min_variance(double db, double min_variance = 1e3,
                                            double theta0 = M_PI / 2);

// ---------------------------------------------------------------------------
// Stationary spectra

/// Steady-state PSD of the output record at angular frequency omega
/// (shot noise = 1).
double stationary_psd(const DerivedParams &d, Prescription pr, double omega);

/// S(omega_m) in dB. Classical: the closed-form weak-coupling expression with
/// lambda_th. Quantum: ratio of the SN and QG spectra.
double log_ratio(const DerivedParams &d, Prescription pr);
/// -10 log10 of the PSD ratio at omega_m for SN vs QG at the same parameters.
double log_ratio_from_psd(const DerivedParams &d, Prescription pr);

struct LogRatioOptimum {
  double value_db = 0.0;
  double lambda_q = 0.0;
};
/// Quantum-prescription maximum of S(omega_m) and the coupling that attains it.
LogRatioOptimum max_log_ratio_quantum(const DerivedParams &d);

/// Peak location sqrt(omega^2 - lambda^2) of the damped-sine spectrum, if a
/// peak exists (lambda < omega).
std::optional<double> peak_exists(double lambda_decay, double omega_osc);

} // namespace ccsn
