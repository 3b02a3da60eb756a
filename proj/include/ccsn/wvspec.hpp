// Wigner-Ville spectrum of the optical record, from the analytic correlation
// kernel or from a finite ensemble, and folded-normal detection statistics.
//
// Discretization: at t = t_j the lag grid is tau_m = 2 m dt, |m| <= M, so
// that t +- tau/2 stays on the sampling grid. The transform is
//   S(t, W) = (2 dt / 2 pi) Sum_m w_m C(t, tau_m) e^{-i W tau_m}.
#pragma once

#include "ccsn/separable_kernel.hpp"
#include "ccsn/trajectory.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ccsn {

enum class Taper { none, hann };
enum class WvNormalization { raw, floor_normalized };
/// Shot-noise term of the analytic path: 1/(4 pi) as the continuous delta,
/// or 1/(2 pi) as seen by the discrete lag grid (what ensembles produce).
enum class DeltaConvention { continuous, discrete };

std::string to_string(WvNormalization n);

struct WvOptions {
  Taper taper = Taper::hann;
  WvNormalization normalization = WvNormalization::raw;
  DeltaConvention delta = DeltaConvention::discrete;
  std::optional<std::size_t> max_lag; // default: largest lag that fits
};

struct WvSlice {
  double t = 0.0;
  std::vector<double> omega;
  std::vector<double> value;
  WvNormalization normalization = WvNormalization::raw;
};

/// Raw-units floor of the shot term for a convention.
double shot_floor(DeltaConvention c);

double taper_weight(Taper taper, std::size_t m, std::size_t max_lag);

/// Transform of an even lag sequence c[m] = C(t, 2 m dt), m = 0..M. If `imag`
/// is given it receives the imaginary part of the full two-sided sum.
void lag_transform(std::span<const double> c, double dt, std::span<const double> omega, Taper taper,
                   std::span<double> out, std::span<double> imag = {});

/// Uniform grid [w0, w1] with `count` points.
std::vector<double> uniform_grid(double w0, double w1, std::size_t count);

/// Largest lag index with t +- m dt inside [0, (n - 1) dt].
std::size_t max_lag_index(std::size_t j, std::size_t n);

/// C(t_j, 2 m dt) for m = 0..M from the analytic kernel, without the shot term.
std::vector<double> kernel_lags(const RecordKernel &k, std::size_t j, double dt, std::size_t M);

/// Spectrum of the analytic kernel at t = j dt for a record of n samples.
WvSlice wv_from_kernel(const RecordKernel &k, std::size_t j, std::size_t n, double dt,
                       std::span<const double> omega, const WvOptions &opts = {});

/// Running per-trial statistics of the transform at fixed (t, omega grid).
class WvAccumulator {
public:
  WvAccumulator(std::size_t j, std::size_t n, double dt, std::vector<double> omega,
                WvOptions opts = {});
  void add(std::span<const double> y);
  std::size_t trials() const { return trials_; }
  WvSlice mean() const;
  /// Per-trial variance (unbiased) at each frequency, in the output normalization.
  std::vector<double> variance() const;
  /// Per-trial transform of one record (output normalization).
  std::vector<double> single(std::span<const double> y) const;

private:
  std::size_t j_, n_, lag_;
  double dt_;
  std::vector<double> omega_;
  WvOptions opts_;
  std::vector<double> cos_table_; // (M + 1) x omega, weighted
  std::vector<double> sum_, sum2_;
  std::vector<double> shift_; // first-trial values, to keep the variance sum well conditioned
  std::size_t trials_ = 0;
};

struct WvEnsembleResult {
  WvSlice mean;
  std::vector<double> variance;
  std::size_t trials = 0;
};

WvEnsembleResult wv_from_ensemble(const Ensemble &e, std::size_t j, std::span<const double> omega,
                                  const WvOptions &opts = {});

// ---------------------------------------------------------------------------
// Folded-normal detection

double folded_normal_pdf(double x, double mu, double sigma);
/// P(|X| <= x) for X ~ N(mu, sigma^2).
double folded_normal_cdf(double x, double mu, double sigma);

struct DetectionStat {
  double omega = 0.0;
  std::size_t trials = 0;
  double mu_sn = 0.0, sigma_sn = 0.0, mu_qg = 0.0, sigma_qg = 0.0;
  double threshold = 0.0;
  double false_alarm = 0.0;
  double false_dismissal = 0.0;
  /// True when |mean| under SN lies above QG, i.e. SN is favored above rho*.
  bool sn_above = true;
};

/// Balanced threshold between the folded normals of |mean of N trials| with
/// per-trial (mu, sigma). Throws if the two distributions coincide.
DetectionStat folded_detection(double mu_sn, double sigma_sn, double mu_qg, double sigma_qg,
                               std::size_t trials);

// ---------------------------------------------------------------------------
// Variable-limit Fourier identity

struct IdentitySides {
  double lhs = 0.0;           // Int dtau e^{-i W tau} Int_0^{t-|tau|/2} f
  double rhs_cosine_only = 0.0;   // (2 cos 2Wt / W) Im f~(2W)
  double rhs_corrected = 0.0; // (2 / W) Im[e^{2iWt} f~(2W)]
};

/// Both sides for f supported on [0, t]; composite Gauss-Legendre quadrature
/// with `panels` panels per integral. W must be nonzero.
IdentitySides sine_transform_identity(const std::function<double(double)> &f, double t, double omega,
                                  std::size_t panels = 2000);

} // namespace ccsn
