// Two-time correlation of the optical record, split into the measurement
// back-action block, the thermal block and the position/shot-noise cross term.
//
// The back-action block is a double-oscillatory integral
//   K(t1, t2) = L*^4 / (2 wq^2) Int_0^min(t1,t2) ds e^{g (2s - t1 - t2)/2} A_t1(s) A_t2(s)
// with A_t(s) = (wm/wmc) h1(s) cos(wmc (s - t) - psi) - (wq/wmc) h2(s) sin(wmc (s - t)).
// Expanding the cosines over t makes A_t(s) = c(t) . f(s) with four basis
// functions of s only, so after one pass of cumulative integrals every entry
// is a 4x4 bilinear form.
#pragma once

#include "ccsn/moments.hpp"
#include "ccsn/params.hpp"

#include <array>
#include <vector>

namespace ccsn {

/// Where the loss angle enters the back-action kernel: outside the time
/// argument (from the mean equations) or multiplied by wmc inside it, the
/// alternative form of the correlation block.
enum class PhasePlacement { derived, inside };

/// Value of the cross term at equal times: zero for the forward-Ito sampling
/// of the simulator, or the symmetric continuous-time form.
enum class CrossDiagonal { forward_ito, symmetric };

struct KernelOptions {
  PhasePlacement phase = PhasePlacement::derived;
  double h2_factor = 1.0; // 2 gives the alternative covariance-block form
  CrossDiagonal cross_diagonal = CrossDiagonal::forward_ito;
  /// > 0: the cross term pairs x(t_late) with the shot increment over
  /// [t_early, t_early + record_dt] exactly instead of at its left point.
  double record_dt = 0.0;
};

class RecordKernel {
public:
  /// The thermal block is present only for the classical prescription.
  RecordKernel(const DerivedParams &d, const MomentTrajectory &moments, KernelOptions opts = {});

  /// alpha^2 Sigma^m; both times must lie on the moment grid.
  double measurement(double t1, double t2) const;
  /// Same quantity by direct trapezoidal quadrature (O(n) per entry).
  double measurement_direct(double t1, double t2) const;
  double thermal(double t1, double t2) const;
  /// alpha Sigma_xdW between the record samples at t1 and t2.
  double cross(double t1, double t2) const;
  /// Sum of the three blocks (no shot term).
  double total(double t1, double t2) const {
    return measurement(t1, t2) + thermal(t1, t2) + cross(t1, t2);
  }

  const DerivedParams &params() const { return d_; }
  const MomentTrajectory &moments() const { return m_; }
  const KernelOptions &options() const { return opts_; }

private:
  std::array<double, 4> coefficients(double t) const;
  std::array<double, 4> basis(std::size_t node) const;

  DerivedParams d_;
  MomentTrajectory m_;
  KernelOptions opts_;
  double psi_ = 0.0;
  double prefactor_ = 0.0;
  bool thermal_on_ = true;
  double thermal_prefactor_ = 0.0;
  // Cumulative integrals G_ab(s_i) = Int_0^{s_i} e^{g s} f_a f_b, upper triangle.
  std::vector<std::array<double, 10>> cumulative_;
  // Linear cumulative integrals H_a(s_i) = Int_0^{s_i} e^{g s / 2} f_a.
  std::vector<std::array<double, 4>> linear_;
};

} // namespace ccsn
