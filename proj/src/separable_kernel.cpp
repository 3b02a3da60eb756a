#include "ccsn/separable_kernel.hpp"

#include <cmath>

namespace ccsn {

namespace {
// Index of (a, b), a <= b, in the packed upper triangle of a 4x4 matrix.
constexpr int packed(int a, int b) {
  if (a > b) std::swap(a, b);
  return a * 4 - a * (a - 1) / 2 + (b - a);
}
} // namespace

RecordKernel::RecordKernel(const DerivedParams &d, const MomentTrajectory &moments,
                           KernelOptions opts)
    : d_(d), m_(moments), opts_(opts) {
  if (m_.model() != d.sys.model || m_.prescription() != d.sys.prescription)
    throw std::invalid_argument("RecordKernel: moment trajectory tags do not match parameters");
  if (std::abs(m_.t_begin()) > 1e-12)
    throw std::invalid_argument("RecordKernel: moment trajectory must start at t = 0");
  psi_ = opts_.phase == PhasePlacement::derived ? d.loss_angle : d.omega_mc * d.loss_angle;
  const double ls2 = d.lambda_star2();
  prefactor_ = ls2 * ls2 / (2.0 * d.omega_q * d.omega_q);
  thermal_on_ = d.sys.prescription == Prescription::classical;
  thermal_prefactor_ =
      ls2 * d.sys.omega_m * d.sys.gamma_m / (2.0 * d.omega_mc * d.omega_mc) * d.coth_m;

  const std::size_t n = m_.size();
  cumulative_.assign(n, {});
  linear_.assign(n, {});
  const double g = d.sys.gamma_m;
  std::array<double, 10> prev{};
  std::array<double, 4> prev_lin{};
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = basis(i);
    const double e = std::exp(g * m_[i].t);
    const double e_half = std::exp(0.5 * g * m_[i].t);
    std::array<double, 10> cur{};
    std::array<double, 4> cur_lin{};
    for (int a = 0; a < 4; ++a) {
      cur_lin[a] = e_half * f[a];
      for (int b = a; b < 4; ++b) cur[packed(a, b)] = e * f[a] * f[b];
    }
    if (i > 0) {
      const double h = m_[i].t - m_[i - 1].t;
      for (int k = 0; k < 10; ++k)
        cumulative_[i][k] = cumulative_[i - 1][k] + 0.5 * h * (prev[k] + cur[k]);
      for (int k = 0; k < 4; ++k)
        linear_[i][k] = linear_[i - 1][k] + 0.5 * h * (prev_lin[k] + cur_lin[k]);
    }
    prev = cur;
    prev_lin = cur_lin;
  }
}

std::array<double, 4> RecordKernel::basis(std::size_t node) const {
  const MomentState &s = m_[node];
  const double c = std::cos(d_.omega_mc * s.t), sn = std::sin(d_.omega_mc * s.t);
  return {s.h1 * c, s.h1 * sn, s.h2 * c, s.h2 * sn};
}

std::array<double, 4> RecordKernel::coefficients(double t) const {
  const double w = d_.omega_mc;
  const double a = d_.sys.omega_m / w;
  const double b = opts_.h2_factor * d_.omega_q / w;
  return {a * std::cos(w * t + psi_), a * std::sin(w * t + psi_), b * std::sin(w * t),
          -b * std::cos(w * t)};
}

double RecordKernel::measurement(double t1, double t2) const {
  const double lo = std::min(t1, t2);
  if (lo <= 0.0) return 0.0;
  const auto &G = cumulative_[m_.index_of(lo)];
  const auto c1 = coefficients(t1), c2 = coefficients(t2);
  double acc = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) acc += c1[a] * G[packed(a, b)] * c2[b];
  return prefactor_ * std::exp(-0.5 * d_.sys.gamma_m * (t1 + t2)) * acc;
}

double RecordKernel::measurement_direct(double t1, double t2) const {
  const double lo = std::min(t1, t2);
  if (lo <= 0.0) return 0.0;
  const std::size_t last = m_.index_of(lo);
  const double w = d_.omega_mc, g = d_.sys.gamma_m;
  const double a = d_.sys.omega_m / w;
  const double b = opts_.h2_factor * d_.omega_q / w;
  auto integrand = [&](std::size_t i) {
    const MomentState &s = m_[i];
    const double A1 = a * s.h1 * std::cos(w * (s.t - t1) - psi_) - b * s.h2 * std::sin(w * (s.t - t1));
    const double A2 = a * s.h1 * std::cos(w * (s.t - t2) - psi_) - b * s.h2 * std::sin(w * (s.t - t2));
    return std::exp(g * (2.0 * s.t - t1 - t2) / 2.0) * A1 * A2;
  };
  double acc = 0.0;
  for (std::size_t i = 1; i <= last; ++i)
    acc += 0.5 * (m_[i].t - m_[i - 1].t) * (integrand(i - 1) + integrand(i));
  return prefactor_ * acc;
}

double RecordKernel::thermal(double t1, double t2) const {
  if (!thermal_on_) return 0.0;
  const double g = d_.sys.gamma_m, w = d_.omega_mc, wm = d_.sys.omega_m, phi = d_.loss_angle;
  const double dlt = t1 - t2, sum = t1 + t2;
  const double c = std::cos(w * dlt) / g;
  // (1 - e^{-g (sum - |dlt|)/2}) c without cancellation at small g t.
  const double near = std::exp(-0.5 * g * std::abs(dlt));
  const double decay = -std::expm1(-0.5 * g * (sum - std::abs(dlt)));
  const double value = near * (c * decay + std::sin(w * std::abs(dlt) + phi) / (2.0 * wm)) -
                       std::exp(-0.5 * g * sum) * std::sin(w * sum + phi) / (2.0 * wm);
  return thermal_prefactor_ * value;
}

double RecordKernel::cross(double t1, double t2) const {
  const double lo = std::min(t1, t2);
  const double lag = std::abs(t1 - t2);
  if (lo < 0.0) return 0.0;
  if (lag == 0.0 && opts_.cross_diagonal == CrossDiagonal::forward_ito) return 0.0;
  if (opts_.record_dt > 0.0 && lag > 0.0) {
    // x(t_late) responds to the kicks inside [lo, lo + record_dt]; average
    // the response over the interval, as the shot sample does.
    const double hi = std::max(t1, t2);
    const double end = std::min(lo + opts_.record_dt, hi);
    const auto &a = linear_[m_.index_of(lo)];
    const auto &b = linear_[m_.index_of(end)];
    const auto c = coefficients(hi);
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) acc += c[k] * (b[k] - a[k]);
    return d_.lambda_star2() / (2.0 * d_.omega_q) * std::exp(-0.5 * d_.sys.gamma_m * hi) * acc /
           opts_.record_dt;
  }
  const MomentState s = m_.at(lo);
  const double w = d_.omega_mc;
  return d_.lambda_star2() / (2.0 * d_.omega_q) * std::exp(-0.5 * d_.sys.gamma_m * lag) *
         (d_.sys.omega_m / w * s.h1 * std::cos(w * lag + d_.loss_angle) +
          d_.omega_q / w * s.h2 * std::sin(w * lag));
}

} // namespace ccsn
