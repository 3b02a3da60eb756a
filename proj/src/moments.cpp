#include "ccsn/moments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ccsn {

using namespace constants;

DimensionalMoments to_dimensional(const MomentState &s, const ScalingConstants &k) {
  return {s.h1 * k.vxx_vac, s.h2 * k.vxp_unit, s.h3 * k.vpp_vac};
}

MomentState from_dimensional(const DimensionalMoments &v, const ScalingConstants &k, double t) {
  return {t, v.vxx / k.vxx_vac, v.vxp / k.vxp_unit, v.vpp / k.vpp_vac};
}

MomentRates riccati_rhs(const MomentState &s, const DerivedParams &d, Prescription pr) {
  const double w = d.omega_q;
  const double l2 = d.lambda_q2();
  MomentRates r;
  r.dh1 = w * (2.0 * s.h2 - l2 * s.h1 * s.h1);
  r.dh2 = w * (s.h3 - s.h1 - l2 * s.h1 * s.h2);
  r.dh3 = w * (-2.0 * s.h2 + l2 * (1.0 - s.h2 * s.h2));
  if (pr == Prescription::quantum) {
    const double g = d.sys.gamma_m;
    r.dh2 -= g * s.h2;
    r.dh3 += -2.0 * g * s.h3 + 2.0 * g * d.coth_q;
  }
  return r;
}

// ---------------------------------------------------------------------------
// MomentTrajectory

MomentTrajectory::MomentTrajectory(double dt, std::vector<MomentState> states, GravityModel model,
                                   Prescription prescription)
    : dt_(dt), states_(std::move(states)), model_(model), prescription_(prescription) {
  if (states_.empty()) throw std::invalid_argument("MomentTrajectory: no states");
  if (states_.size() > 1 && !(dt_ > 0.0))
    throw std::invalid_argument("MomentTrajectory: grid step must be positive");
}

std::size_t MomentTrajectory::index_of(double t) const {
  const double x = (t - t_begin()) / dt_;
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-6 || k < 0 || k >= static_cast<double>(states_.size()))
    throw std::out_of_range("time " + std::to_string(t) + " is not a node of the moment grid");
  return static_cast<std::size_t>(k);
}

MomentState MomentTrajectory::at(double t) const {
  const std::size_t n = states_.size();
  if (n == 1) return states_[0];
  const double x = (t - t_begin()) / dt_;
  if (x < -1e-9 || x > static_cast<double>(n - 1) + 1e-9)
    throw std::out_of_range("time " + std::to_string(t) + " outside the moment trajectory");
  const double k = std::round(x);
  if (std::abs(x - k) < 1e-12) {
    MomentState s = states_[static_cast<std::size_t>(k)];
    s.t = t;
    return s;
  }
  const std::size_t points = std::min<std::size_t>(6, n);
  const long base = static_cast<long>(std::floor(x)) - static_cast<long>(points / 2) + 1;
  const std::size_t start =
      static_cast<std::size_t>(std::clamp<long>(base, 0, static_cast<long>(n - points)));
  MomentState out{t, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < points; ++i) {
    double w = 1.0;
    const double xi = static_cast<double>(start + i);
    for (std::size_t j = 0; j < points; ++j) {
      if (j == i) continue;
      const double xj = static_cast<double>(start + j);
      w *= (x - xj) / (xi - xj);
    }
    const MomentState &s = states_[start + i];
    out.h1 += w * s.h1;
    out.h2 += w * s.h2;
    out.h3 += w * s.h3;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Integration

double default_moment_step(const DerivedParams &d) { return two_pi / (200.0 * d.omega_q); }
double max_moment_step(const DerivedParams &d) { return two_pi / (40.0 * d.omega_q); }

double stiff_moment_step(const DerivedParams &d, const MomentState &initial) {
  const double scale = std::max({initial.h1, initial.h3, std::abs(initial.h2), 1.0});
  return 0.05 / (2.0 * d.omega_q * (1.0 + d.lambda_q2() * scale));
}

double moment_step_for_sampling(const DerivedParams &d, double sampling_dt) {
  if (!(sampling_dt > 0.0)) throw std::invalid_argument("sampling step must be positive");
  const double k = std::ceil(sampling_dt / default_moment_step(d) - 1e-12);
  return sampling_dt / std::max(1.0, k);
}

double moment_step_for_sampling(const DerivedParams &d, double sampling_dt,
                                const MomentState &initial) {
  if (!(sampling_dt > 0.0)) throw std::invalid_argument("sampling step must be positive");
  const double bound = std::min(default_moment_step(d), stiff_moment_step(d, initial));
  const double k = std::ceil(sampling_dt / bound - 1e-12);
  return sampling_dt / std::max(1.0, k);
}

namespace {

struct Vec3 {
  double a, b, c;
};

inline Vec3 rates_of(const MomentState &s, const DerivedParams &d, Prescription pr) {
  const MomentRates r = riccati_rhs(s, d, pr);
  return {r.dh1, r.dh2, r.dh3};
}

inline double heisenberg_violation(const MomentState &s) {
  const double scale = std::max(1.0, std::abs(s.h1 * s.h3) + s.h2 * s.h2);
  return (1.0 - s.uncertainty_product()) / scale;
}

std::size_t step_count(double t_obs, double &dt) {
  if (!(t_obs >= 0.0)) throw std::invalid_argument("observation time must be non-negative");
  if (t_obs == 0.0) return 0;
  const double ratio = t_obs / dt;
  std::size_t n = static_cast<std::size_t>(std::llround(ratio));
  if (n == 0 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio) {
    n = static_cast<std::size_t>(std::ceil(ratio));
  }
  dt = t_obs / static_cast<double>(n);
  return n;
}

} // namespace

MomentTrajectory integrate_moments(const MomentState &initial, const DerivedParams &d,
                                   Prescription pr, double t_obs, double dt,
                                   std::size_t stride) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_moments: step must be positive");
  if (dt > max_moment_step(d) * (1.0 + 1e-12))
    throw std::invalid_argument("integrate_moments: step exceeds 2 pi / (40 omega_q)");
  if (stride == 0) stride = 1;
  if (heisenberg_violation(initial) > 1e-9)
    throw std::invalid_argument("integrate_moments: initial state violates h1 h3 - h2^2 >= 1");

  const std::size_t n = step_count(t_obs, dt);
  std::vector<MomentState> out;
  out.reserve(n / stride + 2);
  MomentState s = initial;
  out.push_back(s);
  const double t0 = initial.t;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 k1 = rates_of(s, d, pr);
    MomentState tmp{0.0, s.h1 + 0.5 * dt * k1.a, s.h2 + 0.5 * dt * k1.b, s.h3 + 0.5 * dt * k1.c};
    const Vec3 k2 = rates_of(tmp, d, pr);
    tmp = {0.0, s.h1 + 0.5 * dt * k2.a, s.h2 + 0.5 * dt * k2.b, s.h3 + 0.5 * dt * k2.c};
    const Vec3 k3 = rates_of(tmp, d, pr);
    tmp = {0.0, s.h1 + dt * k3.a, s.h2 + dt * k3.b, s.h3 + dt * k3.c};
    const Vec3 k4 = rates_of(tmp, d, pr);
    s.h1 += dt / 6.0 * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a);
    s.h2 += dt / 6.0 * (k1.b + 2.0 * k2.b + 2.0 * k3.b + k4.b);
    s.h3 += dt / 6.0 * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c);
    s.t = t0 + static_cast<double>(i + 1) * dt;
    if (heisenberg_violation(s) > 1e-9 || !std::isfinite(s.h1 + s.h2 + s.h3)) {
      std::ostringstream msg;
      msg << "Heisenberg bound violated at t = " << s.t << " s (h1 h3 - h2^2 = "
          << s.uncertainty_product() << ") with step " << dt
          << " s; reduce the step below " << 0.5 * dt << " s";
      throw NumericError(msg.str());
    }
    if ((i + 1) % stride == 0 || i + 1 == n) out.push_back(s);
  }
  const double grid = n == 0 ? dt : dt * static_cast<double>(std::min(stride, n));
  if (n % stride != 0 && n > stride) {
    // Final state does not sit on the strided grid; drop it to keep the grid
    // uniform only if it is not the sole output.
    MomentState last = out.back();
    out.pop_back();
    if (out.size() < 2) out.push_back(last);
  }
  return MomentTrajectory(grid, std::move(out), d.sys.model, pr);
}

// ---------------------------------------------------------------------------
// Steady states

MomentState steady_state_classical(const DerivedParams &d) {
  const double l2 = d.lambda_q2();
  const double root = std::sqrt(1.0 + l2 * l2);
  MomentState s;
  s.t = 0.0;
  s.h1 = std::sqrt(2.0) / std::sqrt(1.0 + root);
  s.h2 = l2 / (1.0 + root); // (sqrt(1 + L^4) - 1) / L^2 without cancellation
  s.h3 = std::sqrt(2.0) * root / std::sqrt(1.0 + root);
  return s;
}

double scaled_residual(const MomentState &s, const DerivedParams &d, Prescription pr) {
  const double l2 = d.lambda_q2();
  const MomentRates r = riccati_rhs(s, d, pr);
  const double w = d.omega_q;
  double s1 = w * (2.0 * std::abs(s.h2) + l2 * s.h1 * s.h1);
  double s2 = w * (std::abs(s.h3) + std::abs(s.h1) + l2 * std::abs(s.h1 * s.h2));
  double s3 = w * (2.0 * std::abs(s.h2) + l2 * (1.0 + s.h2 * s.h2));
  if (pr == Prescription::quantum) {
    const double g = d.sys.gamma_m;
    s2 += g * std::abs(s.h2);
    s3 += 2.0 * g * (std::abs(s.h3) + d.coth_q);
  }
  auto rel = [](double v, double scale) { return scale > 0.0 ? std::abs(v) / scale : std::abs(v); };
  return std::max({rel(r.dh1, s1), rel(r.dh2, s2), rel(r.dh3, s3)});
}

QuantumSteadyState steady_state_quantum(const DerivedParams &d) {
  // Eliminating h2 = L h1^2 / 2 and h3 leaves a quartic in h1 whose
  // coefficients are all negative beyond the constant, so the positive root is
  // unique. Solve it by safeguarded Newton, then polish with damped Newton on
  // the full three-dimensional system.
  const double L = d.lambda_q2();
  const double g = d.sys.gamma_m / d.omega_q;
  const double c = d.coth_q;
  auto q = [&](double x) {
    return L + 2.0 * g * c - 2.0 * g * x - L * (1.0 + g * g) * x * x - g * L * L * x * x * x -
           0.25 * L * L * L * x * x * x * x;
  };
  auto dq = [&](double x) {
    return -2.0 * g - 2.0 * L * (1.0 + g * g) * x - 3.0 * g * L * L * x * x - L * L * L * x * x * x;
  };
  double lo = 0.0;
  double hi = std::max(1.0, c);
  int guard = 0;
  while (q(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 2000) throw NumericError("steady_state_quantum: cannot bracket root");
  }
  double x = 0.5 * (lo + hi);
  int iterations = 0;
  for (; iterations < 400; ++iterations) {
    const double fx = q(x);
    if (fx > 0.0) lo = x;
    else hi = x;
    double next = x - fx / dq(x);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-16 * std::max(1.0, std::abs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  MomentState s;
  s.h1 = x;
  s.h2 = 0.5 * L * x * x;
  s.h3 = x + L * x * s.h2 + g * s.h2;

  // Damped Newton polish on the 3x3 system (rates in units of omega_q).
  const Prescription pr = Prescription::quantum;
  for (int k = 0; k < 20; ++k) {
    const double res = scaled_residual(s, d, pr);
    if (res < 1e-14) break;
    const MomentRates f = riccati_rhs(s, d, pr);
    const double w = d.omega_q;
    const double F[3] = {f.dh1 / w, f.dh2 / w, f.dh3 / w};
    // Jacobian in units of omega_q.
    const double J[3][3] = {{-2.0 * L * s.h1, 2.0, 0.0},
                            {-1.0 - L * s.h2, -L * s.h1 - g, 1.0},
                            {0.0, -2.0 - 2.0 * L * s.h2, -2.0 * g}};
    // Cramer's rule.
    auto det3 = [](const double m[3][3]) {
      return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
             m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
             m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    };
    const double det = det3(J);
    if (det == 0.0) break;
    double delta[3];
    for (int col = 0; col < 3; ++col) {
      double m[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = (j == col) ? -F[i] : J[i][j];
      delta[col] = det3(m) / det;
    }
    double step = 1.0;
    MomentState trial = s;
    for (int ls = 0; ls < 30; ++ls) {
      trial = {0.0, s.h1 + step * delta[0], s.h2 + step * delta[1], s.h3 + step * delta[2]};
      if (scaled_residual(trial, d, pr) < res) break;
      step *= 0.5;
    }
    if (scaled_residual(trial, d, pr) >= res) break;
    s = trial;
    ++iterations;
  }
  QuantumSteadyState out;
  out.state = s;
  out.residual = scaled_residual(s, d, pr);
  out.iterations = iterations;
  if (!(out.residual < 1e-12)) {
    std::ostringstream msg;
    msg << "steady_state_quantum did not converge, residual " << out.residual;
    throw NumericError(msg.str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linearization

namespace {

using cplx = std::complex<double>;

std::array<cplx, 3> solve_monic_cubic(double a, double b, double c) {
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const cplx disc = std::sqrt(cplx(q * q / 4.0 + p * p * p / 27.0));
  cplx u = std::pow(-q / 2.0 + disc, 1.0 / 3.0);
  if (std::abs(u) < 1e-300) u = std::pow(-q / 2.0 - disc, 1.0 / 3.0);
  const cplx rot(-0.5, std::sqrt(3.0) / 2.0);
  std::array<cplx, 3> roots;
  cplx uk = u;
  for (int k = 0; k < 3; ++k) {
    const cplx y = std::abs(uk) > 0.0 ? uk - p / (3.0 * uk) : cplx(0.0);
    roots[k] = y - a / 3.0;
    uk *= rot;
  }
  for (auto &z : roots) {
    for (int it = 0; it < 3; ++it) {
      const cplx f = ((z + a) * z + b) * z + c;
      const cplx df = (3.0 * z + 2.0 * a) * z + b;
      if (std::abs(df) == 0.0) break;
      z -= f / df;
    }
  }
  return roots;
}

} // namespace

std::array<std::complex<double>, 3> linearized_roots(const DerivedParams &d) {
  const double l2 = d.lambda_q2();
  const double kappa = std::sqrt(1.0 + l2 * l2);
  const double km1 = l2 * l2 / (kappa + 1.0); // kappa - 1
  const double s = std::sqrt(2.0 * km1);
  // Coefficients in units of omega_q.
  const double a2 = 3.0 * s;
  const double a1 = 4.0 * (2.0 * kappa - 1.0);
  const double a0 = 4.0 * kappa * s;
  auto roots = solve_monic_cubic(a2, a1, a0);
  std::sort(roots.begin(), roots.end(), [](const cplx &x, const cplx &y) {
    if (std::abs(std::abs(x.imag()) - std::abs(y.imag())) > 1e-12 * (1.0 + std::abs(x)))
      return std::abs(x.imag()) < std::abs(y.imag());
    return x.imag() > y.imag();
  });
  for (auto &z : roots) z *= d.omega_q;
  return roots;
}

// ---------------------------------------------------------------------------
// Effective decay rate

EffectiveDecay effective_decay_rate(const MomentTrajectory &traj, double omega_q, double h1_eq) {
  EffectiveDecay out;
  const std::size_t n = traj.size();
  if (n < 3) {
    out.diagnostic = "trajectory too short";
    return out;
  }
  const double dt = traj.dt();
  std::optional<double> t0;
  if (traj[0].h1 > traj[1].h1) t0 = traj.t_begin();
  for (std::size_t i = 1; !t0 && i + 1 < n; ++i) {
    const double ym = traj[i - 1].h1, y0 = traj[i].h1, yp = traj[i + 1].h1;
    if (y0 >= ym && y0 > yp) {
      const double curv = ym - 2.0 * y0 + yp;
      const double off = curv != 0.0 ? 0.5 * (ym - yp) / curv : 0.0;
      t0 = traj[i].t + off * dt;
    }
  }
  if (!t0) {
    out.diagnostic = "no local maximum of h1 found";
    return out;
  }
  out.first_peak_time = *t0;
  const double period = M_PI / omega_q;
  std::vector<double> excess;
  for (int k = 0;; ++k) {
    const double t = *t0 + k * period;
    if (t > traj.t_end()) break;
    const double e = traj.at(t).h1 - h1_eq;
    if (!(e > 0.0)) break;
    excess.push_back(e);
  }
  if (excess.size() < 2) {
    out.diagnostic = "fewer than two peaks above h1_eq";
    return out;
  }
  for (std::size_t k = 1; k < excess.size(); ++k)
    out.rates.emplace_back(static_cast<int>(k), omega_q / M_PI * std::log(excess[k - 1] / excess[k]));
  return out;
}

// ---------------------------------------------------------------------------
// Ellipse parameterization

MomentState ellipse_to_moments(const EllipseParams &e, double t) {
  const double ch = std::cosh(2.0 * e.r), sh = std::sinh(2.0 * e.r);
  const double c2 = std::cos(2.0 * e.theta), s2 = std::sin(2.0 * e.theta);
  return {t, e.beta * (ch - c2 * sh), e.beta * s2 * sh, e.beta * (ch + c2 * sh)};
}

EllipseParams moments_to_ellipse(const MomentState &s) {
  const double det = s.uncertainty_product();
  if (det < 1.0 - 1e-12 * std::max(1.0, s.h1 * s.h3))
    throw std::invalid_argument("moments_to_ellipse: h1 h3 - h2^2 < 1");
  EllipseParams e;
  e.beta = std::sqrt(det);
  const double half_sum = 0.5 * (s.h1 + s.h3);
  const double half_axis = 0.5 * std::hypot(s.h3 - s.h1, 2.0 * s.h2); // beta sinh 2r
  e.r = 0.25 * std::log((half_sum + half_axis) / (half_sum - half_axis));
  if (half_axis == 0.0) {
    e.theta = 0.0;
  } else {
    double th = 0.5 * std::atan2(s.h2, 0.5 * (s.h3 - s.h1));
    if (th < 0.0) th += M_PI;
    if (th >= M_PI) th -= M_PI;
    e.theta = th;
  }
  return e;
}

EllipseRates ellipse_rhs(const EllipseParams &e, const DerivedParams &d) {
  const double k = 0.5 * d.lambda_star2() / d.omega_q;
  const double ch = std::cosh(2.0 * e.r), sh = std::sinh(2.0 * e.r);
  const double c2 = std::cos(2.0 * e.theta), s2 = std::sin(2.0 * e.theta);
  const double ratio = (1.0 + e.beta * e.beta) / (2.0 * e.beta);
  EllipseRates out;
  out.dr = k * (c2 * ch - sh) * ratio;
  out.dtheta = d.omega_q - k * s2 / sh * ratio;
  out.dbeta = k * (ch - c2 * sh) * (1.0 - e.beta * e.beta);
  return out;
}

MomentTrajectory integrate_ellipse(const EllipseParams &e0, const DerivedParams &d, double t_obs,
                                   double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_ellipse: step must be positive");
  if (!(e0.r > 0.0)) throw std::invalid_argument("integrate_ellipse: chart requires r > 0");
  const std::size_t n = step_count(t_obs, dt);
  std::vector<MomentState> out;
  out.reserve(n + 1);
  EllipseParams e = e0;
  out.push_back(ellipse_to_moments(e, 0.0));
  auto add = [](const EllipseParams &a, const EllipseRates &k, double h) {
    return EllipseParams{a.r + h * k.dr, a.theta + h * k.dtheta, a.beta + h * k.dbeta};
  };
  for (std::size_t i = 0; i < n; ++i) {
    const EllipseRates k1 = ellipse_rhs(e, d);
    const EllipseRates k2 = ellipse_rhs(add(e, k1, 0.5 * dt), d);
    const EllipseRates k3 = ellipse_rhs(add(e, k2, 0.5 * dt), d);
    const EllipseRates k4 = ellipse_rhs(add(e, k3, dt), d);
    e.r += dt / 6.0 * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr);
    e.theta += dt / 6.0 * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta);
    e.beta += dt / 6.0 * (k1.dbeta + 2.0 * k2.dbeta + 2.0 * k3.dbeta + k4.dbeta);
    if (!(e.r > 0.0))
      throw NumericError("integrate_ellipse: squeezing degree reached zero (chart singular)");
    out.push_back(ellipse_to_moments(e, static_cast<double>(i + 1) * dt));
  }
  return MomentTrajectory(dt, std::move(out), d.sys.model, Prescription::classical);
}

double rotation_ratio(const EllipseParams &e, const DerivedParams &d) {
  return d.lambda_q2() * std::exp(-2.0 * e.r) * (1.0 + e.beta * e.beta) / (2.0 * e.beta);
}

Case2Solution analytic_case2(const EllipseParams &e0, const DerivedParams &d, double t) {
  const double w = d.omega_q;
  const double l2 = d.lambda_q2();
  const double e2r = std::exp(2.0 * e0.r);
  auto g_of = [&](double tt) {
    return 0.5 * l2 * (w * tt - std::cos(w * tt + 2.0 * e0.theta) * std::sin(w * tt));
  };
  auto state_at = [&](double tt) {
    const double g = g_of(tt);
    const double den = 1.0 + e2r * e0.beta * g;
    return EllipseParams{e0.r - 0.25 * std::log(den), w * tt + e0.theta, e0.beta / std::sqrt(den)};
  };
  // Rotation condition checked on a grid fine enough to resolve the
  // oscillation of g.
  const int samples = std::max(64, static_cast<int>(std::ceil(t * w / M_PI * 16.0)));
  for (int i = 0; i <= samples; ++i) {
    const double tt = t * i / samples;
    if (rotation_ratio(state_at(tt), d) >= kRotationRatioLimit)
      throw std::invalid_argument("analytic_case2: rotation ratio reaches 0.1 on [0, t]");
  }
  Case2Solution out;
  out.g = g_of(t);
  const double den = 1.0 + e2r * e0.beta * out.g;
  out.r = e0.r - 0.25 * std::log(den);
  out.beta = e0.beta / std::sqrt(den);
  const double ph = e0.theta + w * t;
  const double h1_free =
      e0.beta * (std::cosh(2.0 * e0.r) - std::cos(2.0 * ph) * std::sinh(2.0 * e0.r));
  out.h1 = (e0.beta * e0.beta * std::cos(ph) * std::cos(ph) * out.g + h1_free) / den;
  out.h1_max = 1.0 / (0.5 * d.lambda_star2() / w * t + 1.0 / (e2r * e0.beta));
  return out;
}

double sqz_db(double h1, double h2, double h3) {
  const double sum = h1 + h3;
  const double axis = std::hypot(h1 - h3, 2.0 * h2);
  return -5.0 * std::log10((sum - axis) / (sum + axis));
}

EllipseParams squeezed_thermal(double db, double beta, double theta0) {
  if (db < 0.0) throw std::invalid_argument("squeezing level must be >= 0 dB");
  if (beta < 1.0) throw std::invalid_argument("scale factor must be >= 1");
  return {db * std::log(10.0) / 20.0, theta0, beta};
}

EllipseParams squeezed_thermal_min_variance(double db, double min_variance, double theta0) {
  if (db < 0.0) throw std::invalid_argument("squeezing level must be >= 0 dB");
  const double r = db * std::log(10.0) / 20.0;
  const double beta = min_variance * std::exp(2.0 * r);
  if (beta < 1.0) throw std::invalid_argument("state below the uncertainty bound");
  return {r, theta0, beta};
}

// ---------------------------------------------------------------------------
// Stationary spectra

namespace {

double response_denominator(const DerivedParams &d, double omega) {
  const double wm2 = d.sys.omega_m * d.sys.omega_m;
  const double g = d.sys.gamma_m;
  const double o2 = omega * omega;
  return (o2 - wm2) * (o2 - wm2) + g * g * o2;
}

} // namespace

double stationary_psd(const DerivedParams &d, Prescription pr, double omega) {
  const double den = response_denominator(d, omega);
  const double wq2 = d.omega_q * d.omega_q;
  const double wsn2 = d.omega_sn_eff * d.omega_sn_eff;
  const double l2 = d.lambda_q2();
  if (pr == Prescription::classical) {
    const double ls2 = d.lambda_star2();
    const double thermal = 4.0 * ls2 * d.sys.gamma_m * k_boltzmann * d.sys.temperature / hbar;
    const double sn = 2.0 * wsn2 * wq2 * (l2 * l2 / (std::sqrt(1.0 + l2 * l2) + 1.0));
    return (ls2 * ls2 + thermal - sn) / den + 1.0;
  }
  const double a = l2 * l2 + 2.0 * l2 * d.coth_q / d.q_q;
  const double sn = 2.0 * wsn2 / wq2 * (a / (std::sqrt(1.0 + a) + 1.0));
  return wq2 * wq2 / den * (a - sn) + 1.0;
}

double log_ratio(const DerivedParams &d, Prescription pr) {
  if (pr == Prescription::quantum) return log_ratio_from_psd(d, pr);
  const double l2 = d.lambda_q2();
  const double wsn2 = d.omega_sn_eff * d.omega_sn_eff;
  const double frac = wsn2 / (d.omega_q * d.omega_q) * 2.0 * l2 /
                      ((std::sqrt(1.0 + l2 * l2) + 1.0) * (l2 + d.lambda_th));
  return -10.0 * std::log10(1.0 - frac);
}

double log_ratio_from_psd(const DerivedParams &d, Prescription pr) {
  const DerivedParams qg = derive(d.sys.with_model(GravityModel::qg));
  const double w = d.sys.omega_m;
  return -10.0 * std::log10(stationary_psd(d, pr, w) / stationary_psd(qg, pr, w));
}

LogRatioOptimum max_log_ratio_quantum(const DerivedParams &d) {
  const double wsn2 = d.omega_sn_eff * d.omega_sn_eff;
  const double g = d.sys.gamma_m, wm = d.sys.omega_m;
  LogRatioOptimum out;
  out.value_db =
      -10.0 * std::log10(1.0 - 2.0 * wsn2 / (2.0 * g * wm + 2.0 * d.omega_q * d.omega_q));
  out.lambda_q = std::sqrt(hbar * wm / (2.0 * k_boltzmann * d.sys.temperature));
  return out;
}

std::optional<double> peak_exists(double lambda_decay, double omega_osc) {
  if (!(lambda_decay > 0.0) || !(omega_osc > 0.0))
    throw std::invalid_argument("peak_exists: rates must be positive");
  if (lambda_decay >= omega_osc) return std::nullopt;
  return std::sqrt(omega_osc * omega_osc - lambda_decay * lambda_decay);
}

} // namespace ccsn
