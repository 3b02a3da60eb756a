#include "ccsn/wvspec.hpp"

#include <cmath>
#include <stdexcept>

namespace ccsn {

using constants::two_pi;

std::string to_string(WvNormalization n) {
  return n == WvNormalization::raw ? "raw" : "floor_normalized";
}

double shot_floor(DeltaConvention c) {
  return c == DeltaConvention::continuous ? 0.5 / two_pi : 1.0 / two_pi;
}

double taper_weight(Taper taper, std::size_t m, std::size_t max_lag) {
  if (taper == Taper::none) return 1.0;
  return 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(m) / static_cast<double>(max_lag + 1)));
}

void lag_transform(std::span<const double> c, double dt, std::span<const double> omega, Taper taper,
                   std::span<double> out, std::span<double> imag) {
  if (c.empty()) throw std::invalid_argument("lag_transform: empty lag sequence");
  if (out.size() != omega.size()) throw std::invalid_argument("lag_transform: size mismatch");
  const std::size_t M = c.size() - 1;
  const double scale = 2.0 * dt / two_pi;
  for (std::size_t k = 0; k < omega.size(); ++k) {
    double re = taper_weight(taper, 0, M) * c[0];
    double im_pos = 0.0, im_neg = 0.0;
    for (std::size_t m = 1; m <= M; ++m) {
      const double arg = omega[k] * 2.0 * static_cast<double>(m) * dt;
      const double w = taper_weight(taper, m, M) * c[m];
      re += 2.0 * w * std::cos(arg);
      im_pos -= w * std::sin(arg);
      im_neg += w * std::sin(arg);
    }
    out[k] = scale * re;
    if (!imag.empty()) imag[k] = scale * (im_pos + im_neg);
  }
}

std::vector<double> uniform_grid(double w0, double w1, std::size_t count) {
  if (count < 2) return {w0};
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = w0 + (w1 - w0) * static_cast<double>(i) / static_cast<double>(count - 1);
  return g;
}

std::size_t max_lag_index(std::size_t j, std::size_t n) {
  if (j >= n) throw std::invalid_argument("evaluation index outside the record");
  return std::min(j, n - 1 - j);
}

std::vector<double> kernel_lags(const RecordKernel &k, std::size_t j, double dt, std::size_t M) {
  std::vector<double> c(M + 1);
  for (std::size_t m = 0; m <= M; ++m) {
    const double t1 = static_cast<double>(j + m) * dt;
    const double t2 = static_cast<double>(j - m) * dt;
    c[m] = k.total(t1, t2);
  }
  return c;
}

WvSlice wv_from_kernel(const RecordKernel &k, std::size_t j, std::size_t n, double dt,
                       std::span<const double> omega, const WvOptions &opts) {
  const std::size_t M = opts.max_lag ? std::min(*opts.max_lag, j) : max_lag_index(j, n);
  const std::vector<double> c = kernel_lags(k, j, dt, M);
  WvSlice s;
  s.t = static_cast<double>(j) * dt;
  s.omega.assign(omega.begin(), omega.end());
  s.value.resize(omega.size());
  s.normalization = opts.normalization;
  lag_transform(c, dt, omega, opts.taper, s.value);
  const double floor = shot_floor(opts.delta);
  for (double &v : s.value) {
    v += floor * taper_weight(opts.taper, 0, M);
    if (opts.normalization == WvNormalization::floor_normalized) v /= floor;
  }
  return s;
}

WvAccumulator::WvAccumulator(std::size_t j, std::size_t n, double dt, std::vector<double> omega,
                             WvOptions opts)
    : j_(j), n_(n), dt_(dt), omega_(std::move(omega)), opts_(opts) {
  lag_ = opts_.max_lag ? std::min(*opts_.max_lag, max_lag_index(j, n)) : max_lag_index(j, n);
  const std::size_t K = omega_.size();
  cos_table_.resize((lag_ + 1) * K);
  double scale = 2.0 * dt_ / two_pi;
  if (opts_.normalization == WvNormalization::floor_normalized)
    scale /= shot_floor(DeltaConvention::discrete);
  for (std::size_t m = 0; m <= lag_; ++m) {
    const double w = taper_weight(opts_.taper, m, lag_) * (m == 0 ? 1.0 : 2.0) * scale;
    for (std::size_t k = 0; k < K; ++k)
      cos_table_[m * K + k] = w * std::cos(omega_[k] * 2.0 * static_cast<double>(m) * dt_);
  }
  sum_.assign(K, 0.0);
  sum2_.assign(K, 0.0);
}

std::vector<double> WvAccumulator::single(std::span<const double> y) const {
  if (y.size() != n_) throw std::invalid_argument("WvAccumulator: record length mismatch");
  const std::size_t K = omega_.size();
  std::vector<double> v(K, 0.0);
  for (std::size_t m = 0; m <= lag_; ++m) {
    const double c = y[j_ + m] * y[j_ - m];
    const double *row = cos_table_.data() + m * K;
    for (std::size_t k = 0; k < K; ++k) v[k] += c * row[k];
  }
  return v;
}

void WvAccumulator::add(std::span<const double> y) {
  const std::vector<double> v = single(y);
  if (trials_ == 0) shift_ = v;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double d = v[k] - shift_[k];
    sum_[k] += d;
    sum2_[k] += d * d;
  }
  ++trials_;
}

WvSlice WvAccumulator::mean() const {
  if (trials_ == 0) throw std::invalid_argument("WvAccumulator: no trials");
  WvSlice s;
  s.t = static_cast<double>(j_) * dt_;
  s.omega = omega_;
  s.normalization = opts_.normalization;
  s.value.resize(omega_.size());
  for (std::size_t k = 0; k < omega_.size(); ++k)
    s.value[k] = shift_[k] + sum_[k] / static_cast<double>(trials_);
  return s;
}

std::vector<double> WvAccumulator::variance() const {
  std::vector<double> v(omega_.size(), 0.0);
  if (trials_ < 2) return v;
  const double N = static_cast<double>(trials_);
  for (std::size_t k = 0; k < omega_.size(); ++k)
    v[k] = (sum2_[k] - sum_[k] * sum_[k] / N) / (N - 1.0);
  return v;
}

WvEnsembleResult wv_from_ensemble(const Ensemble &e, std::size_t j, std::span<const double> omega,
                                  const WvOptions &opts) {
  if (e.members == 0) throw std::invalid_argument("wv_from_ensemble: empty ensemble");
  WvAccumulator acc(j, e.samples, e.dt, std::vector<double>(omega.begin(), omega.end()), opts);
  for (std::size_t i = 0; i < e.members; ++i) acc.add(e.member(i));
  return {acc.mean(), acc.variance(), acc.trials()};
}

// ---------------------------------------------------------------------------

namespace {

// P(|X| > x) for X ~ N(mu, s^2), accurate in the far tail.
double folded_upper(double x, double mu, double s) {
  const double r = 1.0 / (s * std::sqrt(2.0));
  return 0.5 * (std::erfc((x - mu) * r) + std::erfc((x + mu) * r));
}

double folded_mean(double mu, double s) {
  return s * std::sqrt(2.0 / M_PI) * std::exp(-0.5 * mu * mu / (s * s)) +
         mu * std::erf(mu / (s * std::sqrt(2.0)));
}

} // namespace

double folded_normal_pdf(double x, double mu, double sigma) {
  if (x < 0.0) return 0.0;
  const double s2 = sigma * sigma;
  // cosh(mu x / s2) exp(-(x^2 + mu^2) / 2 s2), arranged to avoid overflow.
  const double a = std::exp(-0.5 * (x - mu) * (x - mu) / s2);
  const double b = std::exp(-0.5 * (x + mu) * (x + mu) / s2);
  return std::sqrt(2.0 / (M_PI * s2)) * 0.5 * (a + b);
}

double folded_normal_cdf(double x, double mu, double sigma) {
  if (x <= 0.0) return 0.0;
  return 1.0 - folded_upper(x, mu, sigma);
}

DetectionStat folded_detection(double mu_sn, double sigma_sn, double mu_qg, double sigma_qg,
                               std::size_t trials) {
  if (!(sigma_sn > 0.0) || !(sigma_qg > 0.0))
    throw std::invalid_argument("folded_detection: standard deviations must be positive");
  if (trials == 0) throw std::invalid_argument("folded_detection: need at least one trial");
  const double root = std::sqrt(static_cast<double>(trials));
  const double s_sn = sigma_sn / root, s_qg = sigma_qg / root;
  if (std::abs(std::abs(mu_sn) - std::abs(mu_qg)) <= 1e-15 * (std::abs(mu_sn) + s_sn) &&
      std::abs(s_sn - s_qg) <= 1e-15 * s_sn)
    throw std::invalid_argument("folded_detection: distributions coincide, threshold undefined");

  DetectionStat out;
  out.trials = trials;
  out.mu_sn = mu_sn;
  out.sigma_sn = sigma_sn;
  out.mu_qg = mu_qg;
  out.sigma_qg = sigma_qg;
  out.sn_above = folded_mean(mu_sn, s_sn) >= folded_mean(mu_qg, s_qg);

  auto rates = [&](double rho, double &fa, double &fd) {
    if (out.sn_above) {
      fa = folded_upper(rho, mu_qg, s_qg);
      fd = 1.0 - folded_upper(rho, mu_sn, s_sn);
    } else {
      fa = 1.0 - folded_upper(rho, mu_qg, s_qg);
      fd = folded_upper(rho, mu_sn, s_sn);
    }
  };
  double lo = 0.0;
  double hi = std::max(std::abs(mu_sn) + 40.0 * s_sn, std::abs(mu_qg) + 40.0 * s_qg);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double fa, fd;
    rates(mid, fa, fd);
    const bool fa_high = fa > fd;
    // With SN above, raising rho lowers the false-alarm rate.
    if (fa_high == out.sn_above) lo = mid;
    else hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  out.threshold = 0.5 * (lo + hi);
  rates(out.threshold, out.false_alarm, out.false_dismissal);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct GaussRule {
  std::vector<double> x, w; // on [-1, 1]
};

const GaussRule &gauss_legendre_10() {
  static const GaussRule rule = [] {
    const int n = 10;
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
      double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      r.x[i] = z;
      r.w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return r;
  }();
  return rule;
}

template <class F> double gauss_integrate(const F &f, double a, double b) {
  const GaussRule &g = gauss_legendre_10();
  const double h = 0.5 * (b - a), c = 0.5 * (a + b);
  double acc = 0.0;
  for (std::size_t i = 0; i < g.x.size(); ++i) acc += g.w[i] * f(c + h * g.x[i]);
  return h * acc;
}

template <class F> double composite(const F &f, double a, double b, std::size_t panels) {
  const double h = (b - a) / static_cast<double>(panels);
  double acc = 0.0;
  for (std::size_t p = 0; p < panels; ++p)
    acc += gauss_integrate(f, a + h * static_cast<double>(p), a + h * static_cast<double>(p + 1));
  return acc;
}

} // namespace

IdentitySides sine_transform_identity(const std::function<double(double)> &f, double t, double omega,
                                  std::size_t panels) {
  if (omega == 0.0) throw std::invalid_argument("sine_transform_identity: omega must be nonzero");
  if (!(t > 0.0)) throw std::invalid_argument("sine_transform_identity: t must be positive");
  if (panels == 0) panels = 1;

  // Inner integral F(u) = Int_0^u f on a uniform partition of [0, t].
  const double h = t / static_cast<double>(panels);
  std::vector<double> cum(panels + 1, 0.0);
  for (std::size_t p = 0; p < panels; ++p)
    cum[p + 1] = cum[p] + gauss_integrate(f, h * static_cast<double>(p), h * static_cast<double>(p + 1));
  auto F = [&](double u) {
    if (u <= 0.0) return 0.0;
    if (u >= t) return cum[panels];
    const std::size_t p = std::min(panels - 1, static_cast<std::size_t>(u / h));
    const double a = h * static_cast<double>(p);
    return cum[p] + (u > a ? gauss_integrate(f, a, u) : 0.0);
  };

  IdentitySides out;
  // Outer integral over tau in [-2t, 2t]; the integrand is even so the sine
  // part cancels and the cosine part doubles.
  out.lhs = 2.0 * composite([&](double tau) { return std::cos(omega * tau) * F(t - 0.5 * tau); },
                            0.0, 2.0 * t, 2 * panels);

  const double re = composite([&](double s) { return f(s) * std::cos(2.0 * omega * s); }, 0.0, t, panels);
  const double im = -composite([&](double s) { return f(s) * std::sin(2.0 * omega * s); }, 0.0, t, panels);
  const double c2 = std::cos(2.0 * omega * t), s2 = std::sin(2.0 * omega * t);
  out.rhs_cosine_only = 2.0 * c2 / omega * im;
  out.rhs_corrected = 2.0 / omega * (s2 * re + c2 * im);
  return out;
}

} // namespace ccsn
