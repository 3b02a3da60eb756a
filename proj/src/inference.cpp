#include "ccsn/inference.hpp"

#include "ccsn/io.hpp"
#include "ccsn/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ccsn {

MomentTrajectory record_moments(const DerivedParams &d, const EllipseParams &initial,
                                const RecordGrid &grid) {
  const MomentState s0 = ellipse_to_moments(initial);
  const double step = moment_step_for_sampling(d, grid.dt, s0);
  return integrate_moments(s0, d, d.sys.prescription, grid.t_obs(), step);
}

Eigen::MatrixXd assemble_covariance(const RecordKernel &k, const RecordGrid &grid,
                                    unsigned threads) {
  const std::size_t n = grid.n;
  Eigen::MatrixXd s(n, n);
  parallel_for(n, threads, [&](std::size_t j) {
    const double tj = static_cast<double>(j) * grid.dt;
    for (std::size_t i = 0; i <= j; ++i) {
      const double ti = static_cast<double>(i) * grid.dt;
      double v = k.total(ti, tj);
      if (i == j) v += 0.5 / grid.dt;
      s(i, j) = v;
    }
  });
  s.triangularView<Eigen::StrictlyLower>() = s.transpose();
  return s;
}

Eigen::MatrixXd assemble_covariance_direct(const RecordKernel &k, const RecordGrid &grid) {
  const std::size_t n = grid.n;
  Eigen::MatrixXd s(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double tj = static_cast<double>(j) * grid.dt;
    for (std::size_t i = 0; i <= j; ++i) {
      const double ti = static_cast<double>(i) * grid.dt;
      double v = k.measurement_direct(ti, tj) + k.thermal(ti, tj) + k.cross(ti, tj);
      if (i == j) v += 0.5 / grid.dt;
      s(i, j) = s(j, i) = v;
    }
  }
  return s;
}

CovarianceModel factorize(Eigen::MatrixXd sigma, GravityModel model, Prescription pr,
                          const RecordGrid &grid) {
  if (static_cast<std::size_t>(sigma.rows()) != grid.n || sigma.rows() != sigma.cols())
    throw std::invalid_argument("factorize: matrix does not match the grid");
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
    std::ostringstream msg;
    msg << "covariance (" << to_string(model) << ", " << to_string(pr)
        << ") is not positive definite; smallest eigenvalue " << es.eigenvalues()(0);
    throw NumericError(msg.str());
  }
  CovarianceModel c;
  c.model = model;
  c.prescription = pr;
  c.grid = grid;
  c.factor = llt.matrixL();
  c.log_det = 2.0 * c.factor.diagonal().array().log().sum();
  c.sigma = std::move(sigma);
  return c;
}

CovarianceModel build_covariance(const DerivedParams &d, const MomentTrajectory &moments,
                                 const RecordGrid &grid, const KernelOptions &opts,
                                 unsigned threads) {
  if (moments.t_end() < static_cast<double>(grid.n - 1) * grid.dt * (1.0 - 1e-12))
    throw std::invalid_argument("build_covariance: moments do not cover the record grid");
  KernelOptions o = opts;
  if (o.record_dt <= 0.0) o.record_dt = grid.dt;
  const RecordKernel k(d, moments, o);
  return factorize(assemble_covariance(k, grid, threads), d.sys.model, d.sys.prescription, grid);
}

Eigen::VectorXd sample_gaussian(const CovarianceModel &cov, NormalStream &noise) {
  Eigen::VectorXd xi(cov.n());
  noise.fill(std::span<double>(xi.data(), cov.n()));
  return cov.factor.triangularView<Eigen::Lower>() * xi;
}

namespace {
double log_norm(const CovarianceModel &c) {
  return 0.5 * (static_cast<double>(c.n()) * std::log(2.0 * M_PI) + c.log_det);
}
} // namespace

double log_density(const CovarianceModel &cov, const Eigen::VectorXd &y) {
  if (static_cast<std::size_t>(y.size()) != cov.n())
    throw std::invalid_argument("log_density: dimension mismatch");
  const Eigen::VectorXd z = cov.factor.triangularView<Eigen::Lower>().solve(y);
  return -0.5 * z.squaredNorm() - log_norm(cov);
}

std::string to_string(LlrMode m) { return m == LlrMode::ratio ? "ratio" : "difference"; }

LlrMode parse_llr_mode(const std::string &s) {
  if (s == "ratio") return LlrMode::ratio;
  if (s == "difference") return LlrMode::difference;
  throw ConfigError("unknown llr mode '" + s + "' (expected ratio or difference)");
}

double combine_logs(double log_sn, double log_qg, LlrMode mode) {
  if (mode == LlrMode::difference) return log_sn - log_qg;
  if (log_qg == 0.0) throw NumericError("llr: log f_QG is zero, ratio undefined");
  return log_sn / log_qg;
}

double llr(const Eigen::VectorXd &y, const CovarianceModel &sn, const CovarianceModel &qg,
           LlrMode mode) {
  if (sn.n() != qg.n() || sn.grid.dt != qg.grid.dt)
    throw std::invalid_argument("llr: covariances are on different grids");
  return combine_logs(log_density(sn, y), log_density(qg, y), mode);
}

LlrPool sample_llr(const CovarianceModel &sn, const CovarianceModel &qg, std::size_t count,
                   std::uint64_t seed, LlrMode mode, unsigned threads) {
  if (sn.n() != qg.n() || sn.grid.dt != qg.grid.dt)
    throw std::invalid_argument("sample_llr: covariances are on different grids");
  const std::size_t n = sn.n();
  // With Y = L_a xi the own-model quadratic form is |xi|^2 and the other one
  // is |L_b^-1 L_a xi|^2, so one lower-triangular product per batch suffices.
  Eigen::MatrixXd b_sn = sn.factor;
  qg.factor.triangularView<Eigen::Lower>().solveInPlace(b_sn);
  Eigen::MatrixXd b_qg = qg.factor;
  sn.factor.triangularView<Eigen::Lower>().solveInPlace(b_qg);
  const double c_sn = log_norm(sn), c_qg = log_norm(qg);

  LlrPool pool;
  pool.sn.assign(count, 0.0);
  pool.qg.assign(count, 0.0);
  constexpr std::size_t batch = 128;
  const std::size_t batches = (count + batch - 1) / batch;
  parallel_for(2 * batches, threads, [&](std::size_t task) {
    const bool from_qg = task % 2 == 1;
    const std::size_t first = (task / 2) * batch;
    const std::size_t width = std::min(batch, count - first);
    Eigen::MatrixXd xi(n, width);
    for (std::size_t c = 0; c < width; ++c) {
      NormalStream noise(seed, 2 * (first + c) + (from_qg ? 1 : 0), StreamTag::gaussian);
      noise.fill(std::span<double>(xi.col(static_cast<Eigen::Index>(c)).data(), n));
    }
    const Eigen::MatrixXd &b = from_qg ? b_qg : b_sn;
    const Eigen::MatrixXd w = b.triangularView<Eigen::Lower>() * xi;
    const Eigen::VectorXd own = xi.colwise().squaredNorm().transpose();
    const Eigen::VectorXd other = w.colwise().squaredNorm().transpose();
    for (std::size_t c = 0; c < width; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      if (from_qg)
        pool.qg[first + c] = combine_logs(-0.5 * other(ci) - c_sn, -0.5 * own(ci) - c_qg, mode);
      else
        pool.sn[first + c] = combine_logs(-0.5 * own(ci) - c_sn, -0.5 * other(ci) - c_qg, mode);
    }
  });
  return pool;
}

std::vector<double> group_means(const std::vector<double> &z, std::size_t n_avg,
                                std::size_t groups) {
  if (n_avg == 0) throw std::invalid_argument("group_means: n_avg must be positive");
  if (groups * n_avg > z.size()) throw std::invalid_argument("group_means: not enough samples");
  std::vector<double> out(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_avg; ++i) s += z[g * n_avg + i];
    out[g] = s / static_cast<double>(n_avg);
  }
  return out;
}

RateInterval wilson_interval(std::size_t hits, std::size_t total, double z) {
  if (total == 0) return {0.0, 1.0};
  const double m = static_cast<double>(total);
  const double p = static_cast<double>(hits) / m;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / m;
  const double centre = (p + z2 / (2.0 * m)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / m + z2 / (4.0 * m * m)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace {
double quantile_sorted(const std::vector<double> &s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < s.size() ? s[i] * (1.0 - f) + s[i + 1] * f : s[i];
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / M_SQRT2); }

// Kernel-smoothed P(Z <= rho).
double smoothed_cdf(const std::vector<double> &z, double h, double rho) {
  double acc = 0.0;
  for (double v : z) acc += normal_cdf((rho - v) / h);
  return acc / static_cast<double>(z.size());
}
} // namespace

double silverman_bandwidth(std::vector<double> z) {
  if (z.size() < 2) throw std::invalid_argument("silverman_bandwidth: need at least two samples");
  const double m = static_cast<double>(z.size());
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / m;
  double ss = 0.0;
  for (double v : z) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (m - 1.0));
  std::sort(z.begin(), z.end());
  const double iqr = quantile_sorted(z, 0.75) - quantile_sorted(z, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) spread = std::max(std::abs(mean), 1.0) * 1e-12;
  return 0.9 * spread * std::pow(m, -0.2);
}

ErrorReport error_rates(const std::vector<double> &z_sn, const std::vector<double> &z_qg,
                        std::size_t n_avg, double bandwidth_scale) {
  if (z_sn.size() < 2 || z_qg.size() < 2)
    throw std::invalid_argument("error_rates: need at least two samples per model");
  ErrorReport r;
  r.samples = std::min(z_sn.size(), z_qg.size());
  r.n_avg = n_avg;
  r.bandwidth_sn = bandwidth_scale * silverman_bandwidth(z_sn);
  r.bandwidth_qg = bandwidth_scale * silverman_bandwidth(z_qg);

  std::vector<double> s_sn = z_sn, s_qg = z_qg;
  std::sort(s_sn.begin(), s_sn.end());
  std::sort(s_qg.begin(), s_qg.end());
  r.sn_below = quantile_sorted(s_sn, 0.5) <= quantile_sorted(s_qg, 0.5);

  // False alarm: QG data on the SN side. False dismissal: SN data on the QG side.
  auto fa = [&](double rho) {
    const double below = smoothed_cdf(z_qg, r.bandwidth_qg, rho);
    return r.sn_below ? below : 1.0 - below;
  };
  auto fd = [&](double rho) {
    const double below = smoothed_cdf(z_sn, r.bandwidth_sn, rho);
    return r.sn_below ? 1.0 - below : below;
  };
  const double h = std::max(r.bandwidth_sn, r.bandwidth_qg);
  double lo = std::min(s_sn.front(), s_qg.front()) - 10.0 * h;
  double hi = std::max(s_sn.back(), s_qg.back()) + 10.0 * h;
  // fa - fd increases with rho when SN lies below.
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const bool fa_high = fa(mid) > fd(mid);
    if (fa_high == r.sn_below) hi = mid;
    else lo = mid;
  }
  r.threshold = 0.5 * (lo + hi);
  r.false_alarm = fa(r.threshold);
  r.false_dismissal = fd(r.threshold);

  const std::size_t qg_below =
      std::upper_bound(s_qg.begin(), s_qg.end(), r.threshold) - s_qg.begin();
  const std::size_t sn_below =
      std::upper_bound(s_sn.begin(), s_sn.end(), r.threshold) - s_sn.begin();
  const std::size_t fa_hits = r.sn_below ? qg_below : s_qg.size() - qg_below;
  const std::size_t fd_hits = r.sn_below ? s_sn.size() - sn_below : sn_below;
  r.false_alarm_empirical = static_cast<double>(fa_hits) / static_cast<double>(s_qg.size());
  r.false_dismissal_empirical = static_cast<double>(fd_hits) / static_cast<double>(s_sn.size());
  r.false_alarm_ci = wilson_interval(fa_hits, s_qg.size());
  r.false_dismissal_ci = wilson_interval(fd_hits, s_sn.size());
  r.separated = r.sn_below ? s_sn.back() < s_qg.front() : s_qg.back() < s_sn.front();
  return r;
}

ErrorReport mc_error_rates(const CovarianceModel &sn, const CovarianceModel &qg,
                           const McOptions &opts) {
  if (opts.samples < 1000) throw std::invalid_argument("mc_error_rates: need at least 1000 samples");
  if (opts.n_avg == 0) throw std::invalid_argument("mc_error_rates: n_avg must be positive");
  const LlrPool pool =
      sample_llr(sn, qg, opts.samples * opts.n_avg, opts.seed, opts.mode, opts.threads);
  return error_rates(group_means(pool.sn, opts.n_avg, opts.samples),
                     group_means(pool.qg, opts.n_avg, opts.samples), opts.n_avg,
                     opts.bandwidth_scale);
}

namespace {
std::size_t ceil_tolerant(double x) {
  return static_cast<std::size_t>(std::ceil(x * (1.0 - 1e-9)));
}
} // namespace

std::size_t naive_repetition_bound(double significance, double accuracy, double ratio) {
  if (!(accuracy > 0.0) || !(ratio > 0.0))
    throw std::invalid_argument("naive_repetition_bound: accuracy and ratio must be positive");
  const double root = significance / (accuracy * ratio);
  return ceil_tolerant(root * root);
}

std::size_t naive_repetition_bound(const CovarianceModel &cov, double significance,
                                   double accuracy) {
  const auto &s = cov.sigma;
  double best = 0.0; // largest Sigma_jk^2 / Var over the entries
  for (Eigen::Index k = 0; k < s.cols(); ++k)
    for (Eigen::Index j = 0; j <= k; ++j) {
      const double c2 = s(j, k) * s(j, k);
      const double var = s(j, j) * s(k, k) + c2;
      if (var > 0.0) best = std::max(best, c2 / var);
    }
  if (!(best > 0.0)) throw std::invalid_argument("naive_repetition_bound: zero covariance");
  return naive_repetition_bound(significance, accuracy, std::sqrt(best));
}

std::vector<SweepRow> squeeze_sweep(const SystemParams &base, const SweepOptions &opts) {
  if (opts.max_avg == 0) throw std::invalid_argument("squeeze_sweep: max_avg must be positive");
  std::vector<SweepRow> rows;
  for (double level : opts.levels_db) {
    if (level < 0.0) throw std::invalid_argument("squeeze_sweep: levels must be >= 0 dB");
    const EllipseParams init = squeezed_thermal_min_variance(level, opts.min_variance);
    const DerivedParams dsn = derive(base.with_model(GravityModel::sn));
    const DerivedParams dqg = derive(base.with_model(GravityModel::qg));
    const CovarianceModel sn =
        build_covariance(dsn, record_moments(dsn, init, opts.grid), opts.grid, opts.kernel, opts.threads);
    const CovarianceModel qg =
        build_covariance(dqg, record_moments(dqg, init, opts.grid), opts.grid, opts.kernel, opts.threads);
    const LlrPool pool =
        sample_llr(sn, qg, opts.samples * opts.max_avg, opts.seed, opts.mode, opts.threads);
    SweepRow row;
    row.level_db = level;
    for (std::size_t k = 1; k <= opts.max_avg; ++k) {
      const ErrorReport r = error_rates(group_means(pool.sn, k, opts.samples),
                                        group_means(pool.qg, k, opts.samples), k);
      row.ladder_false_alarm.push_back(r.false_alarm);
      row.ladder_false_dismissal.push_back(r.false_dismissal);
      if (!row.n_required) {
        row.false_alarm = r.false_alarm;
        row.false_dismissal = r.false_dismissal;
      }
      if (!row.n_required && r.false_alarm < opts.target && r.false_dismissal < opts.target) {
        row.n_required = k;
        if (!opts.full_ladder) break;
      }
    }
    if (!row.n_required)
      row.diagnostic = "target not reached at N_avg = " + std::to_string(opts.max_avg);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::uint64_t covariance_key(const SystemParams &p, const EllipseParams &initial,
                             const RecordGrid &grid, const KernelOptions &opts) {
  std::ostringstream s;
  s << format_config(p) << '\n'
    << fmt17(initial.r) << ' ' << fmt17(initial.theta) << ' ' << fmt17(initial.beta) << '\n'
    << grid.n << ' ' << fmt17(grid.dt) << '\n'
    << static_cast<int>(opts.phase) << ' ' << fmt17(opts.h2_factor) << ' '
    << static_cast<int>(opts.cross_diagonal);
  const std::string text = s.str();
  return fnv1a(text.data(), text.size());
}

namespace {
constexpr char kCovMagic[8] = {'C', 'C', 'S', 'N', 'C', 'O', 'V', '1'};

template <class T> void put(std::string &out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}
} // namespace

void save_covariance(const CovarianceModel &cov, std::uint64_t key,
                     const std::filesystem::path &path) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const std::size_t n = cov.n();
  std::string out(kCovMagic, sizeof kCovMagic);
  put<std::uint64_t>(out, key);
  put<std::uint64_t>(out, n);
  put<double>(out, cov.grid.dt);
  out.reserve(out.size() + n * n * sizeof(double));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      put<double>(out, cov.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, out);
}

std::optional<CovarianceModel> load_covariance(const std::filesystem::path &path,
                                               std::uint64_t key, GravityModel model,
                                               Prescription pr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint64_t stored = 0, n = 0;
  double dt = 0.0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char *>(&stored), 8);
  in.read(reinterpret_cast<char *>(&n), 8);
  in.read(reinterpret_cast<char *>(&dt), 8);
  if (!in || std::memcmp(magic, kCovMagic, 8) != 0 || stored != key) return std::nullopt;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(n, n);
  in.read(reinterpret_cast<char *>(m.data()), static_cast<std::streamsize>(n * n * sizeof(double)));
  if (!in) return std::nullopt;
  RecordGrid grid{static_cast<std::size_t>(n), dt};
  return factorize(Eigen::MatrixXd(m), model, pr, grid);
}

} // namespace ccsn
