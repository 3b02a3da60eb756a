#include "ccsn/inference.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

using namespace ccsn;

namespace {

Eigen::MatrixXd random_spd(int n, std::uint64_t seed) {
  NormalStream s(seed, 0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = s();
  return a * a.transpose() + n * Eigen::MatrixXd::Identity(n, n);
}

CovarianceModel spd_model(int n, std::uint64_t seed, GravityModel m) {
  return factorize(random_spd(n, seed), m, Prescription::classical, RecordGrid{static_cast<std::size_t>(n), 0.1});
}

// Small physical pair on a short grid.
std::pair<CovarianceModel, CovarianceModel> small_pair(double power = 1e-6) {
  const RecordGrid g{60, 0.25};
  const EllipseParams init = squeezed_thermal_min_variance(4.5);
  const SystemParams p = SystemParams::benchmark(power);
  const DerivedParams sn = derive(p.with_model(GravityModel::sn)), qg = derive(p.with_model(GravityModel::qg));
  return {build_covariance(sn, record_moments(sn, init, g), g),
          build_covariance(qg, record_moments(qg, init, g), g)};
}

} // namespace

TEST(Covariance, FactorReproducesMatrix) {
  const auto [sn, qg] = small_pair();
  for (const CovarianceModel *c : {&sn, &qg}) {
    const Eigen::MatrixXd r = c->factor * c->factor.transpose() - c->sigma;
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-10 * c->sigma.cwiseAbs().maxCoeff());
  }
}

TEST(Covariance, ShotDiagonalDominates) {
  const auto [sn, qg] = small_pair();
  for (std::size_t j = 1; j < sn.n(); ++j) EXPECT_GT(sn.sigma(j, j), 0.5 / 0.25);
  EXPECT_NEAR(sn.sigma(0, 0), 0.5 / 0.25, 1e-12);
}

TEST(Covariance, ParallelAssemblyIsIdentical) {
  const RecordGrid g{80, 0.25};
  const DerivedParams d = derive(SystemParams::benchmark(1e-6));
  KernelOptions o;
  o.record_dt = g.dt;
  const RecordKernel k(d, record_moments(d, squeezed_thermal_min_variance(4.5), g), o);
  EXPECT_EQ((assemble_covariance(k, g, 1) - assemble_covariance(k, g, 4)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Covariance, IndefiniteMatrixIsReported) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  a(2, 2) = -1;
  EXPECT_THROW(factorize(a, GravityModel::sn, Prescription::classical, RecordGrid{3, 0.1}), NumericError);
}

TEST(LogDensity, MatchesDirectFormula) {
  const CovarianceModel c = spd_model(6, 3, GravityModel::sn);
  Eigen::VectorXd y(6);
  y << 0.3, -1.2, 0.8, 2.0, -0.1, 0.4;
  const double ref = -0.5 * y.dot(c.sigma.inverse() * y) - 0.5 * std::log(c.sigma.determinant()) -
                     3.0 * std::log(2 * M_PI);
  EXPECT_NEAR(log_density(c, y), ref, 1e-10 * std::abs(ref));
}

TEST(Llr, ModesCombineLogs) {
  EXPECT_DOUBLE_EQ(combine_logs(-10.0, -8.0, LlrMode::ratio), 1.25);
  EXPECT_DOUBLE_EQ(combine_logs(-10.0, -8.0, LlrMode::difference), -2.0);
  EXPECT_EQ(parse_llr_mode("difference"), LlrMode::difference);
  EXPECT_THROW(parse_llr_mode("log"), ConfigError);
}

TEST(Llr, InvariantUnderConsistentReordering) {
  const int n = 8;
  const CovarianceModel a = spd_model(n, 1, GravityModel::sn), b = spd_model(n, 2, GravityModel::qg);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = std::sin(1.3 * i);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
  perm.indices() << 3, 7, 0, 5, 1, 6, 2, 4;
  const RecordGrid g{static_cast<std::size_t>(n), 0.1};
  const CovarianceModel pa = factorize(perm * a.sigma * perm.transpose(), GravityModel::sn, Prescription::classical, g);
  const CovarianceModel pb = factorize(perm * b.sigma * perm.transpose(), GravityModel::qg, Prescription::classical, g);
  const Eigen::VectorXd py = perm * y;
  EXPECT_NEAR(llr(y, a, b), llr(py, pa, pb), 1e-12);
}

TEST(Llr, SamplingIsReproducibleAndThreadInvariant) {
  const auto [sn, qg] = small_pair();
  const LlrPool a = sample_llr(sn, qg, 500, 9, LlrMode::ratio, 1);
  const LlrPool b = sample_llr(sn, qg, 500, 9, LlrMode::ratio, 3);
  EXPECT_EQ(a.sn, b.sn);
  EXPECT_EQ(a.qg, b.qg);
  // Dataset k of the SN model is drawn from stream 2k.
  NormalStream s(9, 2 * 7, StreamTag::gaussian);
  const Eigen::VectorXd y = sample_gaussian(sn, s);
  EXPECT_NEAR(a.sn[7], llr(y, sn, qg), 1e-12);
}

TEST(Llr, SampledCovarianceMatchesModel) {
  const CovarianceModel c = spd_model(4, 5, GravityModel::sn);
  NormalStream s(2, 0, StreamTag::gaussian);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(4, 4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd y = sample_gaussian(c, s);
    acc += y * y.transpose();
  }
  acc /= n;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double se = std::sqrt((c.sigma(i, i) * c.sigma(j, j) + c.sigma(i, j) * c.sigma(i, j)) / n);
      EXPECT_NEAR(acc(i, j), c.sigma(i, j), 5 * se);
    }
}

TEST(Rates, GaussianOverlapOracle) {
  // N(0,1) against N(2,1): balanced rate Phi(-1), threshold 1.
  NormalStream s(4, 0);
  std::vector<double> a(100000), b(100000);
  for (double &v : a) v = s();
  for (double &v : b) v = 2 + s();
  const ErrorReport r = error_rates(a, b, 1);
  EXPECT_TRUE(r.sn_below);
  EXPECT_NEAR(r.threshold, 1.0, 0.02);
  EXPECT_NEAR(r.false_alarm, 0.1587, 0.005);
  EXPECT_NEAR(r.false_dismissal, r.false_alarm, 1e-6);
  EXPECT_NEAR(r.false_alarm_empirical, 0.1587, 0.005);
  EXPECT_LE(r.false_alarm_ci.lo, r.false_alarm_empirical);
  EXPECT_GE(r.false_alarm_ci.hi, r.false_alarm_empirical);
}

TEST(Rates, OrientationFollowsMedians) {
  NormalStream s(4, 1);
  std::vector<double> a(5000), b(5000);
  for (double &v : a) v = 3 + s();
  for (double &v : b) v = s();
  const ErrorReport r = error_rates(a, b, 1);
  EXPECT_FALSE(r.sn_below);
  EXPECT_NEAR(r.false_alarm, r.false_dismissal, 1e-6);
}

TEST(Rates, SeparatedSupports) {
  std::vector<double> a = {0.0, 0.1, 0.2}, b = {5.0, 5.1, 5.3};
  EXPECT_TRUE(error_rates(a, b, 1).separated);
}

TEST(Rates, WilsonInterval) {
  const RateInterval r = wilson_interval(0, 10);
  EXPECT_EQ(r.lo, 0.0);
  EXPECT_NEAR(r.hi, 0.27753, 1e-4);
  const RateInterval h = wilson_interval(50, 100);
  EXPECT_NEAR(h.lo, 0.40383, 1e-4);
  EXPECT_NEAR(h.hi, 0.59617, 1e-4);
}

TEST(Rates, SilvermanBandwidth) {
  std::vector<double> z(1000);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<double>(i);
  const double mean = 499.5;
  double var = 0;
  for (double v : z) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 999.0), iqr = 749.25 - 249.75;
  EXPECT_NEAR(silverman_bandwidth(z), 0.9 * std::min(sd, iqr / 1.34) * std::pow(1000.0, -0.2), 1e-6);
}

TEST(Rates, GroupMeans) {
  const std::vector<double> z = {1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(group_means(z, 2, 3), (std::vector<double>{1.5, 3.5, 5.5}));
  EXPECT_THROW(group_means(z, 2, 4), std::invalid_argument);
}

TEST(Rates, MonotoneInAveraging) {
  const auto [sn, qg] = small_pair();
  double prev = 1.0, prev_hi = 1.0;
  for (std::size_t k : {1u, 2u, 5u, 10u}) {
    McOptions o;
    o.n_avg = k;
    o.samples = 2000;
    o.seed = 3;
    const ErrorReport r = mc_error_rates(sn, qg, o);
    EXPECT_LE(r.false_alarm_ci.lo, prev_hi) << k;
    EXPECT_LE(r.false_alarm, prev + 0.02) << k;
    prev = r.false_alarm;
    prev_hi = r.false_alarm_ci.hi;
  }
}

TEST(Rates, McIsReproducible) {
  const auto [sn, qg] = small_pair();
  McOptions o;
  o.samples = 1000;
  o.seed = 11;
  const ErrorReport a = mc_error_rates(sn, qg, o), b = mc_error_rates(sn, qg, o);
  EXPECT_EQ(a.threshold, b.threshold);
  EXPECT_EQ(a.false_alarm, b.false_alarm);
  EXPECT_EQ(a.false_dismissal, b.false_dismissal);
  o.samples = 999;
  EXPECT_THROW(mc_error_rates(sn, qg, o), std::invalid_argument);
}

TEST(NaiveBound, ClosedForm) {
  EXPECT_EQ(naive_repetition_bound(3.0, 0.1), 1800u);
  EXPECT_EQ(naive_repetition_bound(3.0, 0.2), 450u);
  // At the Cauchy-Schwarz ratio of a real covariance the bound cannot be lower.
  const auto [sn, qg] = small_pair();
  EXPECT_GE(naive_repetition_bound(sn), 1800u);
}

TEST(Cache, RoundTripAndKeying) {
  const auto [sn, qg] = small_pair();
  const auto path = std::filesystem::temp_directory_path() / "ccsn_cov_test.bin";
  save_covariance(sn, 1234, path);
  const auto back = load_covariance(path, 1234, GravityModel::sn, Prescription::classical);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ((back->sigma - sn.sigma).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(back->log_det, sn.log_det, 1e-9 * std::abs(sn.log_det));
  EXPECT_FALSE(load_covariance(path, 1235, GravityModel::sn, Prescription::classical).has_value());
  std::filesystem::remove(path);
  EXPECT_FALSE(load_covariance(path, 1234, GravityModel::sn, Prescription::classical).has_value());
}

TEST(Cache, KeyDependsOnInputs) {
  const SystemParams p = SystemParams::benchmark(1e-7);
  const EllipseParams e = squeezed_thermal_min_variance(4.5);
  const RecordGrid g;
  const std::uint64_t k = covariance_key(p, e, g, {});
  EXPECT_EQ(k, covariance_key(p, e, g, {}));
  EXPECT_NE(k, covariance_key(p.with_model(GravityModel::qg), e, g, {}));
  EXPECT_NE(k, covariance_key(p, squeezed_thermal_min_variance(3.0), g, {}));
  KernelOptions o;
  o.h2_factor = 2;
  EXPECT_NE(k, covariance_key(p, e, g, o));
}
