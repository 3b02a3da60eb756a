// Full-covariance discrimination between the two gravity models: covariance
// assembly and factorization, Gaussian sampling, log-densities, the
// log-likelihood-ratio statistic, Monte-Carlo error rates and squeezing sweeps.
#pragma once

#include "ccsn/moments.hpp"
#include "ccsn/rng.hpp"
#include "ccsn/separable_kernel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ccsn {

struct RecordGrid {
  std::size_t n = 800;
  double dt = 0.05;
  double t_obs() const { return static_cast<double>(n) * dt; }
};

/// Moment history for a record grid, on a step that divides dt.
MomentTrajectory record_moments(const DerivedParams &d, const EllipseParams &initial,
                                const RecordGrid &grid);

struct CovarianceModel {
  GravityModel model = GravityModel::sn;
  Prescription prescription = Prescription::classical;
  RecordGrid grid;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd factor; // lower triangular, sigma = factor factor^T
  double log_det = 0.0;   // log |sigma|

  std::size_t n() const { return grid.n; }
};

/// Sigma_jk on t_j = j dt, j = 0..n-1: kernel blocks plus the 1/(2 dt)
/// shot diagonal. O(n^2) via the separable kernel; rows filled in parallel.
Eigen::MatrixXd assemble_covariance(const RecordKernel &k, const RecordGrid &grid,
                                    unsigned threads = 1);
/// Same matrix with the back-action block by direct quadrature (O(n^3)).
Eigen::MatrixXd assemble_covariance_direct(const RecordKernel &k, const RecordGrid &grid);

/// Symmetrize and factor. Throws NumericError with the smallest eigenvalue
/// when the matrix is not positive definite.
CovarianceModel factorize(Eigen::MatrixXd sigma, GravityModel model, Prescription pr,
                          const RecordGrid &grid);

CovarianceModel build_covariance(const DerivedParams &d, const MomentTrajectory &moments,
                                 const RecordGrid &grid, const KernelOptions &opts = {},
                                 unsigned threads = 1);

Eigen::VectorXd sample_gaussian(const CovarianceModel &cov, NormalStream &noise);

/// log N(Y; 0, Sigma) with the standard sqrt((2 pi)^n |Sigma|) normalization.
double log_density(const CovarianceModel &cov, const Eigen::VectorXd &y);

/// ratio: Z = log f_SN / log f_QG. difference: log f_SN - log f_QG.
enum class LlrMode { ratio, difference };
std::string to_string(LlrMode m);
LlrMode parse_llr_mode(const std::string &s);

double llr(const Eigen::VectorXd &y, const CovarianceModel &sn, const CovarianceModel &qg,
           LlrMode mode = LlrMode::ratio);
double combine_logs(double log_sn, double log_qg, LlrMode mode);

struct LlrPool {
  std::vector<double> sn; // Z of datasets drawn from the SN model
  std::vector<double> qg; // Z of datasets drawn from the QG model
};

/// `count` single-dataset Z values per model. Dataset k of the SN model uses
/// stream 2k, of the QG model stream 2k+1. Independent of `threads`.
LlrPool sample_llr(const CovarianceModel &sn, const CovarianceModel &qg, std::size_t count,
                   std::uint64_t seed, LlrMode mode = LlrMode::ratio, unsigned threads = 1);

/// Means of consecutive groups of `n_avg` values.
std::vector<double> group_means(const std::vector<double> &z, std::size_t n_avg,
                                std::size_t groups);

struct RateInterval {
  double lo = 0.0;
  double hi = 0.0;
};
RateInterval wilson_interval(std::size_t hits, std::size_t total, double z = 1.959963984540054);

double silverman_bandwidth(std::vector<double> z);

struct ErrorReport {
  double threshold = 0.0;
  double false_alarm = 0.0;     // kernel-smoothed
  double false_dismissal = 0.0; // kernel-smoothed
  double false_alarm_empirical = 0.0;
  double false_dismissal_empirical = 0.0;
  RateInterval false_alarm_ci;
  RateInterval false_dismissal_ci;
  std::size_t samples = 0;
  std::size_t n_avg = 1;
  double bandwidth_sn = 0.0;
  double bandwidth_qg = 0.0;
  /// SN favored below the threshold (the orientation of the reported rates).
  bool sn_below = true;
  /// No overlap between the sampled supports; rates are bounds below 1/M.
  bool separated = false;
};

/// Balanced threshold on kernel-smoothed distributions of averaged Z.
ErrorReport error_rates(const std::vector<double> &z_sn, const std::vector<double> &z_qg,
                        std::size_t n_avg, double bandwidth_scale = 1.0);

struct McOptions {
  std::size_t n_avg = 1;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  LlrMode mode = LlrMode::ratio;
  unsigned threads = 1;
  double bandwidth_scale = 1.0;
};

ErrorReport mc_error_rates(const CovarianceModel &sn, const CovarianceModel &qg,
                           const McOptions &opts);

/// Smallest N with significance * sqrt(Var / N) <= accuracy * mean at the
/// given mean / sqrt(Var) ratio (1/sqrt2 is the Cauchy-Schwarz bound).
std::size_t naive_repetition_bound(double significance = 3.0, double accuracy = 0.1,
                                   double ratio = 0.70710678118654752440);
/// Same bound minimized over the entries of a covariance, with the Wick
/// variance Sigma_jj Sigma_kk + Sigma_jk^2.
std::size_t naive_repetition_bound(const CovarianceModel &cov, double significance = 3.0,
                                   double accuracy = 0.1);

struct SweepOptions {
  RecordGrid grid;
  std::vector<double> levels_db;
  double target = 0.01;
  std::size_t samples = 10000;
  std::size_t max_avg = 30;
  std::uint64_t seed = 0;
  LlrMode mode = LlrMode::ratio;
  unsigned threads = 1;
  double min_variance = 1e3;
  KernelOptions kernel;
  /// Keep evaluating up to max_avg after the target is met (figure data).
  bool full_ladder = false;
};

struct SweepRow {
  double level_db = 0.0;
  std::optional<std::size_t> n_required;
  double false_alarm = 0.0; // at n_required, or at max_avg when unreachable
  double false_dismissal = 0.0;
  std::string diagnostic;
  /// Smoothed rates for N_avg = 1, 2, ... as far as they were evaluated.
  std::vector<double> ladder_false_alarm, ladder_false_dismissal;
};

/// For each level, the smallest N_avg with both rates below target.
std::vector<SweepRow> squeeze_sweep(const SystemParams &base, const SweepOptions &opts);

// ---------------------------------------------------------------------------
// Binary matrix cache, keyed on everything that determines Sigma.

std::uint64_t covariance_key(const SystemParams &p, const EllipseParams &initial,
                             const RecordGrid &grid, const KernelOptions &opts);
/// "CCSNCOV1", u64 key, u64 n, f64 dt, then n*n little-endian f64 (row-major).
void save_covariance(const CovarianceModel &cov, std::uint64_t key,
                     const std::filesystem::path &path);
/// Empty when absent or keyed differently.
std::optional<CovarianceModel> load_covariance(const std::filesystem::path &path,
                                               std::uint64_t key, GravityModel model,
                                               Prescription pr);

} // namespace ccsn
