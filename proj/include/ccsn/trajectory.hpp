// Stochastic realizations of the conditional means and the optical record.
//
// Means are carried in zero-point units at omega_q: X = <x>_c / x_zp and
// P = <p>_c / p_zp with x_zp = sqrt(hbar / 2 M omega_q), p_zp = hbar / 2 x_zp.
// The record keeps its physical normalization, y = alpha <x>_c + dW / (sqrt2 dt),
// so its white-noise floor has variance 1 / (2 dt).
//
// Grid: t_j = j dt for j = 0..n. dW_j is the increment over [t_j, t_{j+1}],
// j = 0..n-1, and the record sample y_j pairs x(t_j) with dW_j.
#pragma once

#include "ccsn/moments.hpp"
#include "ccsn/params.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace ccsn {

struct NoisePath {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double dt = 0.0;
  std::vector<double> dW;   // measurement increments, each N(0, dt)
  std::vector<double> dW_n; // thermal increments, independent of dW
  bool random = true;       // false for zero(): refinement adds no noise

  std::size_t size() const { return dW.size(); }

  static NoisePath generate(std::uint64_t seed, std::uint64_t stream, std::size_t n, double dt);
  static NoisePath zero(std::size_t n, double dt);
  /// Sum `factor` consecutive increments: the same Brownian path on a coarser grid.
  NoisePath coarsen(std::size_t factor) const;
};

struct InitialMeans {
  double x0 = 0.0; // zero-point units
  double p0 = 0.0;
};

struct Trajectory {
  double dt = 0.0;
  std::vector<double> x; // n + 1 values
  std::vector<double> p; // n + 1 values
  std::vector<double> y; // n record samples
  GravityModel model = GravityModel::sn;
  Prescription prescription = Prescription::classical;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Coefficients of the mean equations in zero-point units.
struct MeanCoefficients {
  double omega_q = 0.0;
  double omega_m2_over_q = 0.0; // omega_m^2 / omega_q
  double gamma = 0.0;
  double kick = 0.0;    // Lambda_q sqrt(omega_q), multiplies h1 dW and h2 dW
  double thermal = 0.0; // sqrt(2 omega_m gamma coth_m / omega_q), 0 for quantum
  double readout = 0.0; // alpha x_zp = Lambda_q sqrt(omega_q / 2)
};

MeanCoefficients mean_coefficients(const DerivedParams &d, Prescription pr);

/// How the means are stepped between record samples. A plain plan takes one
/// Euler-Maruyama step per sample with left-point moments. A refined plan
/// splits each measurement increment by a Brownian bridge into pieces that are
/// short against the moment relaxation and uses piece-midpoint moments, so
/// the record statistics follow the continuous-time kernel even when the
/// moments move appreciably within one sample.
struct MeanPlan {
  double dt = 0.0;
  bool refined = false;
  std::vector<std::size_t> offset; // n + 1 prefix sums of the piece counts
  std::vector<double> h1, h2;      // per piece

  std::size_t size() const { return offset.empty() ? 0 : offset.size() - 1; }
  std::size_t pieces(std::size_t j) const { return offset[j + 1] - offset[j]; }

  static MeanPlan plain(const MomentTrajectory &m, std::size_t n, double dt);
  /// Pieces per sample: ceil(dt * 2 omega_q (1 + Lambda_q^2 max(h1, |h2|, h3)) / tolerance).
  static MeanPlan refine(const DerivedParams &d, const MomentTrajectory &m, std::size_t n, double dt,
                         double tolerance = 0.02);
};

/// Euler-Maruyama integration of the mean equations with moments sampled on
/// the record grid (six-point interpolation off the moment nodes).
Trajectory simulate(const DerivedParams &d, const MomentTrajectory &moments,
                    const InitialMeans &initial, const NoisePath &noise);

/// Same update, writing only the record into `y` (length noise.size()).
void simulate_record(const DerivedParams &d, const MomentTrajectory &moments,
                     const InitialMeans &initial, const NoisePath &noise, std::span<double> y);

/// Integration on an explicit plan; the bridge pieces of a refined plan are
/// drawn from the noise path's (seed, stream).
Trajectory simulate(const DerivedParams &d, const MeanPlan &plan, const InitialMeans &initial,
                    const NoisePath &noise);
void simulate_record(const DerivedParams &d, const MeanPlan &plan, const InitialMeans &initial,
                     const NoisePath &noise, std::span<double> y);

/// <x>_c(t_j) in zero-point units from the closed-form Green's function
/// solution, with the Ito integrals evaluated as left-point sums over the
/// same increments. Returns all j = 0..n.
std::vector<double> exact_solution_oracle(const DerivedParams &d, const MomentTrajectory &moments,
                                          const InitialMeans &initial, const NoisePath &noise);

struct EnsembleSpec {
  double dt = 0.05;
  double t_obs = 40.0;
  std::uint64_t seed = 0;
  std::size_t members = 0;
  InitialMeans initial;
  bool refined = true;

  std::size_t samples() const;
};

/// Fully stored ensemble, trajectory-major record matrix.
struct Ensemble {
  std::uint64_t params_hash = 0;
  std::uint64_t seed = 0;
  std::size_t members = 0;
  std::size_t samples = 0;
  double dt = 0.0;
  std::vector<double> y; // members * samples

  std::span<const double> member(std::size_t i) const {
    return {y.data() + i * samples, samples};
  }
};

/// Records are handed to `consume(index, y)` strictly in index order, in
/// chunks generated in parallel. Outputs never depend on `threads`.
void stream_ensemble(const DerivedParams &d, const MomentTrajectory &moments,
                     const EnsembleSpec &spec, unsigned threads,
                     const std::function<void(std::size_t, std::span<const double>)> &consume,
                     std::size_t chunk = 256);

Ensemble generate_ensemble(const DerivedParams &d, const MomentTrajectory &moments,
                           const EnsembleSpec &spec, unsigned threads);

/// Binary container: "CCSNENS1", u64 params hash, u64 seed, u64 N, u64 n,
/// f64 dt, then N * n little-endian f64.
void write_ensemble(const Ensemble &e, const std::filesystem::path &path);
Ensemble read_ensemble(const std::filesystem::path &path);

void write_trajectory_csv(const Trajectory &tr, std::ostream &out);

} // namespace ccsn
