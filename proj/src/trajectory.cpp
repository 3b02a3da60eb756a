#include "ccsn/trajectory.hpp"

#include "ccsn/io.hpp"
#include "ccsn/parallel.hpp"
#include "ccsn/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ccsn {

NoisePath NoisePath::generate(std::uint64_t seed, std::uint64_t stream, std::size_t n, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("NoisePath: dt must be positive");
  NoisePath p;
  p.seed = seed;
  p.stream = stream;
  p.dt = dt;
  p.dW.resize(n);
  p.dW_n.resize(n);
  NormalStream meas(seed, stream, StreamTag::measurement);
  NormalStream therm(seed, stream, StreamTag::thermal);
  const double s = std::sqrt(dt);
  for (std::size_t j = 0; j < n; ++j) p.dW[j] = s * meas();
  for (std::size_t j = 0; j < n; ++j) p.dW_n[j] = s * therm();
  return p;
}

NoisePath NoisePath::zero(std::size_t n, double dt) {
  NoisePath p;
  p.dt = dt;
  p.random = false;
  p.dW.assign(n, 0.0);
  p.dW_n.assign(n, 0.0);
  return p;
}

NoisePath NoisePath::coarsen(std::size_t factor) const {
  if (factor == 0 || size() % factor != 0)
    throw std::invalid_argument("NoisePath::coarsen: factor must divide the path length");
  NoisePath c;
  c.seed = seed;
  c.stream = stream;
  c.dt = dt * static_cast<double>(factor);
  c.random = random;
  const std::size_t n = size() / factor;
  c.dW.assign(n, 0.0);
  c.dW_n.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < factor; ++k) {
      c.dW[j] += dW[j * factor + k];
      c.dW_n[j] += dW_n[j * factor + k];
    }
  return c;
}

MeanCoefficients mean_coefficients(const DerivedParams &d, Prescription pr) {
  MeanCoefficients c;
  c.omega_q = d.omega_q;
  c.omega_m2_over_q = d.sys.omega_m * d.sys.omega_m / d.omega_q;
  c.gamma = d.sys.gamma_m;
  c.kick = d.lambda_q * std::sqrt(d.omega_q);
  c.thermal = pr == Prescription::classical
                  ? std::sqrt(2.0 * d.sys.omega_m * d.sys.gamma_m * d.coth_m / d.omega_q)
                  : 0.0;
  c.readout = d.lambda_q * std::sqrt(0.5 * d.omega_q);
  return c;
}

namespace {

void check_tags(const DerivedParams &d, const MomentTrajectory &m) {
  if (m.model() != d.sys.model)
    throw std::invalid_argument("moment trajectory model " + to_string(m.model()) +
                                " does not match parameters (" + to_string(d.sys.model) + ")");
  if (m.prescription() != d.sys.prescription)
    throw std::invalid_argument("moment trajectory prescription " + to_string(m.prescription()) +
                                " does not match parameters (" +
                                to_string(d.sys.prescription) + ")");
}

void check_cover(const MomentTrajectory &m, double last) {
  if (std::abs(m.t_begin()) > 1e-12 || m.t_end() < last - 1e-9 * std::max(1.0, last))
    throw std::invalid_argument("moment trajectory does not cover [0, " + std::to_string(last) +
                                "] s");
}

void run_em(const MeanCoefficients &c, const MeanPlan &plan, const InitialMeans &init,
            const NoisePath &noise, double *x_out, double *p_out, double *y) {
  const std::size_t n = noise.size();
  if (plan.size() != n || std::abs(plan.dt - noise.dt) > 1e-12 * noise.dt)
    throw std::invalid_argument("mean plan does not match the noise path");
  const double dt = noise.dt;
  const double inv = 1.0 / (std::sqrt(2.0) * dt);
  double x = init.x0, p = init.p0;
  NormalStream bridge(noise.seed, noise.stream, StreamTag::bridge);
  std::vector<double> piece;
  for (std::size_t j = 0; j < n; ++j) {
    if (x_out) x_out[j] = x;
    if (p_out) p_out[j] = p;
    const double dw = noise.dW[j];
    y[j] = c.readout * x + dw * inv;
    const std::size_t k = plan.pieces(j);
    const double h = dt / static_cast<double>(k);
    const double dwn = noise.dW_n[j] / static_cast<double>(k);
    piece.assign(k, dw / static_cast<double>(k));
    if (k > 1 && noise.random) {
      // Brownian bridge: iid pieces shifted to the prescribed sum.
      const double s = std::sqrt(h);
      double sum = 0.0;
      for (double &v : piece) sum += (v = s * bridge());
      const double shift = (dw - sum) / static_cast<double>(k);
      for (double &v : piece) v += shift;
    }
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t at = plan.offset[j] + i;
      const double xn = x + c.omega_q * p * h + c.kick * plan.h1[at] * piece[i];
      const double pn = p - c.omega_m2_over_q * x * h - c.gamma * p * h +
                        c.kick * plan.h2[at] * piece[i] + c.thermal * dwn;
      x = xn;
      p = pn;
    }
  }
  if (x_out) x_out[n] = x;
  if (p_out) p_out[n] = p;
}

} // namespace

MeanPlan MeanPlan::plain(const MomentTrajectory &m, std::size_t n, double dt) {
  MeanPlan plan;
  plan.dt = dt;
  if (n > 0) check_cover(m, static_cast<double>(n - 1) * dt);
  plan.offset.resize(n + 1);
  plan.h1.resize(n);
  plan.h2.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const MomentState st = m.at(std::min(static_cast<double>(j) * dt, m.t_end()));
    plan.offset[j] = j;
    plan.h1[j] = st.h1;
    plan.h2[j] = st.h2;
  }
  plan.offset[n] = n;
  return plan;
}

MeanPlan MeanPlan::refine(const DerivedParams &d, const MomentTrajectory &m, std::size_t n,
                          double dt, double tolerance) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("refinement tolerance must be positive");
  MeanPlan plan;
  plan.dt = dt;
  plan.refined = true;
  if (n > 0) check_cover(m, static_cast<double>(n) * dt);
  plan.offset.assign(n + 1, 0);
  auto rate = [&](const MomentState &s) {
    const double scale = std::max({s.h1, std::abs(s.h2), s.h3, 1.0});
    return 2.0 * d.omega_q * (1.0 + d.lambda_q2() * scale);
  };
  for (std::size_t j = 0; j < n; ++j) {
    const double t0 = static_cast<double>(j) * dt;
    const double r = std::max(rate(m.at(t0)), rate(m.at(std::min(t0 + dt, m.t_end()))));
    const double k = std::clamp(std::ceil(dt * r / tolerance), 1.0, 4096.0);
    plan.offset[j + 1] = plan.offset[j] + static_cast<std::size_t>(k);
  }
  plan.h1.resize(plan.offset[n]);
  plan.h2.resize(plan.offset[n]);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = plan.pieces(j);
    const double h = dt / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double t = static_cast<double>(j) * dt + (static_cast<double>(i) + 0.5) * h;
      const MomentState st = m.at(std::min(t, m.t_end()));
      plan.h1[plan.offset[j] + i] = st.h1;
      plan.h2[plan.offset[j] + i] = st.h2;
    }
  }
  return plan;
}

Trajectory simulate(const DerivedParams &d, const MomentTrajectory &moments,
                    const InitialMeans &initial, const NoisePath &noise) {
  check_tags(d, moments);
  return simulate(d, MeanPlan::plain(moments, noise.size(), noise.dt), initial, noise);
}

Trajectory simulate(const DerivedParams &d, const MeanPlan &plan, const InitialMeans &initial,
                    const NoisePath &noise) {
  const std::size_t n = noise.size();
  Trajectory tr;
  tr.dt = noise.dt;
  tr.x.resize(n + 1);
  tr.p.resize(n + 1);
  tr.y.resize(n);
  tr.model = d.sys.model;
  tr.prescription = d.sys.prescription;
  tr.seed = noise.seed;
  tr.stream = noise.stream;
  run_em(mean_coefficients(d, d.sys.prescription), plan, initial, noise, tr.x.data(), tr.p.data(),
         tr.y.data());
  return tr;
}

void simulate_record(const DerivedParams &d, const MomentTrajectory &moments,
                     const InitialMeans &initial, const NoisePath &noise, std::span<double> y) {
  check_tags(d, moments);
  simulate_record(d, MeanPlan::plain(moments, noise.size(), noise.dt), initial, noise, y);
}

void simulate_record(const DerivedParams &d, const MeanPlan &plan, const InitialMeans &initial,
                     const NoisePath &noise, std::span<double> y) {
  if (y.size() != noise.size()) throw std::invalid_argument("simulate_record: size mismatch");
  run_em(mean_coefficients(d, d.sys.prescription), plan, initial, noise, nullptr, nullptr, y.data());
}

std::vector<double> exact_solution_oracle(const DerivedParams &d, const MomentTrajectory &moments,
                                          const InitialMeans &initial, const NoisePath &noise) {
  check_tags(d, moments);
  const std::size_t n = noise.size();
  const double dt = noise.dt;
  const MeanPlan h = MeanPlan::plain(moments, n, dt);
  const MeanCoefficients c = mean_coefficients(d, d.sys.prescription);
  const double w = d.omega_mc;
  const double g = d.sys.gamma_m;
  const double q = d.omega_q / w;
  const double damp = g / (2.0 * w);
  const double th = c.thermal * d.omega_q / w;

  std::vector<double> x(n + 1);
  double A = 0.0, B = 0.0, C = 0.0, D = 0.0;
  for (std::size_t j = 0; j <= n; ++j) {
    const double t = static_cast<double>(j) * dt;
    const double ct = std::cos(w * t), st = std::sin(w * t);
    const double free = initial.x0 * ct + (2.0 * initial.p0 * d.omega_q + g * initial.x0) / (2.0 * w) * st;
    x[j] = std::exp(-0.5 * g * t) * (free + ct * A + st * B + th * (st * C - ct * D));
    if (j == n) break;
    // Left-point contribution of increment j.
    const double e = std::exp(0.5 * g * t);
    const double u = e * c.kick * h.h1[j] * noise.dW[j];
    const double v = e * c.kick * (q * h.h2[j] + damp * h.h1[j]) * noise.dW[j];
    A += u * ct - v * st;
    B += u * st + v * ct;
    C += e * ct * noise.dW_n[j];
    D += e * st * noise.dW_n[j];
  }
  return x;
}

std::size_t EnsembleSpec::samples() const {
  if (!(dt > 0.0) || !(t_obs > 0.0)) throw std::invalid_argument("ensemble grid must be positive");
  const double r = t_obs / dt;
  const double k = std::round(r);
  if (std::abs(r - k) > 1e-9 * r)
    throw std::invalid_argument("T_obs must be an integer multiple of the sampling step");
  return static_cast<std::size_t>(k);
}

void stream_ensemble(const DerivedParams &d, const MomentTrajectory &moments,
                     const EnsembleSpec &spec, unsigned threads,
                     const std::function<void(std::size_t, std::span<const double>)> &consume,
                     std::size_t chunk) {
  if (spec.members == 0) throw std::invalid_argument("ensemble needs at least one member");
  check_tags(d, moments);
  const std::size_t n = spec.samples();
  const MeanPlan h = spec.refined ? MeanPlan::refine(d, moments, n, spec.dt)
                                  : MeanPlan::plain(moments, n, spec.dt);
  const MeanCoefficients c = mean_coefficients(d, d.sys.prescription);
  if (chunk == 0) chunk = 1;
  std::vector<double> buf(std::min(chunk, spec.members) * n);
  for (std::size_t start = 0; start < spec.members; start += chunk) {
    const std::size_t count = std::min(chunk, spec.members - start);
    parallel_for(count, threads, [&](std::size_t k) {
      const NoisePath noise = NoisePath::generate(spec.seed, start + k, n, spec.dt);
      run_em(c, h, spec.initial, noise, nullptr, nullptr, buf.data() + k * n);
    });
    for (std::size_t k = 0; k < count; ++k)
      consume(start + k, std::span<const double>(buf.data() + k * n, n));
  }
}

Ensemble generate_ensemble(const DerivedParams &d, const MomentTrajectory &moments,
                           const EnsembleSpec &spec, unsigned threads) {
  Ensemble e;
  e.params_hash = params_hash(d.sys);
  e.seed = spec.seed;
  e.members = spec.members;
  e.samples = spec.samples();
  e.dt = spec.dt;
  e.y.resize(e.members * e.samples);
  stream_ensemble(d, moments, spec, threads, [&](std::size_t i, std::span<const double> y) {
    std::memcpy(e.y.data() + i * e.samples, y.data(), y.size() * sizeof(double));
  });
  return e;
}

namespace {

constexpr char kMagic[8] = {'C', 'C', 'S', 'N', 'E', 'N', 'S', '1'};

template <class T> T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T> void put(std::ostream &out, T v) {
  v = to_le(v);
  out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T> T get(std::istream &in) {
  T v;
  in.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!in) throw std::runtime_error("ensemble file truncated");
  return to_le(v);
}

} // namespace

void write_ensemble(const Ensemble &e, const std::filesystem::path &path) {
  std::string bytes;
  bytes.reserve(48 + e.y.size() * 8);
  {
    std::ostringstream out(std::ios::binary);
    out.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(out, e.params_hash);
    put<std::uint64_t>(out, e.seed);
    put<std::uint64_t>(out, e.members);
    put<std::uint64_t>(out, e.samples);
    put<double>(out, e.dt);
    for (double v : e.y) put<double>(out, v);
    bytes = std::move(out).str();
  }
  write_file_atomic(path, bytes);
}

Ensemble read_ensemble(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("ensemble file " + path.string() + " not found (run `ensemble`)");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path.string() + " is not an ensemble container");
  Ensemble e;
  e.params_hash = get<std::uint64_t>(in);
  e.seed = get<std::uint64_t>(in);
  e.members = get<std::uint64_t>(in);
  e.samples = get<std::uint64_t>(in);
  e.dt = get<double>(in);
  e.y.resize(e.members * e.samples);
  for (double &v : e.y) v = get<double>(in);
  return e;
}

void write_trajectory_csv(const Trajectory &tr, std::ostream &out) {
  CsvWriter csv(out, {"t", "x", "p", "y"});
  for (std::size_t j = 0; j < tr.y.size(); ++j)
    csv.row({static_cast<double>(j) * tr.dt, tr.x[j], tr.p[j], tr.y[j]});
}

} // namespace ccsn
