// Command-line front end. Every subcommand writes its artifacts into --out
// together with a <command>.manifest.json describing how they were made.

#include "ccsn/inference.hpp"
#include "ccsn/io.hpp"
#include "ccsn/moments.hpp"
#include "ccsn/params.hpp"
#include "ccsn/separable_kernel.hpp"
#include "ccsn/trajectory.hpp"
#include "ccsn/wvspec.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ccsn;
using json = nlohmann::ordered_json;

namespace {

constexpr const char *kToolVersion = "0.1.0";

enum Exit { ok = 0, config_error = 2, missing_artifact = 3, numeric_error = 4 };

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  unsigned threads = 1;
  std::string model;
  std::string prescription;
  int figure = 0;
  double power_nw = 0.0; // > 0 overrides the configuration
};

// Initial squeezed thermal state and record grid shared by several commands.
struct StateOptions {
  double squeeze_db = 4.5;
  double min_variance = 1e3;
  double theta = M_PI / 2;
  double t_obs = 40.0;
  double dt = 0.05;
};

void add_common(CLI::App *app, Common &c) {
  app->add_option("--config", c.config, "key = value configuration file (default: benchmark mechanics at 100 nW)");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--threads", c.threads, "worker threads (outputs do not depend on it)")
      ->check(CLI::PositiveNumber);
  app->add_option("--model", c.model, "gravity model override")->check(CLI::IsMember({"sn", "qg"}));
  app->add_option("--prescription", c.prescription, "thermal prescription override")
      ->check(CLI::IsMember({"classical", "quantum"}));
  app->add_option("--figure", c.figure, "emit the data series of one figure");
  app->add_option("--power-nw", c.power_nw, "intracavity power override (nW)");
}

void add_state(CLI::App *app, StateOptions &s) {
  app->add_option("--squeeze-db", s.squeeze_db, "initial squeezing level (dB)");
  app->add_option("--min-variance", s.min_variance, "minor quadrature variance (zero-point units)");
  app->add_option("--theta", s.theta, "initial squeezing angle (rad)");
  app->add_option("--t-obs", s.t_obs, "observation time (s)");
  app->add_option("--dt", s.dt, "sampling step (s)");
}

SystemParams load_params(const Common &c) {
  SystemParams p = c.config.empty() ? SystemParams::benchmark(1e-7) : load_config(c.config);
  if (c.power_nw > 0.0) p.power = c.power_nw * 1e-9;
  if (!c.model.empty()) p.model = parse_model(c.model);
  if (!c.prescription.empty()) p.prescription = parse_prescription(c.prescription);
  (void)derive(p);
  return p;
}

RecordGrid record_grid(const StateOptions &s) {
  EnsembleSpec e;
  e.dt = s.dt;
  e.t_obs = s.t_obs;
  return {e.samples(), s.dt};
}

EllipseParams initial_state(const StateOptions &s) {
  return squeezed_thermal_min_variance(s.squeeze_db, s.min_variance, s.theta);
}

void require_figure(const Common &c, std::initializer_list<int> allowed, const std::string &cmd) {
  if (c.figure == 0) return;
  for (int f : allowed)
    if (f == c.figure) return;
  throw ConfigError("figure " + std::to_string(c.figure) + " is not produced by `" + cmd + "`");
}

class Run {
public:
  Run(std::string command, const Common &c, const SystemParams &p)
      : common_(c), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.config_hash = hex64(params_hash(p));
    manifest_.seed = c.seed;
    manifest_.tool_version = kToolVersion;
    fs::create_directories(c.out);
  }

  void grid(const std::string &k, const std::string &v) { manifest_.grid.emplace_back(k, v); }
  void grid(const std::string &k, double v) { grid(k, fmt17(v)); }

  fs::path path(const std::string &name) const { return fs::path(common_.out) / name; }

  void emit(const std::string &name, const std::string &content) {
    write_file_atomic(path(name), content);
    manifest_.outputs.push_back(path(name).string());
  }
  void record_output(const fs::path &p) { manifest_.outputs.push_back(p.string()); }

  void finish() {
    manifest_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file_atomic(path(manifest_.command + ".manifest.json"), manifest_.to_json());
  }

private:
  const Common &common_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

json derived_json(const DerivedParams &d) {
  json j;
  j["model"] = to_string(d.sys.model);
  j["prescription"] = to_string(d.sys.prescription);
  j["omega_m"] = d.sys.omega_m;
  j["omega_sn_eff"] = d.omega_sn_eff;
  j["omega_q"] = d.omega_q;
  j["omega_q_hz"] = d.omega_q / constants::two_pi;
  j["omega_mc"] = d.omega_mc;
  j["loss_angle"] = d.loss_angle;
  j["omega_0"] = d.omega_0;
  j["gamma_cav"] = d.gamma_cav;
  j["coupling_g"] = d.coupling_g;
  j["alpha"] = d.alpha;
  j["lambda_q"] = d.lambda_q;
  j["lambda_q2"] = d.lambda_q2();
  j["lambda_star"] = d.lambda_star;
  j["q_m"] = d.q_m;
  j["q_q"] = d.q_q;
  j["kappa"] = d.kappa;
  j["lambda_th"] = d.lambda_th;
  j["coth_m"] = d.coth_m;
  j["coth_q"] = d.coth_q;
  j["relaxation_rate"] = d.relaxation_rate();
  return j;
}

std::string csv_text(const std::vector<std::string> &cols,
                     const std::vector<std::vector<double>> &rows) {
  std::ostringstream s;
  CsvWriter w(s, cols);
  for (const auto &r : rows) w.row(r);
  return s.str();
}

// ---------------------------------------------------------------------------

int cmd_derive(const Common &c) {
  require_figure(c, {1}, "derive");
  const SystemParams p = load_params(c);
  Run run("derive", c, p);
  json report;
  report["config"] = format_config(p);
  json entries = json::array();
  for (GravityModel m : {GravityModel::sn, GravityModel::qg})
    for (Prescription pr : {Prescription::classical, Prescription::quantum}) {
      const DerivedParams d = derive(p.with_model(m).with_prescription(pr));
      json j = derived_json(d);
      if (m == GravityModel::sn) {
        j["log_ratio_db"] = log_ratio(derive(p.with_prescription(pr)), pr);
      }
      entries.push_back(j);
    }
  report["derived"] = entries;
  const DerivedParams dq = derive(p.with_model(GravityModel::sn).with_prescription(Prescription::quantum));
  const LogRatioOptimum opt = max_log_ratio_quantum(dq);
  report["max_log_ratio_quantum"] = {{"value_db", opt.value_db}, {"lambda_q", opt.lambda_q}};
  run.emit("derived.json", report.dump(2) + "\n");

  if (c.figure == 1) {
    // Classical logarithmic ratio against temperature for four powers.
    const std::vector<double> powers = {1e-8, 1e-7, 1e-6, 1e-5};
    std::vector<std::vector<double>> rows;
    for (int i = 0; i <= 60; ++i) {
      const double t = std::pow(10.0, -4.0 + 0.1 * i);
      std::vector<double> r = {t};
      for (double pw : powers) {
        const SystemParams q = p.with_model(GravityModel::sn)
                                   .with_prescription(Prescription::classical)
                                   .with_power(pw)
                                   .with_temperature(t);
        r.push_back(log_ratio(derive(q), Prescription::classical));
      }
      rows.push_back(r);
    }
    run.emit("fig1.csv", csv_text({"temperature_k", "s_10nw", "s_100nw", "s_1uw", "s_10uw"}, rows));
  }
  run.finish();
  return ok;
}

int cmd_moments(const Common &c, StateOptions s) {
  require_figure(c, {3, 6}, "moments");
  if (c.figure == 3 || c.figure == 6) s.t_obs = std::max(s.t_obs, 1000.0);
  const SystemParams p = load_params(c);
  const DerivedParams d = derive(p);
  Run run("moments", c, p);
  run.grid("t_obs", s.t_obs);
  run.grid("dt", s.dt);
  run.grid("squeeze_db", s.squeeze_db);
  run.grid("min_variance", s.min_variance);
  run.grid("theta", s.theta);
  const EllipseParams e0 = initial_state(s);
  const MomentState s0 = ellipse_to_moments(e0);
  const double step = moment_step_for_sampling(d, s.dt, s0);
  const auto stride = static_cast<std::size_t>(std::llround(s.dt / step));
  const MomentTrajectory m = integrate_moments(s0, d, p.prescription, s.t_obs, step, stride);

  std::vector<std::vector<double>> rows;
  for (const MomentState &st : m.states()) rows.push_back({st.t, st.h1, st.h2, st.h3, sqz_db(st)});
  run.emit("moments.csv", csv_text({"t", "h1", "h2", "h3", "sqz_db"}, rows));

  if (c.figure == 3) {
    std::vector<std::vector<double>> f;
    for (const MomentState &st : m.states()) f.push_back({st.t, st.h1});
    run.emit("fig3.csv", csv_text({"t", "h1"}, f));
  }
  if (c.figure == 6) {
    std::vector<std::vector<double>> f;
    for (const MomentState &st : m.states()) {
      double envelope = std::nan("");
      try {
        envelope = analytic_case2(e0, d, st.t).h1_max;
      } catch (const std::invalid_argument &) {
      }
      f.push_back({st.t, st.h1, envelope});
    }
    run.emit("fig6.csv", csv_text({"t", "h1", "h1_max"}, f));
  }
  run.finish();
  return ok;
}

int cmd_trajectory(const Common &c, const StateOptions &s, std::uint64_t stream) {
  require_figure(c, {}, "trajectory");
  const SystemParams p = load_params(c);
  const DerivedParams d = derive(p);
  Run run("trajectory", c, p);
  run.grid("t_obs", s.t_obs);
  run.grid("dt", s.dt);
  run.grid("squeeze_db", s.squeeze_db);
  run.grid("stream", std::to_string(stream));
  const RecordGrid g = record_grid(s);
  const MomentTrajectory m = record_moments(d, initial_state(s), g);
  const NoisePath noise = NoisePath::generate(c.seed, stream, g.n, g.dt);
  const Trajectory tr = simulate(d, MeanPlan::refine(d, m, g.n, g.dt), {}, noise);
  std::ostringstream out;
  write_trajectory_csv(tr, out);
  run.emit("trajectory.csv", out.str());
  run.finish();
  return ok;
}

int cmd_ensemble(const Common &c, const StateOptions &s, std::size_t members) {
  require_figure(c, {}, "ensemble");
  const SystemParams p = load_params(c);
  const DerivedParams d = derive(p);
  Run run("ensemble", c, p);
  run.grid("t_obs", s.t_obs);
  run.grid("dt", s.dt);
  run.grid("squeeze_db", s.squeeze_db);
  run.grid("members", std::to_string(members));
  const RecordGrid g = record_grid(s);
  const MomentTrajectory m = record_moments(d, initial_state(s), g);
  EnsembleSpec spec;
  spec.dt = s.dt;
  spec.t_obs = s.t_obs;
  spec.seed = c.seed;
  spec.members = members;
  const Ensemble e = generate_ensemble(d, m, spec, c.threads);
  const std::string name = "ensemble_" + to_string(p.model) + ".bin";
  write_ensemble(e, run.path(name));
  run.record_output(run.path(name));
  json j;
  j["model"] = to_string(p.model);
  j["members"] = e.members;
  j["samples"] = e.samples;
  j["dt"] = e.dt;
  j["params_hash"] = hex64(e.params_hash);
  run.emit("ensemble_" + to_string(p.model) + ".json", j.dump(2) + "\n");
  run.finish();
  return ok;
}

struct WvCliOptions {
  double t = -1.0; // default: middle of the record
  double omega_min = 0.0;
  double omega_max = 0.0; // default: 1.5 (omega_q + omega_m)
  std::size_t omega_count = 401;
  std::string from_ensemble;
  std::string normalization = "raw";
  std::string delta = "discrete";
};

WvOptions wv_options(const WvCliOptions &w) {
  WvOptions o;
  if (w.normalization == "floor") o.normalization = WvNormalization::floor_normalized;
  else if (w.normalization != "raw") throw ConfigError("normalization must be raw or floor");
  if (w.delta == "continuous") o.delta = DeltaConvention::continuous;
  else if (w.delta != "discrete") throw ConfigError("delta must be continuous or discrete");
  return o;
}

int cmd_wvspec(const Common &c, const StateOptions &s, const WvCliOptions &w) {
  require_figure(c, {9}, "wvspec");
  const SystemParams p = load_params(c);
  const DerivedParams d = derive(p);
  Run run("wvspec", c, p);
  const RecordGrid g = record_grid(s);
  const double t = w.t < 0.0 ? 0.5 * static_cast<double>(g.n - 1) * g.dt : w.t;
  const auto j = static_cast<std::size_t>(std::llround(t / g.dt));
  if (j >= g.n) throw ConfigError("--t lies outside the record");
  const double wmax = w.omega_max > 0.0 ? w.omega_max : 1.5 * (d.omega_q + d.sys.omega_m);
  const std::vector<double> omega = uniform_grid(w.omega_min, wmax, w.omega_count);
  const WvOptions opts = wv_options(w);
  run.grid("t", static_cast<double>(j) * g.dt);
  run.grid("dt", g.dt);
  run.grid("omega_max", wmax);
  run.grid("omega_count", std::to_string(w.omega_count));
  run.grid("normalization", w.normalization);
  run.grid("delta", w.delta);

  // Sidebands exist only when omega_q differs from omega_m.
  const double bin = omega.size() > 1 ? omega[1] - omega[0] : 0.0;
  auto sideband = [&](double om) {
    if (p.model != GravityModel::sn || d.omega_sn_eff <= 0.0) return 0.0;
    for (double target : {d.omega_q - d.sys.omega_m, d.omega_q + d.sys.omega_m})
      if (std::abs(om - target) <= 0.5 * bin) return 1.0;
    return 0.0;
  };

  std::vector<std::vector<double>> rows;
  if (!w.from_ensemble.empty()) {
    run.grid("from_ensemble", w.from_ensemble);
    const Ensemble e = read_ensemble(w.from_ensemble);
    if (std::abs(e.dt - g.dt) > 1e-12 * g.dt || e.samples != g.n)
      throw ConfigError("ensemble grid does not match --dt / --t-obs");
    const WvEnsembleResult r = wv_from_ensemble(e, j, omega, opts);
    for (std::size_t i = 0; i < omega.size(); ++i)
      rows.push_back({omega[i], r.mean.value[i], std::sqrt(r.variance[i]), sideband(omega[i])});
    run.emit("wv_" + to_string(p.model) + ".csv",
             csv_text({"omega", "value", "trial_std", "sideband"}, rows));
  } else {
    run.grid("squeeze_db", s.squeeze_db);
    const MomentTrajectory m = record_moments(d, initial_state(s), g);
    KernelOptions ko;
    ko.record_dt = g.dt;
    const RecordKernel k(d, m, ko);
    const WvSlice sl = wv_from_kernel(k, j, g.n, g.dt, omega, opts);
    for (std::size_t i = 0; i < omega.size(); ++i)
      rows.push_back({omega[i], sl.value[i], sideband(omega[i])});
    run.emit("wv_" + to_string(p.model) + ".csv", csv_text({"omega", "value", "sideband"}, rows));
  }

  if (c.figure == 9) {
    // Analytic slices of both models on the same grid.
    std::vector<std::vector<double>> f(omega.size());
    std::vector<WvSlice> slices;
    for (GravityModel gm : {GravityModel::sn, GravityModel::qg}) {
      const DerivedParams dm = derive(p.with_model(gm));
      KernelOptions ko;
      ko.record_dt = g.dt;
      const RecordKernel k(dm, record_moments(dm, initial_state(s), g), ko);
      slices.push_back(wv_from_kernel(k, j, g.n, g.dt, omega, opts));
    }
    for (std::size_t i = 0; i < omega.size(); ++i)
      f[i] = {omega[i], slices[0].value[i], slices[1].value[i]};
    run.emit("fig9.csv", csv_text({"omega", "wv_sn", "wv_qg"}, f));
  }
  run.finish();
  return ok;
}

struct CovCliOptions {
  double h2_factor = 1.0;
  std::string phase = "derived";
};

KernelOptions kernel_options(const CovCliOptions &o) {
  KernelOptions k;
  k.h2_factor = o.h2_factor;
  if (o.phase == "inside") k.phase = PhasePlacement::inside;
  else if (o.phase != "derived") throw ConfigError("phase must be derived or inside");
  return k;
}

fs::path cache_dir(const Common &c) {
  if (const char *env = std::getenv("CCSN_CACHE_DIR"); env && *env) return env;
  return fs::path(c.out) / "cache";
}

fs::path cache_file(const Common &c, const SystemParams &p, std::uint64_t key) {
  return cache_dir(c) / ("cov_" + to_string(p.model) + "_" + to_string(p.prescription) + "_" +
                         hex64(key) + ".bin");
}

int cmd_covariance(const Common &c, const StateOptions &s, const CovCliOptions &co) {
  require_figure(c, {}, "covariance");
  const SystemParams base = load_params(c);
  Run run("covariance", c, base);
  const RecordGrid g = record_grid(s);
  const EllipseParams init = initial_state(s);
  const KernelOptions ko = kernel_options(co);
  run.grid("n", std::to_string(g.n));
  run.grid("dt", g.dt);
  run.grid("squeeze_db", s.squeeze_db);
  run.grid("min_variance", s.min_variance);
  run.grid("theta", s.theta);
  run.grid("h2_factor", co.h2_factor);
  run.grid("phase", co.phase);
  std::vector<GravityModel> models;
  if (c.model.empty()) models = {GravityModel::sn, GravityModel::qg};
  else models = {base.model};
  for (GravityModel gm : models) {
    const SystemParams p = base.with_model(gm);
    const DerivedParams d = derive(p);
    const CovarianceModel cov = build_covariance(d, record_moments(d, init, g), g, ko, c.threads);
    const std::uint64_t key = covariance_key(p, init, g, ko);
    const fs::path file = cache_file(c, p, key);
    save_covariance(cov, key, file);
    json j;
    j["model"] = to_string(gm);
    j["prescription"] = to_string(p.prescription);
    j["n"] = g.n;
    j["dt"] = g.dt;
    j["log_det"] = cov.log_det;
    j["min_diagonal"] = cov.sigma.diagonal().minCoeff();
    j["max_diagonal"] = cov.sigma.diagonal().maxCoeff();
    j["naive_repetition_bound"] = naive_repetition_bound(cov);
    j["cache_key"] = hex64(key);
    j["cache_file"] = file.filename().string();
    run.emit("covariance_" + to_string(gm) + ".json", j.dump(2) + "\n");
  }
  run.finish();
  return ok;
}

std::vector<double> parse_list(const std::string &s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      v.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw ConfigError("cannot parse list item '" + item + "'");
    }
  }
  if (v.empty()) throw ConfigError("empty list");
  return v;
}

json report_json(const ErrorReport &r) {
  json j;
  j["n_avg"] = r.n_avg;
  j["samples"] = r.samples;
  j["threshold"] = r.threshold;
  j["false_alarm"] = r.false_alarm;
  j["false_dismissal"] = r.false_dismissal;
  j["false_alarm_empirical"] = r.false_alarm_empirical;
  j["false_dismissal_empirical"] = r.false_dismissal_empirical;
  j["false_alarm_ci"] = {r.false_alarm_ci.lo, r.false_alarm_ci.hi};
  j["false_dismissal_ci"] = {r.false_dismissal_ci.lo, r.false_dismissal_ci.hi};
  j["bandwidth_sn"] = r.bandwidth_sn;
  j["bandwidth_qg"] = r.bandwidth_qg;
  j["sn_below_threshold"] = r.sn_below;
  j["separated"] = r.separated;
  return j;
}

// Kernel density of z on a grid.
std::vector<double> kde(const std::vector<double> &z, double h, const std::vector<double> &grid) {
  std::vector<double> out(grid.size(), 0.0);
  const double norm = 1.0 / (static_cast<double>(z.size()) * h * std::sqrt(2.0 * M_PI));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double acc = 0.0;
    for (double v : z) {
      const double u = (grid[i] - v) / h;
      if (std::abs(u) < 8.0) acc += std::exp(-0.5 * u * u);
    }
    out[i] = acc * norm;
  }
  return out;
}

struct InferCliOptions {
  std::size_t samples = 100000;
  std::string navg = "1,10";
  std::string llr = "ratio";
  double bandwidth_scale = 1.0;
  std::size_t grid_points = 400;
};

int cmd_infer(const Common &c, const StateOptions &s, const CovCliOptions &co,
              const InferCliOptions &io) {
  require_figure(c, {10}, "infer");
  const SystemParams base = load_params(c);
  Run run("infer", c, base);
  const RecordGrid g = record_grid(s);
  const EllipseParams init = initial_state(s);
  const KernelOptions ko = kernel_options(co);
  const LlrMode mode = parse_llr_mode(io.llr);
  std::vector<std::size_t> navg;
  for (double v : parse_list(io.navg)) {
    if (v < 1.0 || v != std::floor(v)) throw ConfigError("--navg entries must be positive integers");
    navg.push_back(static_cast<std::size_t>(v));
  }
  if (io.samples < 1000) throw ConfigError("--samples must be at least 1000");
  run.grid("n", std::to_string(g.n));
  run.grid("dt", g.dt);
  run.grid("squeeze_db", s.squeeze_db);
  run.grid("samples", std::to_string(io.samples));
  run.grid("navg", io.navg);
  run.grid("llr", io.llr);
  run.grid("bandwidth_scale", io.bandwidth_scale);

  std::vector<CovarianceModel> covs;
  for (GravityModel gm : {GravityModel::sn, GravityModel::qg}) {
    const SystemParams p = base.with_model(gm);
    const std::uint64_t key = covariance_key(p, init, g, ko);
    const fs::path file = cache_file(c, p, key);
    auto cov = load_covariance(file, key, gm, p.prescription);
    if (!cov)
      throw MissingArtifact("covariance matrix for model " + to_string(gm) + " not found at " +
                            file.string() + " (run `covariance` with the same options)");
    covs.push_back(std::move(*cov));
  }
  std::size_t max_avg = 1;
  for (std::size_t k : navg) max_avg = std::max(max_avg, k);
  const LlrPool pool = sample_llr(covs[0], covs[1], io.samples * max_avg, c.seed, mode, c.threads);

  json report;
  report["model_pair"] = "sn/qg";
  report["prescription"] = to_string(base.prescription);
  report["llr"] = to_string(mode);
  report["naive_repetition_bound"] = naive_repetition_bound(covs[0]);
  json reports = json::array();
  std::vector<std::vector<double>> hist;
  for (std::size_t k : navg) {
    const std::vector<double> zs = group_means(pool.sn, k, io.samples);
    const std::vector<double> zq = group_means(pool.qg, k, io.samples);
    const ErrorReport r = error_rates(zs, zq, k, io.bandwidth_scale);
    reports.push_back(report_json(r));
    auto [lo_s, hi_s] = std::minmax_element(zs.begin(), zs.end());
    auto [lo_q, hi_q] = std::minmax_element(zq.begin(), zq.end());
    const double lo = std::min(*lo_s, *lo_q), hi = std::max(*hi_s, *hi_q);
    const std::vector<double> zgrid = uniform_grid(lo, hi, io.grid_points);
    const auto fs_ = kde(zs, r.bandwidth_sn, zgrid);
    const auto fq = kde(zq, r.bandwidth_qg, zgrid);
    for (std::size_t i = 0; i < zgrid.size(); ++i)
      hist.push_back({static_cast<double>(k), zgrid[i], fs_[i], fq[i]});
  }
  report["reports"] = reports;
  run.emit("infer.json", report.dump(2) + "\n");
  const std::string zcsv = csv_text({"n_avg", "z", "density_sn", "density_qg"}, hist);
  run.emit("infer_z.csv", zcsv);
  if (c.figure == 10) run.emit("fig10.csv", zcsv);
  run.finish();
  return ok;
}

struct SweepCliOptions {
  std::string levels = "0,1.5,3,4.5";
  std::size_t samples = 10000;
  std::size_t max_avg = 30;
  double target = 0.01;
  std::string llr = "ratio";
};

int cmd_sweep(const Common &c, const StateOptions &s, const CovCliOptions &co,
              const SweepCliOptions &so) {
  require_figure(c, {11}, "sweep");
  const SystemParams base = load_params(c);
  Run run("sweep", c, base);
  SweepOptions o;
  o.grid = record_grid(s);
  o.levels_db = parse_list(so.levels);
  o.target = so.target;
  o.samples = so.samples;
  o.max_avg = so.max_avg;
  o.seed = c.seed;
  o.mode = parse_llr_mode(so.llr);
  o.threads = c.threads;
  o.min_variance = s.min_variance;
  o.kernel = kernel_options(co);
  o.full_ladder = c.figure == 11;
  if (o.samples < 1000) throw ConfigError("--samples must be at least 1000");
  run.grid("levels", so.levels);
  run.grid("samples", std::to_string(so.samples));
  run.grid("max_avg", std::to_string(so.max_avg));
  run.grid("target", so.target);
  run.grid("min_variance", s.min_variance);
  const std::vector<SweepRow> rows = squeeze_sweep(base, o);
  std::vector<std::vector<double>> table, ladder;
  for (const SweepRow &r : rows) {
    table.push_back({r.level_db, r.n_required ? static_cast<double>(*r.n_required) : -1.0,
                     r.false_alarm, r.false_dismissal});
    if (!r.diagnostic.empty()) std::cerr << "sweep: " << fmt17(r.level_db) << " dB: " << r.diagnostic << "\n";
    for (std::size_t k = 0; k < r.ladder_false_alarm.size(); ++k)
      ladder.push_back({r.level_db, static_cast<double>(k + 1), r.ladder_false_alarm[k],
                        r.ladder_false_dismissal[k]});
  }
  run.emit("sweep.csv", csv_text({"level_db", "n_required", "false_alarm", "false_dismissal"}, table));
  if (c.figure == 11)
    run.emit("fig11.csv", csv_text({"level_db", "n_avg", "false_alarm", "false_dismissal"}, ladder));
  run.finish();
  return ok;
}

// Fast internal consistency checks; exit 4 on any failure.
int cmd_selftest(const Common &c) {
  require_figure(c, {}, "selftest");
  const SystemParams p = load_params(c);
  Run run("selftest", c, p);
  std::vector<std::pair<std::string, bool>> checks;
  const DerivedParams d = derive(p.with_prescription(Prescription::classical));

  {
    const MomentState eq = steady_state_classical(d);
    const double tr = 20.0 / d.relaxation_rate();
    const double step = default_moment_step(d);
    const MomentTrajectory m =
        integrate_moments(MomentState{}, d, Prescription::classical, tr, step, 1u << 30);
    const MomentState end = m[m.size() - 1];
    const double rel = std::max({std::abs(end.h1 / eq.h1 - 1.0), std::abs(end.h3 / eq.h3 - 1.0)});
    checks.emplace_back("steady_state_closure", rel < 1e-6);
  }
  checks.emplace_back("naive_bound_1800", naive_repetition_bound() == 1800);
  {
    const RecordGrid g{40, 0.5};
    const MomentTrajectory m = record_moments(d, squeezed_thermal(3.0, 10.0), g);
    KernelOptions ko;
    ko.record_dt = g.dt;
    const RecordKernel k(d, m, ko);
    const Eigen::MatrixXd a = assemble_covariance(k, g), b = assemble_covariance_direct(k, g);
    checks.emplace_back("separable_vs_direct",
                        ((a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff()) < 1e-8);
  }
  {
    NormalStream a(1, 2, StreamTag::gaussian), b(1, 2, StreamTag::gaussian);
    bool same = true;
    for (int i = 0; i < 100; ++i) same = same && a() == b();
    checks.emplace_back("rng_reproducible", same);
  }
  bool all = true;
  std::ostringstream text;
  for (const auto &[name, pass] : checks) {
    text << name << ": " << (pass ? "PASS" : "FAIL") << "\n";
    all = all && pass;
  }
  std::cout << text.str();
  run.emit("selftest.txt", text.str());
  run.finish();
  return all ? ok : numeric_error;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Continuous-measurement gravity-model laboratory"};
  app.require_subcommand(1);
  Common common;
  StateOptions state;
  CovCliOptions cov;

  auto *derive_cmd = app.add_subcommand("derive", "derived parameters for both models");
  add_common(derive_cmd, common);

  auto *moments_cmd = app.add_subcommand("moments", "conditional second moments h1, h2, h3");
  add_common(moments_cmd, common);
  add_state(moments_cmd, state);

  std::uint64_t stream = 0;
  auto *traj_cmd = app.add_subcommand("trajectory", "one simulated record");
  add_common(traj_cmd, common);
  add_state(traj_cmd, state);
  traj_cmd->add_option("--stream", stream, "noise stream index");

  std::size_t members = 1000;
  auto *ens_cmd = app.add_subcommand("ensemble", "ensemble of simulated records");
  add_common(ens_cmd, common);
  add_state(ens_cmd, state);
  ens_cmd->add_option("--members", members, "number of records")->check(CLI::PositiveNumber);

  WvCliOptions wv;
  auto *wv_cmd = app.add_subcommand("wvspec", "Wigner-Ville spectrum slice");
  add_common(wv_cmd, common);
  add_state(wv_cmd, state);
  wv_cmd->add_option("--t", wv.t, "slice time (s)");
  wv_cmd->add_option("--omega-min", wv.omega_min, "lowest angular frequency");
  wv_cmd->add_option("--omega-max", wv.omega_max, "highest angular frequency");
  wv_cmd->add_option("--omega-count", wv.omega_count, "frequency points");
  wv_cmd->add_option("--from-ensemble", wv.from_ensemble, "ensemble file from `ensemble`");
  wv_cmd->add_option("--normalization", wv.normalization, "raw or floor");
  wv_cmd->add_option("--delta", wv.delta, "shot term convention: discrete or continuous");

  auto add_cov = [&](CLI::App *a) {
    a->add_option("--h2-factor", cov.h2_factor, "factor on the h2 term of the back-action kernel");
    a->add_option("--phase", cov.phase, "loss-angle placement: derived or inside");
  };
  auto *cov_cmd = app.add_subcommand("covariance", "build and cache record covariances");
  add_common(cov_cmd, common);
  add_state(cov_cmd, state);
  add_cov(cov_cmd);

  InferCliOptions inf;
  auto *infer_cmd = app.add_subcommand("infer", "Monte-Carlo error rates of the likelihood statistic");
  add_common(infer_cmd, common);
  add_state(infer_cmd, state);
  add_cov(infer_cmd);
  infer_cmd->add_option("--samples", inf.samples, "datasets per model and decision");
  infer_cmd->add_option("--navg", inf.navg, "comma-separated trial counts to average");
  infer_cmd->add_option("--llr", inf.llr, "ratio or difference");
  infer_cmd->add_option("--bandwidth-scale", inf.bandwidth_scale, "KDE bandwidth multiplier");

  SweepCliOptions sw;
  auto *sweep_cmd = app.add_subcommand("sweep", "required repetitions against squeezing level");
  add_common(sweep_cmd, common);
  add_state(sweep_cmd, state);
  add_cov(sweep_cmd);
  sweep_cmd->add_option("--levels", sw.levels, "comma-separated squeezing levels (dB)");
  sweep_cmd->add_option("--samples", sw.samples, "decisions per model and N_avg");
  sweep_cmd->add_option("--max-avg", sw.max_avg, "largest N_avg tried");
  sweep_cmd->add_option("--target", sw.target, "target error rate");
  sweep_cmd->add_option("--llr", sw.llr, "ratio or difference");

  auto *self_cmd = app.add_subcommand("selftest", "fast internal consistency checks");
  add_common(self_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return config_error;
  }

  try {
    if (*derive_cmd) return cmd_derive(common);
    if (*moments_cmd) return cmd_moments(common, state);
    if (*traj_cmd) return cmd_trajectory(common, state, stream);
    if (*ens_cmd) return cmd_ensemble(common, state, members);
    if (*wv_cmd) return cmd_wvspec(common, state, wv);
    if (*cov_cmd) return cmd_covariance(common, state, cov);
    if (*infer_cmd) return cmd_infer(common, state, cov, inf);
    if (*sweep_cmd) return cmd_sweep(common, state, cov, sw);
    if (*self_cmd) return cmd_selftest(common);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const MissingArtifact &e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return missing_artifact;
  } catch (const NumericError &e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return numeric_error;
  } catch (const std::invalid_argument &e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return numeric_error;
  }
  return config_error;
}
