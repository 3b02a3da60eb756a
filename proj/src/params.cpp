#include "ccsn/params.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ccsn {

using namespace constants;

std::string to_string(GravityModel m) { return m == GravityModel::sn ? "sn" : "qg"; }
std::string to_string(Prescription p) {
  return p == Prescription::classical ? "classical" : "quantum";
}

GravityModel parse_model(const std::string &s) {
  if (s == "sn" || s == "SN") return GravityModel::sn;
  if (s == "qg" || s == "QG") return GravityModel::qg;
  throw ConfigError("unknown gravity model '" + s + "' (expected sn or qg)");
}

Prescription parse_prescription(const std::string &s) {
  if (s == "classical") return Prescription::classical;
  if (s == "quantum") return Prescription::quantum;
  throw ConfigError("unknown thermal prescription '" + s + "' (expected classical or quantum)");
}

SystemParams SystemParams::benchmark(double power_w, double temperature_k) {
  SystemParams p;
  p.power = power_w;
  p.temperature = temperature_k;
  return p;
}

SystemParams SystemParams::with_model(GravityModel m) const {
  SystemParams p = *this;
  p.model = m;
  return p;
}
SystemParams SystemParams::with_prescription(Prescription pr) const {
  SystemParams p = *this;
  p.prescription = pr;
  return p;
}
SystemParams SystemParams::with_power(double power_w) const {
  SystemParams p = *this;
  p.power = power_w;
  return p;
}
SystemParams SystemParams::with_temperature(double temperature_k) const {
  SystemParams p = *this;
  p.temperature = temperature_k;
  return p;
}

namespace {

double coth(double x) { return 1.0 / std::tanh(x); }

void require_positive(double v, const char *name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ConfigError(std::string(name) + " must be strictly positive and finite");
}

} // namespace

DerivedParams derive(const SystemParams &p) {
  require_positive(p.mass, "mass");
  require_positive(p.omega_m, "omega_m");
  require_positive(p.gamma_m, "gamma_m");
  require_positive(p.temperature, "temperature");
  require_positive(p.cavity_length, "cavity_length");
  require_positive(p.wavelength, "wavelength");
  require_positive(p.finesse, "finesse");
  require_positive(p.power, "power");
  if (p.omega_sn < 0.0 || !std::isfinite(p.omega_sn))
    throw ConfigError("omega_sn must be non-negative");
  if (p.gamma_m >= 2.0 * p.omega_m)
    throw ConfigError("overdamped oscillator: gamma_m must be below 2 omega_m");

  DerivedParams d;
  d.sys = p;
  d.omega_sn_eff = p.model == GravityModel::qg ? 0.0 : p.omega_sn;
  d.omega_q = std::sqrt(p.omega_m * p.omega_m + d.omega_sn_eff * d.omega_sn_eff);
  d.omega_mc = std::sqrt(p.omega_m * p.omega_m - 0.25 * p.gamma_m * p.gamma_m);
  d.loss_angle = std::atan(-p.gamma_m / (2.0 * d.omega_mc));
  d.omega_0 = two_pi * c_light / p.wavelength;
  d.gamma_cav = p.gamma_cav_override > 0.0
                    ? p.gamma_cav_override
                    : M_PI * c_light / (2.0 * p.cavity_length * p.finesse);
  d.coupling_g = std::sqrt(p.power * d.omega_0 / (hbar * p.cavity_length * c_light));
  d.alpha = 2.0 * d.coupling_g / std::sqrt(d.gamma_cav);
  d.lambda_q = std::sqrt(hbar * d.alpha * d.alpha / (p.mass * d.omega_q * d.omega_q));
  d.lambda_star = d.lambda_q * d.omega_q;
  d.q_m = p.omega_m / p.gamma_m;
  d.q_q = d.omega_q / p.gamma_m;
  const double l2 = d.lambda_q * d.lambda_q;
  d.kappa = std::sqrt(1.0 + l2 * l2);
  d.lambda_th = 4.0 * k_boltzmann * p.temperature / (hbar * d.omega_q * d.q_m);
  d.coth_m = coth(hbar * p.omega_m / (2.0 * k_boltzmann * p.temperature));
  d.coth_q = coth(hbar * d.omega_q / (2.0 * k_boltzmann * p.temperature));
  return d;
}

ScalingConstants nondimensionalize(const DerivedParams &d) {
  ScalingConstants s;
  s.vxx_vac = hbar / (2.0 * d.sys.mass * d.omega_q);
  s.vxp_unit = 0.5 * hbar;
  s.vpp_vac = 0.5 * hbar * d.sys.mass * d.omega_q;
  s.time_unit = 1.0 / d.omega_q;
  return s;
}

// ---------------------------------------------------------------------------
// Configuration file

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string &v, const std::string &key, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception &) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number", line);
  }
}

} // namespace

SystemParams parse_config(const std::string &text) {
  static const std::set<std::string> required = {
      "mass_kg",     "omega_m_hz",      "gamma_m_hz",    "omega_sn_hz",
      "temperature_k", "cavity_length_m", "wavelength_nm", "finesse",
      "power_nw",    "prescription",    "model"};
  std::map<std::string, std::pair<std::string, int>> kv;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty() || val.empty()) throw ConfigError("expected 'key = value'", line);
    if (!required.count(key) && key != "gamma_cav_hz")
      throw ConfigError("unknown key '" + key + "'", line);
    if (kv.count(key)) throw ConfigError("duplicate key '" + key + "'", line);
    kv[key] = {val, line};
  }
  for (const auto &k : required)
    if (!kv.count(k)) throw ConfigError("missing required key '" + k + "'");

  auto num = [&](const std::string &k) { return parse_number(kv[k].first, k, kv[k].second); };
  SystemParams p;
  p.mass = num("mass_kg");
  p.omega_m = two_pi * num("omega_m_hz");
  p.gamma_m = two_pi * num("gamma_m_hz");
  p.omega_sn = two_pi * num("omega_sn_hz");
  p.temperature = num("temperature_k");
  p.cavity_length = num("cavity_length_m");
  p.wavelength = num("wavelength_nm") * 1e-9;
  p.finesse = num("finesse");
  p.power = num("power_nw") * 1e-9;
  try {
    p.prescription = parse_prescription(kv["prescription"].first);
  } catch (const ConfigError &e) {
    throw ConfigError(e.what(), kv["prescription"].second);
  }
  try {
    p.model = parse_model(kv["model"].first);
  } catch (const ConfigError &e) {
    throw ConfigError(e.what(), kv["model"].second);
  }
  if (kv.count("gamma_cav_hz")) p.gamma_cav_override = two_pi * num("gamma_cav_hz");

  // Surface invariant violations as configuration errors.
  (void)derive(p);
  return p;
}

SystemParams load_config(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const SystemParams &p) {
  auto g = [](double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  std::ostringstream o;
  o << "mass_kg = " << g(p.mass) << "\n"
    << "omega_m_hz = " << g(p.omega_m / two_pi) << "\n"
    << "gamma_m_hz = " << g(p.gamma_m / two_pi) << "\n"
    << "omega_sn_hz = " << g(p.omega_sn / two_pi) << "\n"
    << "temperature_k = " << g(p.temperature) << "\n"
    << "cavity_length_m = " << g(p.cavity_length) << "\n"
    << "wavelength_nm = " << g(p.wavelength * 1e9) << "\n"
    << "finesse = " << g(p.finesse) << "\n"
    << "power_nw = " << g(p.power * 1e9) << "\n"
    << "prescription = " << to_string(p.prescription) << "\n"
    << "model = " << to_string(p.model) << "\n";
  if (p.gamma_cav_override > 0.0) o << "gamma_cav_hz = " << g(p.gamma_cav_override / two_pi) << "\n";
  return o.str();
}

std::uint64_t params_hash(const SystemParams &p) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : format_config(p)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace ccsn
