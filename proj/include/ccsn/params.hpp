// Physical configuration of the optomechanical test mass and all derived
// frequencies and coupling strengths.
//
// Internally every second moment is carried in units of the zero-point
// scales of a harmonic oscillator at the covariance frequency omega_q, and
// time is kept in seconds. Dimensional quantities only appear at I/O.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace ccsn {

namespace constants {
inline constexpr double hbar = 1.054571817e-34;     // J s
inline constexpr double c_light = 299792458.0;      // m / s
inline constexpr double k_boltzmann = 1.380649e-23; // J / K
inline constexpr double two_pi = 6.283185307179586476925286766559;
} // namespace constants

enum class GravityModel { sn, qg };
enum class Prescription { classical, quantum };

std::string to_string(GravityModel m);
std::string to_string(Prescription p);
GravityModel parse_model(const std::string &s);
Prescription parse_prescription(const std::string &s);

/// Malformed or invalid configuration. `line` is 0 when not tied to a line.
class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string &msg, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

/// Raw configuration. Angular frequencies in rad/s.
struct SystemParams {
  double mass = 0.2;                                  // kg
  double omega_m = constants::two_pi * 4e-3;          // rad/s
  double gamma_m = constants::two_pi * 4e-10;         // rad/s
  double omega_sn = constants::two_pi * 8.19e-2;      // rad/s
  double temperature = 1e-3;                          // K
  double cavity_length = 2.0;                         // m
  double wavelength = 1064e-9;                        // m
  double finesse = 300.0;
  double power = 1e-6;                                // W, intracavity
  Prescription prescription = Prescription::classical;
  GravityModel model = GravityModel::sn;
  /// Direct override of the cavity decay rate (rad/s); <= 0 means unset.
  double gamma_cav_override = 0.0;

  /// Benchmark mechanics with the given intracavity power (W) and temperature.
  static SystemParams benchmark(double power_w = 1e-6, double temperature_k = 1e-3);

  SystemParams with_model(GravityModel m) const;
  SystemParams with_prescription(Prescription p) const;
  SystemParams with_power(double power_w) const;
  SystemParams with_temperature(double temperature_k) const;
};

struct DerivedParams {
  SystemParams sys;

  double omega_sn_eff = 0.0; // 0 for the QG model
  double omega_q = 0.0;      // covariance oscillation frequency
  double omega_mc = 0.0;     // damped mechanical frequency
  double loss_angle = 0.0;   // tan(phi) = -gamma_m / (2 omega_mc)
  double omega_0 = 0.0;      // optical angular frequency
  double gamma_cav = 0.0;    // cavity amplitude decay rate
  double coupling_g = 0.0;   // G
  double alpha = 0.0;        // 2G/sqrt(gamma)
  double lambda_q = 0.0;     // dimensionless measurement strength
  double lambda_star = 0.0;  // lambda_q * omega_q, rad/s
  double q_m = 0.0;
  double q_q = 0.0;
  double kappa = 1.0;
  double lambda_th = 0.0;    // 4 kT / (hbar omega_q Q_m)
  double coth_m = 1.0;       // coth(hbar omega_m / 2kT)
  double coth_q = 1.0;       // coth(hbar omega_q / 2kT)

  double lambda_q2() const { return lambda_q * lambda_q; }
  /// Lambda_*^2 = hbar alpha^2 / M, independent of the gravity model.
  double lambda_star2() const { return lambda_star * lambda_star; }
  /// Slow relaxation rate Lambda_*^2 / omega_q of the second moments.
  double relaxation_rate() const { return lambda_star2() / omega_q; }
};

DerivedParams derive(const SystemParams &params);

/// Zero-point scales used to map second moments to dimensionless form.
struct ScalingConstants {
  double vxx_vac = 0.0; // hbar / (2 M omega_q)
  double vxp_unit = 0.0; // hbar / 2
  double vpp_vac = 0.0; // hbar M omega_q / 2
  double time_unit = 0.0; // 1 / omega_q
};

ScalingConstants nondimensionalize(const DerivedParams &d);

/// Parse `key = value` configuration text; `#` starts a comment.
SystemParams parse_config(const std::string &text);
SystemParams load_config(const std::filesystem::path &path);
/// Canonical key = value rendering, accepted back by parse_config.
std::string format_config(const SystemParams &params);
/// FNV-1a hash of the canonical rendering.
std::uint64_t params_hash(const SystemParams &params);

} // namespace ccsn
