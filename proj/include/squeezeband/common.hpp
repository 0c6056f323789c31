#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace squeezeband {

// Base class for everything this library throws.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid inputs: non-physical parameters, malformed configuration.
class validation_error : public error {
 public:
  explicit validation_error(const std::string& what) : error(what) {}
};

// A steady state was requested where none exists (drive at/above threshold).
class above_threshold_error : public error {
 public:
  explicit above_threshold_error(const std::string& what) : error(what) {}
};

// An iterative solver or integrator failed to converge (or diverged).
class convergence_error : public error {
 public:
  explicit convergence_error(const std::string& what) : error(what) {}
};

// A closed-form branch was requested outside its domain of validity.
class unsupported_branch_error : public error {
 public:
  explicit unsupported_branch_error(const std::string& what) : error(what) {}
};

// Validity warnings. These are structured metadata on results: the model's
// approximations have stated validity regimes, and results obtained outside
// them are still returned, but flagged. Flags are never silently dropped and
// never fatal.
enum class flag_code {
  rwa_omega_m_comparable,  // omega_m < 10 gamma: rotating-wave treatment shaky
  rwa_mu_large,            // mu >= omega_m / 10
  rwa_chi_large,           // chi >= omega_m / 10
  bad_cavity_violated,     // kappa < 10 omega_m: adiabatic elimination shaky
  kr_exceeds_k0,           // modulated stiffness exceeds static stiffness
  overdamped_filter,       // filter poles real: sinusoidal kernel form invalid
  resonant_drive_angle,    // delta == 0: angle fixed at pi/4, detuned closed
                           // form not applicable
  covariance_clamped,      // trajectory covariance projected back to PSD
};

struct flag {
  flag_code code;
  std::string message;
};

using flag_list = std::vector<flag>;

inline bool has_flag(const flag_list& flags, flag_code code) {
  for (const auto& f : flags) {
    if (f.code == code) return true;
  }
  return false;
}

inline void append_flags(flag_list& dst, const flag_list& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

// Value plus the validity flags raised while computing it.
template <class T>
struct flagged {
  T value{};
  flag_list flags;
};

}  // namespace squeezeband
