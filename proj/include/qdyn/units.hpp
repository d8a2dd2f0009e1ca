#pragma once

#include <numbers>
#include <string>
#include <string_view>

#include "qdyn/errors.hpp"

// Internal units: time in microseconds, angular frequency in rad/us.
// Parameter files quote cyclic frequencies (Hz, kHz, MHz) and times (ns, us, ms).
namespace qdyn {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Cyclic frequency f (Hz) to angular frequency in rad/us.
constexpr double angular(double f_hz) { return kTwoPi * f_hz * 1e-6; }

// Inverse of angular().
constexpr double cyclic_hz(double omega_rad_per_us) { return omega_rad_per_us / kTwoPi * 1e6; }

inline double frequency_scale_to_hz(std::string_view unit) {
  if (unit == "Hz") return 1.0;
  if (unit == "kHz") return 1e3;
  if (unit == "MHz") return 1e6;
  throw ParseError("unknown frequency unit '" + std::string(unit) + "'");
}

inline double time_scale_to_us(std::string_view unit) {
  if (unit == "us") return 1.0;
  if (unit == "ns") return 1e-3;
  if (unit == "ms") return 1e3;
  if (unit == "s") return 1e6;
  throw ParseError("unknown time unit '" + std::string(unit) + "'");
}

}  // namespace qdyn
