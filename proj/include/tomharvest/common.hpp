#pragma once

#include <numbers>
#include <stdexcept>
#include <string>

namespace tomharvest {

// Selects the serial reference path or the OpenMP path of a data-parallel
// kernel. Both paths produce bit-identical results.
enum class Exec { kSerial, kParallel };

// Raised when a configuration value violates its documented invariant.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace tomharvest
