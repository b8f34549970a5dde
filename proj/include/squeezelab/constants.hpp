#pragma once

#include <numbers>
#include <stdexcept>
#include <string>

namespace squeezelab {

// CODATA 2018 exact / recommended values.
inline constexpr double kHbar = 1.054571817e-34;          // J s
inline constexpr double kBoltzmann = 1.380649e-23;        // J/K
inline constexpr double kSpeedOfLight = 299792458.0;      // m/s
inline constexpr double kStandardGravity = 9.80665;       // m/s^2
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Raised when an operation is called outside its domain.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative fit fails to converge or is ill-posed.
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace squeezelab
