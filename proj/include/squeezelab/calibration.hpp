#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "squeezelab/analysis.hpp"
#include "squeezelab/constants.hpp"
#include "squeezelab/phasespace.hpp"

namespace squeezelab {

enum class CalibrationMethod { tof_thermometry, lattice_shift };

[[nodiscard]] std::string to_string(CalibrationMethod m);

/// Trace units per metre of displacement. volts_per_meter > 0.
struct CalibrationFactor {
    double volts_per_meter = 0.0;
    double std_error = 0.0;
    double systematic_error = 0.0;  // same units, not included in std_error
    CalibrationMethod method = CalibrationMethod::tof_thermometry;
    std::size_t n_points = 0;
    std::size_t n_excluded = 0;
};

/// Structured text: one "key: value" line per field.
[[nodiscard]] std::string calibration_report(const CalibrationFactor& k);

inline constexpr double kRoomTemperature = 293.0;         // K
inline constexpr double kTemperatureSystematic = 0.07;    // relative
inline constexpr double kMinCalibrationOccupation = 1.5;  // points at or below are excluded

/// T = t_reference * area_cooled / area_uncooled.
[[nodiscard]] double psd_temperature_ratio(double area_cooled, double area_uncooled,
                                           double t_reference = kRoomTemperature);

/// n = k_B T / (hbar omega0) - 1/2.
[[nodiscard]] double occupation_from_temperature(double temperature, const PhysicalParams& params);

/// Inverse of occupation_from_temperature.
[[nodiscard]] double temperature_from_occupation(double n, const PhysicalParams& params);

/// Fits width_volts = k * t_tof * sqrt(hbar omega0 (n + 1/2) / m) through the
/// origin over points with n > 1.5. Requires at least 3 such points.
/// systematic_error = k * temperature_systematic / 2 (width scales as sqrt(T)).
[[nodiscard]] CalibrationFactor tof_calibration(std::span<const double> widths_volts,
                                                std::span<const double> occupations,
                                                const PhysicalParams& params,
                                                double temperature_systematic = kTemperatureSystematic);

struct LatticeGeometry {
    double length = 16.6e-3;          // m, particle to retro-reflecting mirror
    double wavelength = 1551.38e-9;   // m
    double laser_omega = kTwoPi * kSpeedOfLight / 1551.38e-9;  // rad/s

    [[nodiscard]] static LatticeGeometry from_wavelength(double length, double wavelength);
    void validate() const;
};

/// delta = L dOmega / (laser_omega + dOmega).
[[nodiscard]] double lattice_shift_displacement(const LatticeGeometry& geom, double d_omega);

/// 2 delta |sin(omega0' tau / 2)|.
[[nodiscard]] double lattice_shift_oscillation(double delta, double omega0_prime, double tau);

struct LatticeOscillationPoint {
    double tau = 0.0;        // s
    double amplitude = 0.0;  // trace units
};

/// Fits amplitude = 2 delta |sin(omega0' tau / 2)|. Parameters: delta (trace
/// units), omega0_prime. Needs at least 3 points and one with tau > 0.
[[nodiscard]] FitResult fit_lattice_oscillation(std::span<const LatticeOscillationPoint> points,
                                                double omega_guess);

struct LatticePoint {
    double d_omega = 0.0;  // rad/s
    double volts = 0.0;    // measured amplitude 2 delta, trace units
};

/// k = mean(volts / (2 delta(d_omega))) with the standard error of the mean.
/// Zero shifts are excluded; fewer than 2 remaining points throws.
[[nodiscard]] CalibrationFactor lattice_calibration(std::span<const LatticePoint> points,
                                                    const LatticeGeometry& geom);

/// |k1 - k2| / sqrt(s1^2 + s2^2) with statistical errors only.
[[nodiscard]] double calibration_discrepancy(const CalibrationFactor& a, const CalibrationFactor& b);

// ---------------------------------------------------------------------------
// Synthetic calibration experiments sharing one true calibration factor.

struct TofCalibrationSim {
    std::vector<double> temperatures = default_temperatures();  // K
    std::size_t trials_per_point = 2000;
    double psd_area_noise = 0.01;   // relative Gaussian error of each cooled PSD area
    double low_n_broadening = 0.0;  // relative width excess injected at n <= 1.5

    [[nodiscard]] static std::vector<double> default_temperatures();
};

struct TofCalibrationPoint {
    double temperature = 0.0;  // K, from the PSD area ratio
    double occupation = 0.0;
    double width_volts = 0.0;
    double width_error = 0.0;
};

struct TofCalibrationRun {
    std::vector<TofCalibrationPoint> points;
    CalibrationFactor factor;
};

[[nodiscard]] TofCalibrationRun simulate_tof_calibration(const PhysicalParams& params,
                                                         double true_volts_per_meter,
                                                         const TofCalibrationSim& sim,
                                                         std::uint64_t seed, unsigned workers = 0);

struct LatticeCalibrationSim {
    LatticeGeometry geometry;
    std::vector<double> shifts_hz{0.2e6, 0.4e6, 0.6e6, 0.8e6, 1.0e6, 1.2e6, 1.4e6};
    double omega0_prime = 0.0;     // 0 = omega0
    double initial_occupation = 0.98;
    std::size_t tau_points = 24;   // over two periods at omega0'
    std::size_t shots_per_tau = 120;
    double readout_noise_volts = 0.0;  // per-shot amplitude noise
};

struct LatticeShiftResult {
    double d_omega = 0.0;
    double delta_calculated = 0.0;  // m
    std::vector<LatticeOscillationPoint> oscillation;
    FitResult fit;
};

struct LatticeCalibrationRun {
    std::vector<LatticeShiftResult> shifts;
    CalibrationFactor factor;
};

/// Displaces the trap by delta, evolves for tau at omega0', restores the trap
/// and averages the recorded oscillation over shots.
[[nodiscard]] LatticeCalibrationRun simulate_lattice_calibration(const PhysicalParams& params,
                                                                 double true_volts_per_meter,
                                                                 const LatticeCalibrationSim& sim,
                                                                 std::uint64_t seed,
                                                                 unsigned workers = 0);

}  // namespace squeezelab
