#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "squeezelab/measurement.hpp"
#include "squeezelab/phasespace.hpp"

namespace squeezelab {

/// Fitted parameters with their uncertainties. Only produced by converged fits.
struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd values;
    Eigen::VectorXd std_errors;
    Eigen::MatrixXd covariance;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
    std::size_t n_dropped = 0;
    std::vector<std::string> flags;

    [[nodiscard]] double value(const std::string& name) const;
    [[nodiscard]] double error(const std::string& name) const;
    [[nodiscard]] bool has_flag(const std::string& flag) const;
};

/// {parameters, errors, residual_rms, n_dropped, flags}.
[[nodiscard]] nlohmann::ordered_json fit_report(const FitResult& fit);

// ---------------------------------------------------------------------------
// Trace processing

struct FilterSpec {
    int order = 10;
    double center = 253.0e3;    // Hz
    double bandwidth = 20.0e3;  // Hz
};

/// Linear-phase band-pass taps (order + 1 of them): Hamming-windowed sinc
/// difference, with the DC response nulled and unit gain at the center.
[[nodiscard]] std::vector<double> design_bandpass(const FilterSpec& spec, double sample_rate);

/// Complex frequency response of FIR taps at f, referenced to the tap center.
[[nodiscard]] std::complex<double> fir_response(std::span<const double> taps, double f,
                                                double sample_rate);

/// Zero-phase application of design_bandpass (the order/2 sample group delay
/// is removed). The first and last order/2 samples see zero padding.
[[nodiscard]] Trace fir_bandpass(const Trace& trace, const FilterSpec& spec);

/// Least-squares fit of A sin(2 pi f t + phase) + offset, seeded by a linear
/// fit at f0_guess. A >= 0, phase in [0, 2 pi). Flags "below_noise_floor"
/// when A is under three standard errors. Throws FitError on non-convergence.
[[nodiscard]] FitResult fit_sinusoid(const Trace& trace, double f0_guess);

struct VelocityExtraction {
    std::vector<double> velocities;  // m/s, signed
    std::size_t n_total = 0;
    std::size_t n_dropped = 0;

    [[nodiscard]] double drop_fraction() const
    {
        return n_total ? static_cast<double>(n_dropped) / static_cast<double>(n_total) : 0.0;
    }
};

inline constexpr double kMaxDropFraction = 0.05;

/// Per-trial velocities: filter, fit and sign each trace when traces exist,
/// otherwise use the exact recapture amplitude. Trials whose fit fails are
/// dropped; more than max_drop_fraction dropped throws FitError.
[[nodiscard]] VelocityExtraction extract_velocities(const TofEnsemble& ens,
                                                    const FilterSpec& filter = {},
                                                    unsigned workers = 0,
                                                    double max_drop_fraction = kMaxDropFraction);

// ---------------------------------------------------------------------------
// Velocity distributions

struct Histogram {
    std::vector<double> bin_edges;  // counts.size() + 1 entries
    std::vector<long> counts;
    double bin_width = 0.0;

    [[nodiscard]] std::vector<double> centers() const;
    [[nodiscard]] long total() const;
};

/// Half of Scott's rule: 1.75 sigma / N^{1/3}.
[[nodiscard]] double half_scott_bin_width(double sigma, std::size_t n);

/// Histogram with the half-Scott width, bins centered on the sample range.
/// Requires N >= 10 and nonzero spread.
[[nodiscard]] Histogram velocity_histogram(std::span<const double> velocities);

/// Gaussian a exp(-(v - v0)^2 / 2 dv^2) fitted to the histogram counts with
/// Poisson weights. Parameters: amplitude, v0, dv.
[[nodiscard]] FitResult fit_velocity_distribution(const Histogram& hist);

/// Sample mean and maximum-likelihood width, for cross-checking binning bias.
[[nodiscard]] FitResult sample_width_ml(std::span<const double> velocities);

// ---------------------------------------------------------------------------
// Variance evolution and squeezing-parameter dependence

struct VariancePoint {
    double hold = 0.0;  // s
    double v_tilde = 0.0;
    double std_error = 0.0;  // 0 = unknown
};

struct VarianceFitOptions {
    bool include_cross_term = false;  // adds a free C sin(2 omega0 hold)
    bool scale_by_chi2 = true;        // multiply covariance by reduced chi^2
    // Rescale each supplied error by model / value and refit. Errors that
    // scale with the measured variance otherwise favour low fluctuations and
    // bias the fit low.
    bool model_weights = false;
};

/// V1 cos^2(omega0 hold) + V2 sin^2(omega0 hold), weighted linear least
/// squares with V1, V2 >= 0. Parameters: V1, V2 (and C).
[[nodiscard]] FitResult fit_variance_evolution(std::span<const VariancePoint> points,
                                               double omega0,
                                               const VarianceFitOptions& options = {});

enum class Branch { minima, maxima };

struct SqueezePoint {
    double r = 0.0;
    double value = 0.0;
    double std_error = 0.0;  // 0 = unknown
};

/// Vn + Vini exp(-4r) (minima) or Vn + Vini exp(4r) (maxima). With fixed_vn
/// only Vini is fitted. Supplied errors are taken as absolute unless
/// scale_by_chi2. Given flight_phase = omega0 t_tof, the position term
/// Vini exp(4r) / flight_phase^2 joins the Vini basis of both branches.
/// Parameters: Vn, Vini.
[[nodiscard]] FitResult fit_r_dependence(std::span<const SqueezePoint> points, Branch branch,
                                         std::optional<double> fixed_vn = std::nullopt,
                                         bool scale_by_chi2 = false,
                                         std::optional<double> flight_phase = std::nullopt);

/// 10 log10(v_tilde).
[[nodiscard]] double squeezing_db(double v_tilde);

struct OccupationEstimate {
    double n = 0.0;
    bool below_ground = false;  // width narrower than the ground state
};

/// Inverts dv = sqrt(hbar omega0 (n + 1/2) / m).
[[nodiscard]] OccupationEstimate occupation_from_width(double dv, const PhysicalParams& params);

}  // namespace squeezelab
