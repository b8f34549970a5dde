#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "squeezelab/analysis.hpp"
#include "squeezelab/calibration.hpp"
#include "squeezelab/config.hpp"
#include "squeezelab/measurement.hpp"
#include "squeezelab/noise_budget.hpp"
#include "squeezelab/phasespace.hpp"

namespace squeezelab {

inline constexpr const char* kVersion = "0.1.0";

enum class Experiment { time_sweep, r_sweep, calibration_tof, calibration_lattice, noise_budget, oracle_check };

/// Accepts the subcommand spellings (time-sweep, r-sweep, calib-tof,
/// calib-lattice, noise-budget, oracle-check).
[[nodiscard]] Experiment parse_experiment(const std::string& name);
[[nodiscard]] std::string experiment_name(Experiment e);

enum class ExitCode : int { ok = 0, fit_failure = 2, oracle_deviation = 3, config_error = 4 };

struct HoldGrid {
    double start = 0.0;     // s
    double step = 0.1e-6;   // s
    std::size_t points = 80;

    [[nodiscard]] std::vector<double> holds() const;
};

/// Everything one run needs, resolved from a Config.
struct RunConfig {
    Experiment experiment = Experiment::time_sweep;
    PhysicalParams params;
    double initial_occupation = 0.98;
    bool heating = false;
    NoiseSpec noise;
    FilterSpec filter;
    std::size_t n_trials = kDefaultTrials;
    std::uint64_t master_seed = 0;
    std::string output_dir = "out";
    unsigned workers = 0;

    double r = 0.85;
    std::vector<double> r_values{0.0, 0.40, 0.58, 0.73, 0.85};
    HoldGrid holds;
    bool optimize_t1 = false;
    bool fit_cross_term = true;   // the flight cross term shifts the minima
    bool fit_model_weights = true;  // see VarianceFitOptions::model_weights
    bool histogram_estimator = true;  // false: maximum-likelihood sample width
    bool r_fit_position_term = true;  // model the flight position term in the r fit

    std::size_t oracle_holds = 8;  // evenly spaced over one period

    std::string input_csv;  // calibration from measured points instead of simulation
    TofCalibrationSim tof;
    LatticeCalibrationSim lattice;

    NoiseInputs budget;
    double fitted_vn = 0.21;

    std::string config_hash;
    nlohmann::ordered_json echo;  // effective key/value pairs that affect results

    [[nodiscard]] double v_ini() const { return 2.0 * initial_occupation + 1.0; }
};

/// Keys excluded from the hash and the echo; they cannot change results.
[[nodiscard]] const std::set<std::string>& non_result_keys();

/// Reads every known key (unknown keys throw ConfigError). master_seed is
/// required. `tabulated_budget` selects the tabulated budget inputs as the base,
/// otherwise all budget inputs start at zero.
[[nodiscard]] RunConfig make_run_config(Experiment experiment, const Config& config,
                                        bool tabulated_budget = true);

/// Normalized variance of one hold point from its velocities.
[[nodiscard]] VariancePoint estimate_variance(std::span<const double> velocities, double hold,
                                              const PhysicalParams& params, bool histogram);

struct SweepPoint {
    VariancePoint variance;
    double analytic = 0.0;  // noiseless model plus the injected floor
    std::size_t n_used = 0;
    std::size_t n_dropped = 0;
};

struct TimeSweepResult {
    double r = 0.0;
    std::vector<SweepPoint> points;
    std::optional<FitResult> fit;
    std::string error;  // non-empty when a point or the fit failed
};

/// One hold sweep at squeezing parameter r; `stream` separates the seeds of
/// sweeps within one run.
[[nodiscard]] TimeSweepResult run_time_sweep(const RunConfig& cfg, double r, std::uint64_t stream = 0);

struct RSweepResult {
    std::vector<TimeSweepResult> sweeps;
    std::optional<FitResult> minima;  // Vn free
    std::optional<FitResult> maxima;  // Vn fixed to the minima value
    std::string error;
};

[[nodiscard]] RSweepResult run_r_sweep(const RunConfig& cfg);

struct OraclePoint {
    double r = 0.0;
    double hold = 0.0;
    double monte_carlo = 0.0;
    double analytic = 0.0;        // closed form plus the injected floor
    double covariance_route = 0.0;  // propagated covariance, heating included when enabled
    double rel_deviation = 0.0;   // monte_carlo / analytic - 1
};

struct OracleResult {
    std::vector<OraclePoint> points;
    double max_abs_deviation = 0.0;
    double threshold = 0.02;
    bool low_n = false;

    [[nodiscard]] bool passed() const { return max_abs_deviation <= threshold; }
};

/// 0.02 * max(1, sqrt(1e5 / n)).
[[nodiscard]] double oracle_threshold(std::size_t n_trials);

[[nodiscard]] OracleResult run_oracle_check(const RunConfig& cfg);

struct CalibrationOutcome {
    std::optional<TofCalibrationRun> tof_run;
    std::optional<LatticeCalibrationRun> lattice_run;
    std::optional<CalibrationFactor> tof;
    std::optional<CalibrationFactor> lattice;
};

/// calibration_tof: TOF only. calibration_lattice: lattice plus a TOF run on
/// the same true factor for comparison. With input_csv, the method's own
/// factor is computed from the file instead.
[[nodiscard]] CalibrationOutcome run_calibration(const RunConfig& cfg);

/// Runs the configured experiment, writes CSV, report.json and
/// provenance.json into output_dir and returns the exit code.
[[nodiscard]] ExitCode execute(const RunConfig& cfg, std::ostream& log);

}  // namespace squeezelab
