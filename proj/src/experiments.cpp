#include "squeezelab/experiments.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "squeezelab/csv.hpp"
#include "squeezelab/protocol.hpp"
#include "squeezelab/seeding.hpp"

namespace squeezelab {

Experiment parse_experiment(const std::string& name)
{
    if (name == "time-sweep") return Experiment::time_sweep;
    if (name == "r-sweep") return Experiment::r_sweep;
    if (name == "calib-tof" || name == "calibration-tof") return Experiment::calibration_tof;
    if (name == "calib-lattice" || name == "calibration-lattice") return Experiment::calibration_lattice;
    if (name == "noise-budget") return Experiment::noise_budget;
    if (name == "oracle-check") return Experiment::oracle_check;
    throw ConfigError("unknown experiment '" + name + "'");
}

std::string experiment_name(Experiment e)
{
    switch (e) {
    case Experiment::time_sweep: return "time-sweep";
    case Experiment::r_sweep: return "r-sweep";
    case Experiment::calibration_tof: return "calib-tof";
    case Experiment::calibration_lattice: return "calib-lattice";
    case Experiment::noise_budget: return "noise-budget";
    case Experiment::oracle_check: return "oracle-check";
    }
    return "unknown";
}

std::vector<double> HoldGrid::holds() const
{
    std::vector<double> out(points);
    for (std::size_t i = 0; i < points; ++i) out[i] = start + step * static_cast<double>(i);
    return out;
}

const std::set<std::string>& non_result_keys()
{
    static const std::set<std::string> keys{"workers", "output_dir"};
    return keys;
}

namespace {

/// Reads keys through Config and records the effective value of each.
class Reader {
public:
    explicit Reader(const Config& c) : config_(c) {}

    double num(const std::string& key, double fallback)
    {
        const double v = config_.get_double(key, fallback);
        record(key, v);
        return v;
    }
    double hz_to_rad(const std::string& key, double fallback_rad)
    {
        return kTwoPi * num(key, fallback_rad / kTwoPi);
    }
    std::size_t count(const std::string& key, std::size_t fallback)
    {
        const long long v = config_.get_int(key, static_cast<long long>(fallback));
        if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
        record(key, v);
        return static_cast<std::size_t>(v);
    }
    bool flag(const std::string& key, bool fallback)
    {
        const bool v = config_.get_bool(key, fallback);
        record(key, v);
        return v;
    }
    std::string text(const std::string& key, const std::string& fallback)
    {
        std::string v = config_.get_string(key, fallback);
        record(key, v);
        return v;
    }
    std::vector<double> list(const std::string& key, const std::vector<double>& fallback)
    {
        auto v = config_.get_list(key, fallback);
        record(key, v);
        return v;
    }

    nlohmann::ordered_json echo;

private:
    template <typename T>
    void record(const std::string& key, const T& v)
    {
        if (!non_result_keys().count(key)) echo[key] = v;
    }

    const Config& config_;
};

}  // namespace

RunConfig make_run_config(Experiment experiment, const Config& config, bool tabulated_budget)
{
    RunConfig cfg;
    cfg.experiment = experiment;
    Reader in(config);

    cfg.master_seed = config.get_uint64("master_seed");
    in.echo["master_seed"] = cfg.master_seed;
    cfg.output_dir = in.text("output_dir", cfg.output_dir);
    cfg.workers = static_cast<unsigned>(in.count("workers", 0));

    auto& p = cfg.params;
    p.mass = in.num("mass_kg", p.mass);
    p.omega0 = in.hz_to_rad("trap_frequency_hz", p.omega0);
    p.t_tof = in.num("t_tof_s", p.t_tof);
    p.gamma_qba = in.hz_to_rad("gamma_qba_hz", p.gamma_qba);
    p.gamma_bg = in.hz_to_rad("gamma_bg_hz", p.gamma_bg);
    p.validate();

    cfg.initial_occupation = in.num("initial_occupation", cfg.initial_occupation);
    if (!(cfg.initial_occupation >= 0.0)) throw ConfigError("initial_occupation must be non-negative");
    cfg.heating = in.flag("heating", cfg.heating);
    cfg.n_trials = in.count("n_trials", experiment == Experiment::oracle_check ? 100000 : kDefaultTrials);
    if (cfg.n_trials < 1) throw ConfigError("n_trials must be positive");

    auto& n = cfg.noise;
    n.lattice_jitter_variance = in.num("noise_vn", n.lattice_jitter_variance);
    n.detector_noise_density = in.num("detector_noise_density", n.detector_noise_density);
    n.sample_rate = in.num("sample_rate_hz", n.sample_rate);
    n.trace_duration = in.num("trace_duration_s", n.trace_duration);
    n.drift_velocity = in.num("drift_velocity_m_per_s", n.drift_velocity);
    n.volts_per_meter = in.num("volts_per_meter", n.volts_per_meter);
    n.flicker_rms = in.num("flicker_rms", n.flicker_rms);
    n.synthesize_traces = in.flag("synthesize_traces", n.synthesize_traces);
    n.highpass = in.flag("highpass", n.highpass);
    n.validate();

    cfg.filter.order = static_cast<int>(in.count("filter_order", static_cast<std::size_t>(cfg.filter.order)));
    cfg.filter.center = in.num("filter_center_hz", cfg.filter.center);
    cfg.filter.bandwidth = in.num("filter_bandwidth_hz", cfg.filter.bandwidth);

    cfg.r = in.num("r", cfg.r);
    cfg.r_values = in.list("r_values", cfg.r_values);
    cfg.holds.start = in.num("hold_start_s", cfg.holds.start);
    cfg.holds.step = in.num("hold_step_s", cfg.holds.step);
    cfg.holds.points = in.count("hold_points", cfg.holds.points);
    cfg.optimize_t1 = in.flag("optimize_t1", cfg.optimize_t1);
    cfg.fit_cross_term = in.flag("fit_cross_term", cfg.fit_cross_term);
    cfg.fit_model_weights = in.flag("fit_model_weights", cfg.fit_model_weights);
    const std::string estimator = in.text("estimator", "histogram");
    if (estimator != "histogram" && estimator != "ml") throw ConfigError("estimator must be histogram or ml");
    cfg.histogram_estimator = estimator == "histogram";
    cfg.r_fit_position_term = in.flag("r_fit_position_term", cfg.r_fit_position_term);
    cfg.oracle_holds = in.count("oracle_holds", cfg.oracle_holds);
    if (cfg.holds.points < 1 || cfg.oracle_holds < 1) throw ConfigError("hold grids must be nonempty");
    if (cfg.holds.start < 0.0 || !(cfg.holds.step >= 0.0)) throw ConfigError("hold grid must be non-negative");

    cfg.input_csv = in.text("input_csv", "");
    cfg.tof.temperatures = in.list("tof_temperatures_k", cfg.tof.temperatures);
    cfg.tof.trials_per_point = in.count("tof_trials_per_point", cfg.tof.trials_per_point);
    cfg.tof.psd_area_noise = in.num("psd_area_noise", cfg.tof.psd_area_noise);
    cfg.tof.low_n_broadening = in.num("low_n_broadening", cfg.tof.low_n_broadening);
    auto& lat = cfg.lattice;
    const double length = in.num("lattice_length_m", lat.geometry.length);
    lat.geometry = LatticeGeometry::from_wavelength(length, in.num("wavelength_m", lat.geometry.wavelength));
    lat.shifts_hz = in.list("lattice_shifts_hz", lat.shifts_hz);
    lat.omega0_prime = in.hz_to_rad("trap_frequency_prime_hz", 0.0);
    lat.initial_occupation = in.num("lattice_initial_occupation", cfg.initial_occupation);
    lat.tau_points = in.count("lattice_tau_points", lat.tau_points);
    lat.shots_per_tau = in.count("lattice_shots", lat.shots_per_tau);
    lat.readout_noise_volts = in.num("readout_noise_volts", lat.readout_noise_volts);

    NoiseInputs b = tabulated_budget ? tabulated_defaults() : NoiseInputs{};
    if (!tabulated_budget) {
        b.v_ini = 0.0;
        b.phase_noise_density = 0.0;
        b.resonator_drift = 0.0;
        b.table_tilt = 0.0;
        b.tilt_stability = 0.0;
        b.mirror_position_noise = 0.0;
        b.perpendicular_bound = 0.0;
        b.timing_jitter = 0.0;
        b.vibration_bound = 0.0;
        b.v2_tilde = 0.0;
    }
    b.params = p;
    b.r = cfg.r;
    b.wavelength = lat.geometry.wavelength;
    b.v_ini = in.num("budget_v_ini", b.v_ini);
    b.phase_noise_density = in.num("phase_noise_density_hz_per_sqrt_hz", b.phase_noise_density);
    b.mirror_distance_d = in.num("mirror_distance_m", b.mirror_distance_d);
    b.resonator_drift = in.num("resonator_drift_hz", b.resonator_drift);
    b.measurement_duration = in.num("measurement_duration_s", b.measurement_duration);
    b.table_tilt = in.num("table_tilt_deg", b.table_tilt);
    b.tilt_stability = in.num("tilt_stability_deg", b.tilt_stability);
    b.mirror_position_noise = in.num("mirror_position_noise_m_per_sqrt_hz", b.mirror_position_noise);
    b.perpendicular_bound = in.num("perpendicular_bound", b.perpendicular_bound);
    b.timing_jitter = in.num("timing_jitter_s", b.timing_jitter);
    b.vibration_bound = in.num("vibration_bound", b.vibration_bound);
    b.v2_tilde = in.num("v2_tilde", b.v2_tilde);
    b.validate();
    cfg.budget = b;
    cfg.fitted_vn = in.num("fitted_vn", cfg.fitted_vn);

    const auto unused = config.unused_keys();
    if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
    cfg.config_hash = config.hash(non_result_keys());
    cfg.echo = std::move(in.echo);
    return cfg;
}

VariancePoint estimate_variance(std::span<const double> velocities, double hold,
                                const PhysicalParams& params, bool histogram)
{
    const FitResult fit = histogram ? fit_velocity_distribution(velocity_histogram(velocities))
                                    : sample_width_ml(velocities);
    const double v0 = params.ground_velocity_variance();
    const double dv = fit.value("dv");
    return {hold, dv * dv / v0, 2.0 * dv * fit.error("dv") / v0};
}

TimeSweepResult run_time_sweep(const RunConfig& cfg, double r, std::uint64_t stream)
{
    TimeSweepResult out;
    out.r = r;
    const GaussianState initial = thermal_state(cfg.params, cfg.initial_occupation);
    ProtocolSchedule base = canonical_schedule(cfg.params, r, 0);
    base.heating_enabled = cfg.heating;
    if (cfg.optimize_t1) base = optimize_t1(base, initial);

    const auto holds = cfg.holds.holds();
    try {
        for (std::size_t i = 0; i < holds.size(); ++i) {
            const TofEnsemble ens = ensemble(initial, base.with_hold(holds[i]), cfg.noise, cfg.n_trials,
                                             derive_seed(cfg.master_seed, stream, i), cfg.workers);
            const VelocityExtraction vel = extract_velocities(ens, cfg.filter, cfg.workers);
            SweepPoint point;
            point.variance = estimate_variance(vel.velocities, holds[i], cfg.params, cfg.histogram_estimator);
            point.analytic = analytic_variance(r, holds[i], cfg.params, cfg.v_ini()).v_tilde
                + cfg.noise.lattice_jitter_variance;
            point.n_used = vel.velocities.size();
            point.n_dropped = vel.n_dropped;
            out.points.push_back(point);
        }
        std::vector<VariancePoint> points;
        for (const auto& p : out.points) points.push_back(p.variance);
        VarianceFitOptions options;
        options.include_cross_term = cfg.fit_cross_term;
        options.model_weights = cfg.fit_model_weights;
        out.fit = fit_variance_evolution(points, cfg.params.omega0, options);
        std::size_t dropped = 0;
        for (const auto& p : out.points) dropped += p.n_dropped;
        out.fit->n_dropped = dropped;
    } catch (const FitError& e) {
        out.error = e.what();
    }
    return out;
}

RSweepResult run_r_sweep(const RunConfig& cfg)
{
    std::set<double> distinct(cfg.r_values.begin(), cfg.r_values.end());
    if (distinct.size() < 3) throw DomainError("r-sweep needs at least 3 distinct r values");

    RSweepResult out;
    std::vector<SqueezePoint> minima;
    std::vector<SqueezePoint> maxima;
    for (std::size_t k = 0; k < cfg.r_values.size(); ++k) {
        out.sweeps.push_back(run_time_sweep(cfg, cfg.r_values[k], k));
        const auto& sweep = out.sweeps.back();
        if (!sweep.fit) {
            out.error = "r = " + format_number(sweep.r) + ": " + sweep.error;
            return out;
        }
        minima.push_back({sweep.r, sweep.fit->value("V1"), sweep.fit->error("V1")});
        maxima.push_back({sweep.r, sweep.fit->value("V2"), sweep.fit->error("V2")});
    }
    try {
        const auto phase = cfg.r_fit_position_term ? std::optional<double>(cfg.params.flight_phase()) : std::nullopt;
        out.minima = fit_r_dependence(minima, Branch::minima, std::nullopt, false, phase);
        out.maxima = fit_r_dependence(maxima, Branch::maxima, out.minima->value("Vn"), false, phase);
    } catch (const FitError& e) {
        out.error = e.what();
    }
    return out;
}

double oracle_threshold(std::size_t n_trials)
{
    if (n_trials < 1) throw DomainError("oracle needs at least one trial");
    return 0.02 * std::max(1.0, std::sqrt(1.0e5 / static_cast<double>(n_trials)));
}

OracleResult run_oracle_check(const RunConfig& cfg)
{
    OracleResult out;
    out.threshold = oracle_threshold(cfg.n_trials);
    out.low_n = cfg.n_trials < 100000;
    NoiseSpec noise = cfg.noise;
    noise.synthesize_traces = false;
    const GaussianState initial = thermal_state(cfg.params, cfg.initial_occupation);
    const double period = kTwoPi / cfg.params.omega0;
    const double norm = cfg.params.ground_velocity_variance() * cfg.params.t_tof * cfg.params.t_tof;

    for (std::size_t k = 0; k < cfg.r_values.size(); ++k) {
        const double r = cfg.r_values[k];
        ProtocolSchedule base = canonical_schedule(cfg.params, r, 0);
        base.heating_enabled = cfg.heating;
        for (std::size_t j = 0; j < cfg.oracle_holds; ++j) {
            const double hold = cfg.holds.start + period * static_cast<double>(j)
                / static_cast<double>(cfg.oracle_holds);
            const ProtocolSchedule schedule = base.with_hold(hold);
            const TofEnsemble ens = ensemble(initial, schedule, noise, cfg.n_trials,
                                             derive_seed(cfg.master_seed, k, j), cfg.workers);
            double sum = 0.0;
            for (const auto& t : ens.trials) sum += t.recapture_amplitude * t.recapture_amplitude;

            OraclePoint p;
            p.r = r;
            p.hold = hold;
            p.monte_carlo = sum / static_cast<double>(ens.trials.size()) / norm;
            p.analytic = analytic_variance(r, hold, cfg.params, cfg.v_ini()).v_tilde
                + noise.lattice_jitter_variance;
            p.covariance_route = propagated_variance(initial, schedule) + noise.lattice_jitter_variance;
            p.rel_deviation = p.monte_carlo / p.analytic - 1.0;
            out.max_abs_deviation = std::max(out.max_abs_deviation, std::abs(p.rel_deviation));
            out.points.push_back(p);
        }
    }
    return out;
}

namespace {

CsvTable read_table(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input_csv " + path);
    return read_csv(in);
}

double field(const CsvTable& t, std::size_t row, const char* name)
{
    const std::string& s = t.rows[row].at(t.column(name));
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string("input_csv: bad value in column ") + name + ": " + s);
    }
}

}  // namespace

CalibrationOutcome run_calibration(const RunConfig& cfg)
{
    CalibrationOutcome out;
    const double k_true = cfg.noise.volts_per_meter;
    const bool lattice = cfg.experiment == Experiment::calibration_lattice;
    if (!cfg.input_csv.empty()) {
        const CsvTable table = read_table(cfg.input_csv);
        if (lattice) {
            std::vector<LatticePoint> points;
            for (std::size_t i = 0; i < table.rows.size(); ++i) {
                points.push_back({kTwoPi * field(table, i, "dOmega_hz"), field(table, i, "value_volts")});
            }
            out.lattice = lattice_calibration(points, cfg.lattice.geometry);
        } else {
            std::vector<double> widths;
            std::vector<double> occupations;
            for (std::size_t i = 0; i < table.rows.size(); ++i) {
                occupations.push_back(field(table, i, "n_z"));
                widths.push_back(field(table, i, "value_volts"));
            }
            out.tof = tof_calibration(widths, occupations, cfg.params);
        }
        return out;
    }
    out.tof_run = simulate_tof_calibration(cfg.params, k_true, cfg.tof, derive_seed(cfg.master_seed, 1),
                                           cfg.workers);
    out.tof = out.tof_run->factor;
    if (lattice) {
        out.lattice_run = simulate_lattice_calibration(cfg.params, k_true, cfg.lattice,
                                                       derive_seed(cfg.master_seed, 2), cfg.workers);
        out.lattice = out.lattice_run->factor;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

nlohmann::ordered_json factor_json(const CalibrationFactor& k)
{
    nlohmann::ordered_json j;
    j["method"] = to_string(k.method);
    j["volts_per_meter"] = k.volts_per_meter;
    j["std_error"] = k.std_error;
    j["systematic_error"] = k.systematic_error;
    j["n_points"] = k.n_points;
    j["n_excluded"] = k.n_excluded;
    return j;
}

void write_sweep_rows(CsvWriter& csv, const TimeSweepResult& sweep, bool with_r)
{
    for (const auto& p : sweep.points) {
        if (with_r) csv.cell(sweep.r);
        csv.cell(p.variance.hold).cell(p.variance.v_tilde).cell(p.variance.std_error).cell(p.analytic)
            .cell(static_cast<unsigned long long>(p.n_used)).cell(static_cast<unsigned long long>(p.n_dropped))
            .end_row();
    }
}

std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ExitCode write_time_sweep(const RunConfig& cfg, const std::filesystem::path& dir,
                          nlohmann::ordered_json& results, std::ostream& log)
{
    const TimeSweepResult sweep = run_time_sweep(cfg, cfg.r);
    {
        auto out = open_output(dir / "fig2.csv");
        CsvWriter csv(out, {"hold_s", "v_tilde", "v_tilde_err", "v_tilde_analytic", "n_used", "n_dropped"});
        write_sweep_rows(csv, sweep, false);
    }
    results["r"] = sweep.r;
    results["n_points"] = sweep.points.size();
    if (!sweep.fit) {
        results["error"] = sweep.error;
        log << "time-sweep failed: " << sweep.error << '\n';
        return ExitCode::fit_failure;
    }
    const auto fit = fit_report(*sweep.fit);
    results["fit"] = fit;
    const double v1 = sweep.fit->value("V1");
    if (v1 > 0.0) results["squeezing_db"] = squeezing_db(v1);
    auto out = open_output(dir / "fit.json");
    out << fit.dump(2) << '\n';
    log << "V1 = " << format_number(v1) << " +- " << format_number(sweep.fit->error("V1"))
        << ", V2 = " << format_number(sweep.fit->value("V2")) << " +- " << format_number(sweep.fit->error("V2"));
    if (v1 > 0.0) log << ", squeezing " << format_number(squeezing_db(v1)) << " dB";
    log << '\n';
    return ExitCode::ok;
}

ExitCode write_r_sweep(const RunConfig& cfg, const std::filesystem::path& dir,
                       nlohmann::ordered_json& results, std::ostream& log)
{
    const RSweepResult sweep = run_r_sweep(cfg);
    {
        auto out = open_output(dir / "figS-varVp.csv");
        CsvWriter csv(out, {"r", "hold_s", "v_tilde", "v_tilde_err", "v_tilde_analytic", "n_used", "n_dropped"});
        for (const auto& s : sweep.sweeps) write_sweep_rows(csv, s, true);
    }
    {
        auto out = open_output(dir / "fig3.csv");
        CsvWriter csv(out, {"r", "v1", "v1_err", "v2", "v2_err", "v1_model", "v2_model"});
        for (const auto& s : sweep.sweeps) {
            if (!s.fit) continue;
            const double pos = cfg.r_fit_position_term
                ? std::exp(4.0 * s.r) / (cfg.params.flight_phase() * cfg.params.flight_phase()) : 0.0;
            const double v1_model = sweep.minima
                ? sweep.minima->value("Vn") + sweep.minima->value("Vini") * (std::exp(-4.0 * s.r) + pos) : 0.0;
            const double v2_model = sweep.maxima
                ? sweep.maxima->value("Vn") + sweep.maxima->value("Vini") * (std::exp(4.0 * s.r) + pos) : 0.0;
            csv.cell(s.r).cell(s.fit->value("V1")).cell(s.fit->error("V1")).cell(s.fit->value("V2"))
                .cell(s.fit->error("V2")).cell(v1_model).cell(v2_model).end_row();
        }
    }
    nlohmann::ordered_json per_r = nlohmann::ordered_json::array();
    for (const auto& s : sweep.sweeps) {
        nlohmann::ordered_json j;
        j["r"] = s.r;
        if (s.fit) j["fit"] = fit_report(*s.fit);
        if (!s.error.empty()) j["error"] = s.error;
        per_r.push_back(j);
    }
    results["sweeps"] = per_r;
    if (sweep.minima) results["minima_fit"] = fit_report(*sweep.minima);
    if (sweep.maxima) results["maxima_fit"] = fit_report(*sweep.maxima);
    if (!sweep.error.empty() || !sweep.minima || !sweep.maxima) {
        results["error"] = sweep.error;
        log << "r-sweep failed: " << sweep.error << '\n';
        return ExitCode::fit_failure;
    }
    log << "Vn = " << format_number(sweep.minima->value("Vn")) << " +- "
        << format_number(sweep.minima->error("Vn")) << ", Vini = " << format_number(sweep.minima->value("Vini"))
        << " +- " << format_number(sweep.minima->error("Vini")) << '\n';
    return ExitCode::ok;
}

ExitCode write_oracle(const RunConfig& cfg, const std::filesystem::path& dir,
                      nlohmann::ordered_json& results, std::ostream& log)
{
    const OracleResult oracle = run_oracle_check(cfg);
    {
        auto out = open_output(dir / "oracle.csv");
        CsvWriter csv(out, {"r", "hold_s", "v_tilde_monte_carlo", "v_tilde_analytic", "v_tilde_covariance",
                            "rel_deviation"});
        for (const auto& p : oracle.points) {
            csv.cell(p.r).cell(p.hold).cell(p.monte_carlo).cell(p.analytic).cell(p.covariance_route)
                .cell(p.rel_deviation).end_row();
        }
    }
    results["max_abs_rel_deviation"] = oracle.max_abs_deviation;
    results["threshold"] = oracle.threshold;
    results["low_n"] = oracle.low_n;
    results["heating"] = cfg.heating;
    if (cfg.heating) {
        results["heating_rate_2gamma_per_s"] = 2.0 * cfg.params.total_decoherence_rate();
    }
    results["passed"] = oracle.passed();
    log << "max |deviation| = " << format_number(oracle.max_abs_deviation) << " (threshold "
        << format_number(oracle.threshold) << (oracle.low_n ? ", low n" : "") << ")\n";
    return oracle.passed() ? ExitCode::ok : ExitCode::oracle_deviation;
}

ExitCode write_calibration(const RunConfig& cfg, const std::filesystem::path& dir,
                           nlohmann::ordered_json& results, std::ostream& log)
{
    const CalibrationOutcome cal = run_calibration(cfg);
    if (cal.tof_run) {
        auto out = open_output(dir / "figS-tof.csv");
        CsvWriter csv(out, {"temperature_k", "occupation", "width_volts", "width_err_volts", "model_width_volts",
                            "included"});
        const auto& k = cal.tof_run->factor;
        for (const auto& p : cal.tof_run->points) {
            const double model = k.volts_per_meter * cfg.params.t_tof
                * std::sqrt(cfg.params.hbar * cfg.params.omega0 * (p.occupation + 0.5) / cfg.params.mass);
            csv.cell(p.temperature).cell(p.occupation).cell(p.width_volts).cell(p.width_error).cell(model)
                .cell(static_cast<long long>(p.occupation > kMinCalibrationOccupation)).end_row();
        }
    }
    if (cal.lattice_run) {
        {
            auto out = open_output(dir / "fig4c.csv");
            CsvWriter csv(out, {"shift_hz", "tau_s", "amplitude_volts", "model_volts"});
            for (const auto& s : cal.lattice_run->shifts) {
                for (const auto& p : s.oscillation) {
                    const double model = lattice_shift_oscillation(s.fit.value("delta"), s.fit.value("omega0_prime"), p.tau);
                    csv.cell(s.d_omega / kTwoPi).cell(p.tau).cell(p.amplitude).cell(model).end_row();
                }
            }
        }
        auto out = open_output(dir / "fig4d.csv");
        CsvWriter csv(out, {"shift_hz", "delta_calculated_m", "amplitude_m", "amplitude_err_m",
                            "calculated_amplitude_m"});
        const double k = cal.tof->volts_per_meter;
        for (const auto& s : cal.lattice_run->shifts) {
            csv.cell(s.d_omega / kTwoPi).cell(s.delta_calculated).cell(2.0 * s.fit.value("delta") / k)
                .cell(2.0 * s.fit.error("delta") / k).cell(2.0 * s.delta_calculated).end_row();
        }
    }
    if (cal.tof) {
        results["tof"] = factor_json(*cal.tof);
        log << calibration_report(*cal.tof);
    }
    if (cal.lattice) {
        results["lattice"] = factor_json(*cal.lattice);
        log << calibration_report(*cal.lattice);
    }
    if (cal.tof && cal.lattice) {
        const double ratio = cal.lattice->volts_per_meter / cal.tof->volts_per_meter;
        results["ratio_lattice_over_tof"] = ratio;
        results["discrepancy_sigma"] = calibration_discrepancy(*cal.tof, *cal.lattice);
        log << "lattice / tof = " << format_number(ratio) << '\n';
    }
    if (cal.tof_run || cal.lattice_run) results["true_volts_per_meter"] = cfg.noise.volts_per_meter;
    return ExitCode::ok;
}

ExitCode write_budget(const RunConfig& cfg, const std::filesystem::path& dir,
                      nlohmann::ordered_json& results, std::ostream& log)
{
    const NoiseBudgetReport report = budget(cfg.budget);
    {
        auto out = open_output(dir / "budget.csv");
        write_budget_csv(out, report);
    }
    const std::string text = budget_text(report, cfg.fitted_vn);
    {
        auto out = open_output(dir / "budget.txt");
        out << text;
    }
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const auto& e : report.entries) {
        nlohmann::ordered_json j;
        j["label"] = std::string(1, e.label);
        j["description"] = e.description;
        j["value"] = e.value;
        j["kind"] = e.kind == BudgetKind::calculated ? "calculated" : "experimental_bound";
        if (!e.intermediate_name.empty()) j[e.intermediate_name] = e.intermediate;
        entries.push_back(j);
    }
    results["entries"] = entries;
    results["item_c_conversion"] = item_c_conversion();
    results["total"] = report.total;
    results["fitted_vn"] = cfg.fitted_vn;
    results["consistent"] = report.consistent_with(cfg.fitted_vn);
    log << text;
    return ExitCode::ok;
}

}  // namespace

ExitCode execute(const RunConfig& cfg, std::ostream& log)
{
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);

    nlohmann::ordered_json results = nlohmann::ordered_json::object();
    ExitCode code = ExitCode::ok;
    switch (cfg.experiment) {
    case Experiment::time_sweep: code = write_time_sweep(cfg, dir, results, log); break;
    case Experiment::r_sweep: code = write_r_sweep(cfg, dir, results, log); break;
    case Experiment::oracle_check: code = write_oracle(cfg, dir, results, log); break;
    case Experiment::calibration_tof:
    case Experiment::calibration_lattice: code = write_calibration(cfg, dir, results, log); break;
    case Experiment::noise_budget: code = write_budget(cfg, dir, results, log); break;
    }

    nlohmann::ordered_json report;
    report["tool"] = "squeezelab";
    report["version"] = kVersion;
    report["experiment"] = experiment_name(cfg.experiment);
    report["config_hash"] = cfg.config_hash;
    report["master_seed"] = cfg.master_seed;
    report["exit_code"] = static_cast<int>(code);
    report["config"] = cfg.echo;
    report["results"] = results;
    {
        auto out = open_output(dir / "report.json");
        out << report.dump(2) << '\n';
    }
    nlohmann::ordered_json prov;
    prov["version"] = kVersion;
    prov["config_hash"] = cfg.config_hash;
    prov["master_seed"] = cfg.master_seed;
    prov["workers"] = cfg.workers;
    prov["timestamp_utc"] = utc_timestamp();
    auto out = open_output(dir / "provenance.json");
    out << prov.dump(2) << '\n';
    return code;
}

}  // namespace squeezelab
