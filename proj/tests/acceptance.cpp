// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "squeezelab/analysis.hpp"
#include "squeezelab/experiments.hpp"
#include "squeezelab/phasespace.hpp"
#include "squeezelab/protocol.hpp"
#include "squeezelab/seeding.hpp"

using namespace squeezelab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...)
{
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

Config seeded(std::uint64_t seed)
{
    Config c;
    c.set("master_seed", std::to_string(seed));
    return c;
}

// 1. Monte Carlo variance versus the closed form, 1e5 trials, 5 r x 8 holds.
Outcome oracle_equivalence()
{
    Config c = seeded(20240101);
    c.set("workers", "1");
    const RunConfig cfg = make_run_config(Experiment::oracle_check, c);
    const auto start = std::chrono::steady_clock::now();
    const OracleResult res = run_oracle_check(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = res.points.size() == 40 && res.max_abs_deviation < 0.02 && cfg.n_trials == 100000;
    return {pass, fmt("max |rel dev| %.4f < 0.02 over %zu points, %zu trials, %.1f s single-threaded",
                      res.max_abs_deviation, res.points.size(), cfg.n_trials, secs)};
}

// 2. Quarter period at omega1 equals the squeeze operator.
Outcome squeeze_operator()
{
    const PhysicalParams p;
    Engine e(2);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double r = 1.2 * uniform01(e);
        const double w1 = reduced_frequency(p.omega0, r);
        const auto out = evolve_harmonic(ground_state(p), w1, kPi / (2 * w1)).cov();
        worst = std::max(worst, std::abs(out(0, 0) / std::exp(4 * r) - 1));
        worst = std::max(worst, std::abs(out(1, 1) / std::exp(-4 * r) - 1));
        worst = std::max(worst, std::abs(out(0, 1)) / std::exp(4 * r));
    }
    return {worst < 1e-10, fmt("max relative error %.2e < 1e-10 over 20 random r", worst)};
}

// 3. r = 0.85 time sweep with the injected floor, pinned seed.
Outcome figure_reproduction()
{
    Config c = seeded(1);
    c.set("noise_vn", "0.21");
    const RunConfig cfg = make_run_config(Experiment::time_sweep, c);
    const auto start = std::chrono::steady_clock::now();
    const TimeSweepResult res = run_time_sweep(cfg, 0.85);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res.fit) return {false, "fit failed: " + res.error};
    const double v1 = res.fit->value("V1");
    const double db = v1 > 0 ? squeezing_db(v1) : 0.0;
    auto inside = [](double v) { return v >= 0.28 && v <= 0.36 && v > 0 && std::abs(squeezing_db(v) + 4.9) <= 0.4; };
    const bool pass = inside(v1) && cfg.n_trials == 300 && res.points.size() == 80;

    // Informational only: how often an independent seed lands in both windows.
    // The verdict stays with the pinned seed above.
    const int seeds = 200;
    int hits = 0;
    double v1_sum = 0.0;
    for (int i = 0; i < seeds; ++i) {
        Config ci = seeded(derive_seed(3003, static_cast<std::uint64_t>(i)));
        ci.set("noise_vn", "0.21");
        const TimeSweepResult ri = run_time_sweep(make_run_config(Experiment::time_sweep, ci), 0.85);
        if (!ri.fit) continue;
        v1_sum += ri.fit->value("V1");
        hits += inside(ri.fit->value("V1")) ? 1 : 0;
    }
    return {pass, fmt("seed 1: V1 = %.4f +- %.4f in [0.28, 0.36], %.2f dB in -4.9 +- 0.4, V2 = %.1f, %.1f s; "
                      "%d/%d independent seeds inside both windows, mean V1 %.4f",
                      v1, res.fit->error("V1"), db, res.fit->value("V2"), secs, hits, seeds, v1_sum / seeds)};
}

// 4. r-sweep recovery over 100 replications.
Outcome r_sweep_recovery()
{
    const int reps = 100;
    int vn_cover = 0;
    int vini_cover = 0;
    int failed = 0;
    double vn_sum = 0.0;
    double vini_sum = 0.0;
    for (int i = 0; i < reps; ++i) {
        Config c = seeded(derive_seed(4004, static_cast<std::uint64_t>(i)));
        c.set("noise_vn", "0.21");
        const RSweepResult res = run_r_sweep(make_run_config(Experiment::r_sweep, c));
        if (!res.minima) {
            ++failed;
            continue;
        }
        const double vn = res.minima->value("Vn");
        const double vini = res.minima->value("Vini");
        vn_sum += vn;
        vini_sum += vini;
        vn_cover += std::abs(vn - 0.21) <= 2 * res.minima->error("Vn") ? 1 : 0;
        vini_cover += std::abs(vini - 2.96) <= 2 * res.minima->error("Vini") ? 1 : 0;
    }
    const int ok = reps - failed;
    const double vn_mean = ok ? vn_sum / ok : 0.0;
    const double vini_mean = ok ? vini_sum / ok : 0.0;
    const bool pass = failed == 0 && std::abs(vn_mean - 0.21) <= 0.03 && std::abs(vini_mean - 2.96) <= 0.3
                   && vn_cover >= 90 && vini_cover >= 90;
    return {pass, fmt("mean Vn %.4f (0.21 +- 0.03), mean Vini %.3f (2.96 +- 0.3), 2-sigma coverage %d%% / %d%%, "
                      "%d failed fits",
                      vn_mean, vini_mean, vn_cover, vini_cover, failed)};
}

// 5. Velocity fraction of the measured minimum.
Outcome velocity_fraction_claim()
{
    const double f = velocity_fraction(0.85, 80.75);
    return {std::abs(f - 0.87) <= 0.01, fmt("fraction %.4f in 0.87 +- 0.01", f)};
}

// 6. TOF and lattice calibrations on one ground truth, 100 replications.
Outcome calibration_agreement()
{
    const int reps = 100;
    int within = 0;
    int discrepant = 0;
    double worst = 0.0;
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) {
        const RunConfig cfg = make_run_config(Experiment::calibration_lattice,
                                              seeded(derive_seed(6006, static_cast<std::uint64_t>(i))));
        const CalibrationOutcome out = run_calibration(cfg);
        const double ratio = out.lattice->volts_per_meter / out.tof->volts_per_meter - 1.0;
        worst = std::max(worst, std::abs(ratio));
        within += std::abs(ratio) < 0.02 ? 1 : 0;
        discrepant += calibration_discrepancy(*out.lattice, *out.tof) >= 3.0 ? 1 : 0;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {within == reps, fmt("%d/%d replications with |k_lat/k_tof - 1| < 0.02 (worst %.4f); "
                                "discrepancy >= 3 in %d; %.1f s",
                                within, reps, worst, discrepant, secs)};
}

// 7. Noise budget at the tabulated inputs.
Outcome noise_budget_check()
{
    const NoiseInputs in = tabulated_defaults();
    const NoiseBudgetReport rep = budget(in);
    const auto& p = in.params;
    const double g = rep.entry('g').value;
    // Item (d) straight from its formula: (g t_tof dtheta / 2)^2 / V0, dtheta in radians.
    const double v_tilt = kStandardGravity * p.t_tof * (in.tilt_stability * kPi / 180.0) / 2.0;
    const double d_formula = v_tilt * v_tilt / (kHbar * p.omega0 / (2.0 * p.mass));
    const double d = rep.entry('d').value;
    const double dz = rep.entry('b').intermediate;
    const double vc = rep.entry('c').intermediate;

    const bool g_ok = std::abs(g / 2.5e-2 - 1) <= 0.10;
    const bool d_ok = std::abs(d / d_formula - 1) <= 1e-12;
    const bool dz_ok = std::abs(dz / 8.6e-17 - 1) <= 0.02;
    const bool vc_ok = std::abs(vc / 3e-14 - 1) <= 0.02;
    const bool total_ok = rep.total < 0.19;
    auto mark = [](bool ok) { return ok ? "ok" : "MISS"; };
    return {g_ok && d_ok && dz_ok && vc_ok && total_ok,
            fmt("(g) %.3e %s; (d) %.4e vs formula %.4e %s; dz %.3e %s; v_c %.3e vs 3e-14 %s; "
                "total %.4f < 0.19 %s",
                g, mark(g_ok), d, d_formula, mark(d_ok), dz, mark(dz_ok), vc, mark(vc_ok), rep.total,
                mark(total_ok))};
}

std::map<std::string, std::string> run_into(const std::string& experiment, unsigned workers, const fs::path& dir)
{
    fs::remove_all(dir);
    Config c = seeded(88);
    c.set("noise_vn", "0.21");
    c.set("workers", std::to_string(workers));
    c.set("output_dir", dir.string());
    std::ostringstream log;
    (void)execute(make_run_config(parse_experiment(experiment), c), log);
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().filename() == "provenance.json") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        files[entry.path().filename().string()] = ss.str();
    }
    fs::remove_all(dir);
    return files;
}

// 8. Property suites.
Outcome property_suites()
{
    const auto start = std::chrono::steady_clock::now();
    const PhysicalParams p;
    Engine e(8);
    std::vector<std::string> failures;

    // Symplectic determinant preservation.
    double det_err = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double n = 3 * uniform01(e);
        const double th = kTwoPi * uniform01(e);
        Eigen::Matrix2d rot;
        rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        const Eigen::Matrix2d d = Eigen::Vector2d((2 * n + 1) * std::exp(3 * uniform01(e)),
                                                  (2 * n + 1) * std::exp(-3 * uniform01(e)))
                                      .asDiagonal();
        const GaussianState s(Eigen::Vector2d::Zero(), rot * d * rot.transpose(), p);
        const double det = s.uncertainty_product();
        const auto h = evolve_harmonic(s, p.omega0 * std::exp(-2.4 * uniform01(e)), 20e-6 * uniform01(e));
        const auto f = free_flight(s, 60e-6 * uniform01(e));
        det_err = std::max({det_err, std::abs(h.uncertainty_product() / det - 1),
                            std::abs(f.uncertainty_product() / det - 1)});
    }
    if (det_err > 1e-12) failures.push_back(fmt("determinant %.1e", det_err));

    // Heisenberg bound after random compositions.
    int violations = 0;
    for (int i = 0; i < 500; ++i) {
        GaussianState s = thermal_state(p, 2 * uniform01(e));
        for (int k = 0; k < 12; ++k) {
            const double u = uniform01(e);
            const double dt = 10e-6 * uniform01(e);
            const double w = p.omega0 * std::exp(-2.4 * uniform01(e));
            if (u < 0.3) s = evolve_harmonic(s, w, dt);
            else if (u < 0.5) s = free_flight(s, dt);
            else if (u < 0.7) s = add_heating(s, dt);
            else s = evolve_harmonic_heated(s, w, dt);
            violations += s.satisfies_uncertainty(1e-9) ? 0 : 1;
        }
    }
    if (violations) failures.push_back(fmt("%d uncertainty violations", violations));

    // Histogram bin width rule and fit scale equivariance.
    double bin_err = 0.0;
    double scale_err = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Engine g(seed);
        const std::size_t n = 50 + 50 * seed;
        std::vector<double> v(n);
        for (double& x : v) x = 1.9e-6 * standard_normal(g);
        long double mean = 0;
        for (double x : v) mean += x;
        mean /= n;
        long double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double h_ref = 1.75 * std::sqrt(static_cast<double>(ss / (n - 1))) / std::cbrt(static_cast<double>(n));
        const Histogram hist = velocity_histogram(v);
        bin_err = std::max(bin_err, std::abs(hist.bin_width / h_ref - 1));
        const FitResult base = fit_velocity_distribution(hist);
        std::vector<double> scaled = v;
        for (double& x : scaled) x *= 7.0;
        const FitResult sc = fit_velocity_distribution(velocity_histogram(scaled));
        scale_err = std::max(scale_err, std::abs(sc.value("dv") / (7.0 * base.value("dv")) - 1));
    }
    if (bin_err > 1e-12) failures.push_back(fmt("bin width %.1e", bin_err));
    if (scale_err > 1e-9) failures.push_back(fmt("scale equivariance %.1e", scale_err));

    // End-to-end byte determinism across worker counts.
    const fs::path tmp = fs::temp_directory_path();
    int mismatched = 0;
    for (const char* exp : {"time-sweep", "calib-tof", "noise-budget"}) {
        const auto a = run_into(exp, 1, tmp / "squeezelab_accept_w1");
        const auto b = run_into(exp, 6, tmp / "squeezelab_accept_w6");
        if (a.empty() || a != b) ++mismatched;
    }
    if (mismatched) failures.push_back(fmt("%d experiments not byte-identical", mismatched));

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string detail = fmt("det err %.1e, 0/6000 bound violations, bin err %.1e, scale err %.1e, "
                             "byte-identical across 1 and 6 workers; %.1f s",
                             det_err, bin_err, scale_err, secs);
    if (!failures.empty()) {
        detail = "failed:";
        for (const auto& f : failures) detail += " " + f + ";";
    }
    return {failures.empty() && secs < 120.0, detail};
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 oracle equivalence", oracle_equivalence},
        {"2 squeeze-operator equivalence", squeeze_operator},
        {"3 figure reproduction (r = 0.85)", figure_reproduction},
        {"4 r-sweep fit recovery", r_sweep_recovery},
        {"5 velocity fraction", velocity_fraction_claim},
        {"6 calibration cross-agreement", calibration_agreement},
        {"7 noise budget", noise_budget_check},
        {"8 property suites", property_suites},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        std::printf("%s AC%s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
