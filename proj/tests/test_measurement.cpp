#include <cmath>
#include <numeric>
#include <sstream>

#include <doctest.h>

#include "squeezelab/analysis.hpp"
#include "squeezelab/csv.hpp"
#include "squeezelab/measurement.hpp"

using namespace squeezelab;

namespace {

double mean_of(const std::vector<double>& x)
{
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(const std::vector<double>& x)
{
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

std::vector<double> velocities(const TofEnsemble& ens)
{
    std::vector<double> out;
    for (const auto& t : ens.trials) out.push_back(t.signed_amplitude() / ens.schedule.t_tof);
    return out;
}

GaussianState point_state(const PhysicalParams& p, double z, double v)
{
    return GaussianState(Eigen::Vector2d(z / p.position_scale(), v / p.velocity_scale()),
                         1e-24 * Eigen::Matrix2d::Identity(), p);
}

}  // namespace

TEST_CASE("release sampling matches the ground-state velocity scale")
{
    const PhysicalParams p;
    const auto g = ground_state(p);
    Engine e(7);
    std::vector<double> v(1000000);
    for (double& x : v) x = sample_release(g, e).v;
    CHECK(std::sqrt(variance_of(v)) == doctest::Approx(1.865e-6).epsilon(2e-3));
    CHECK(std::abs(mean_of(v)) < 5 * 1.865e-6 / 1000.0);

    Engine a(42);
    Engine b(42);
    const auto sa = sample_release(g, a);
    const auto sb = sample_release(g, b);
    CHECK(sa.z == sb.z);
    CHECK(sa.v == sb.v);

    const auto pt = point_state(p, 3e-10, -2e-6);
    Engine c(1);
    const auto s = sample_release(pt, c);
    CHECK(s.z == doctest::Approx(3e-10).epsilon(1e-9));
    CHECK(s.v == doctest::Approx(-2e-6).epsilon(1e-9));
}

TEST_CASE("single trial arithmetic")
{
    const PhysicalParams p;
    const auto sched = canonical_schedule(p, 0.0, 0);
    const auto t = run_tof_trial(point_state(p, 0.0, 1e-6), sched, NoiseSpec{}, 3);
    CHECK(t.z_final == doctest::Approx(5.1e-11).epsilon(1e-8));
    CHECK(t.recapture_amplitude == doctest::Approx(5.104e-11).epsilon(5e-4));
    CHECK(t.recapture_amplitude
          == doctest::Approx(std::hypot(t.z_final, t.v_final / p.omega0)).epsilon(1e-12));
    CHECK(t.trace.samples.empty());

    auto zero = sched;
    zero.t_tof = 0.0;
    CHECK(run_tof_trial(point_state(p, 0.0, 0.0), zero, NoiseSpec{}, 3).recapture_amplitude < 1e-20);

    // Constant drift shifts the displacement by v0 t_tof.
    NoiseSpec drift;
    drift.drift_velocity = 2e-7;
    const auto d = run_tof_trial(point_state(p, 0.0, 1e-6), sched, drift, 3);
    CHECK(d.z_final - t.z_final == doctest::Approx(2e-7 * 51e-6).epsilon(1e-9));
}

TEST_CASE("property: amplitude identity")
{
    const PhysicalParams p;
    const auto th = thermal_state(p, 0.98);
    const auto sched = canonical_schedule(p, 0.5, 1);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto t = run_tof_trial(run_protocol(th, sched), sched, NoiseSpec{}, seed);
        REQUIRE(t.recapture_amplitude
                == doctest::Approx(std::hypot(t.z_final, t.v_final / p.omega0)).epsilon(1e-12));
        // z(0) = A sin(phase) for the recaptured oscillation and any 2 pi multiple of phase.
        for (int k = -2; k <= 2; ++k) {
            REQUIRE(t.recapture_amplitude * std::sin(t.phase + k * kTwoPi)
                    == doctest::Approx(t.z_final).epsilon(1e-9).scale(t.recapture_amplitude));
        }
    }
}

TEST_CASE("noise spec validation")
{
    NoiseSpec n;
    CHECK_NOTHROW(n.validate());
    n.sample_rate = 2 * NoiseSpec::kPassbandTop;
    CHECK_THROWS_AS(n.validate(), DomainError);
    n = NoiseSpec{};
    n.detector_noise_density = -1;
    CHECK_THROWS_AS(n.validate(), DomainError);
    n = NoiseSpec{};
    n.volts_per_meter = 0;
    CHECK_THROWS_AS(n.validate(), DomainError);
}

TEST_CASE("ensemble determinism and independence")
{
    const PhysicalParams p;
    const auto g = ground_state(p);
    const auto sched = canonical_schedule(p, 0.0, 0);
    const auto a = ensemble(g, sched, NoiseSpec{}, 300, 77, 1);
    const auto b = ensemble(g, sched, NoiseSpec{}, 300, 77, 5);
    REQUIRE(a.trials.size() == 300);
    CHECK(a.n_trials == 300);
    bool identical = true;
    for (std::size_t i = 0; i < 300; ++i) {
        identical = identical && a.trials[i].recapture_amplitude == b.trials[i].recapture_amplitude
                 && a.trials[i].seed == b.trials[i].seed && a.trials[i].seed == derive_seed(77, i);
    }
    CHECK(identical);

    // Ground state velocity width within three standard errors.
    const auto v = velocities(a);
    const double sd = std::sqrt(variance_of(v));
    const double expected = p.velocity_scale() * std::sqrt(1 + 2 / (p.flight_phase() * p.flight_phase()));
    CHECK(std::abs(sd - expected) < 3 * expected / std::sqrt(2.0 * 299));

    // Disjoint seeds: amplitude correlation below 3 / sqrt(n).
    const auto c = ensemble(g, sched, NoiseSpec{}, 300, 78, 0);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < 300; ++i) {
        x.push_back(a.trials[i].recapture_amplitude);
        y.push_back(c.trials[i].recapture_amplitude);
    }
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < 300; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 3 / std::sqrt(300.0));

    CHECK_THROWS_AS((void)ensemble(g, sched, NoiseSpec{}, 0, 1), DomainError);
}

TEST_CASE("thermal ensemble variance and lattice jitter")
{
    const PhysicalParams p;
    const auto sched = canonical_schedule(p, 0.0, 0);
    const double n = 0.98;
    const double corr = 1 + 2 / (p.flight_phase() * p.flight_phase());
    const std::size_t trials = 100000;
    const auto ens = ensemble(thermal_state(p, n), sched, NoiseSpec{}, trials, 5);
    const double var = variance_of(velocities(ens)) / p.ground_velocity_variance();
    const double tol = 4 * std::sqrt(2.0 / trials);
    CHECK(std::abs(var / ((2 * n + 1) * corr) - 1) < tol);

    // Jitter adds its normalized variance on top of the same state.
    NoiseSpec jitter;
    jitter.lattice_jitter_variance = 0.21;
    const auto ej = ensemble(thermal_state(p, n), sched, jitter, trials, 5);
    const double vj = variance_of(velocities(ej)) / p.ground_velocity_variance();
    CHECK(std::abs(vj - ((2 * n + 1) * corr + 0.21)) < tol * 3.2);
}

TEST_CASE("trace synthesis")
{
    const PhysicalParams p;
    NoiseSpec n;
    n.volts_per_meter = 2e9;
    const auto t = synthesize_trace(1e-10, 0.3, p, n, 1);
    CHECK(t.samples.size() == 3200);
    double peak = 0.0;
    for (std::size_t i = 0; i < t.samples.size(); ++i) {
        REQUIRE(t.samples[i] == doctest::Approx(0.2 * std::sin(p.omega0 * t.time(i) + 0.3)).scale(1.0));
        peak = std::max(peak, std::abs(t.samples[i]));
    }
    CHECK(peak == doctest::Approx(0.2).epsilon(1e-3));

    NoiseSpec noisy;
    noisy.detector_noise_density = 1e-4;
    const auto z = synthesize_trace(0.0, 0.0, p, noisy, 9);
    double m = 0.0;
    double s2 = 0.0;
    for (double v : z.samples) {
        m += v;
        s2 += v * v;
    }
    m /= static_cast<double>(z.samples.size());
    const double sigma = 1e-4 * std::sqrt(3.2e6 / 2);
    CHECK(std::abs(m) < 4 * sigma / std::sqrt(3200.0));
    CHECK(std::sqrt(s2 / 3200.0) == doctest::Approx(sigma).epsilon(0.05));

    const auto again = synthesize_trace(0.0, 0.0, p, noisy, 9);
    CHECK(again.samples == z.samples);
    CHECK_THROWS_AS((void)synthesize_trace(-1.0, 0.0, p, n, 1), DomainError);
}

TEST_CASE("recorder high-pass response matches the time-domain filter")
{
    const double fs = 3.2e6;
    for (double f : {60e3, 150e3, 253e3, 500e3}) {
        Trace t;
        t.sample_rate = fs;
        t.samples.resize(64000);
        for (std::size_t i = 0; i < t.samples.size(); ++i) t.samples[i] = std::sin(kTwoPi * f * t.time(i));
        apply_recorder_highpass(t);
        // Steady-state amplitude over the final part of the record.
        double peak = 0.0;
        for (std::size_t i = 48000; i < t.samples.size(); ++i) peak = std::max(peak, std::abs(t.samples[i]));
        CHECK(peak == doctest::Approx(std::abs(recorder_highpass_response(f, fs))).epsilon(0.01));
    }
    CHECK(std::abs(recorder_highpass_response(10e3, fs)) < 1e-6);
    CHECK(std::abs(recorder_highpass_response(1.5e6, fs)) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("csv exports")
{
    const PhysicalParams p;
    const auto ens = ensemble(ground_state(p), canonical_schedule(p, 0.0, 0), NoiseSpec{}, 4, 2, 1);
    std::stringstream out;
    write_ensemble_csv(out, ens);
    const auto table = read_csv(out);
    CHECK(table.header == std::vector<std::string>{"trial", "seed", "amplitude_m", "velocity_m_per_s"});
    REQUIRE(table.rows.size() == 4);
    CHECK(std::stod(table.rows[2][2]) == ens.trials[2].recapture_amplitude);

    Trace t;
    t.sample_rate = 1e6;
    t.samples = {0.5, -0.25};
    std::stringstream tout;
    write_trace_csv(tout, t);
    const auto tt = read_csv(tout);
    CHECK(tt.header == std::vector<std::string>{"t_seconds", "signal"});
    CHECK(std::stod(tt.rows[1][0]) == 1e-6);
    CHECK(std::stod(tt.rows[1][1]) == -0.25);
}
