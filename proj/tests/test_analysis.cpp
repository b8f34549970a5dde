#include <cmath>
#include <vector>

#include <doctest.h>

#include "squeezelab/analysis.hpp"
#include "squeezelab/protocol.hpp"

using namespace squeezelab;

namespace {

Trace sine_trace(double amplitude, double f, double phase, double offset, double noise_sigma,
                 std::uint64_t seed, double fs = 3.2e6, std::size_t n = 3200)
{
    Trace t;
    t.sample_rate = fs;
    t.samples.resize(n);
    Engine e(seed);
    for (std::size_t i = 0; i < n; ++i) {
        t.samples[i] = amplitude * std::sin(kTwoPi * f * t.time(i) + phase) + offset
                     + noise_sigma * standard_normal(e);
    }
    return t;
}

std::vector<double> gaussian_sample(double mean, double sd, std::size_t n, std::uint64_t seed)
{
    Engine e(seed);
    std::vector<double> out(n);
    for (double& v : out) v = mean + sd * standard_normal(e);
    return out;
}

}  // namespace

TEST_CASE("band-pass design")
{
    const FilterSpec spec;
    CHECK(spec.order == 10);
    CHECK(spec.center == 253e3);
    CHECK(spec.bandwidth == 20e3);
    const auto taps = design_bandpass(spec, 3.2e6);
    REQUIRE(taps.size() == 11);
    for (std::size_t i = 0; i < taps.size(); ++i) CHECK(taps[i] == doctest::Approx(taps[10 - i]));
    CHECK(std::abs(fir_response(taps, 0.0, 3.2e6)) < 1e-3);
    CHECK(std::abs(fir_response(taps, 253e3, 3.2e6)) == doctest::Approx(1.0).epsilon(1e-9));
    // Linear phase referenced to the tap center: zero phase in the passband.
    CHECK(std::abs(std::arg(fir_response(taps, 253e3, 3.2e6))) < 1e-9);

    FilterSpec odd = spec;
    odd.order = 9;
    CHECK_THROWS_AS((void)design_bandpass(odd, 3.2e6), DomainError);
    CHECK_THROWS_AS((void)design_bandpass(spec, 500e3), DomainError);
}

TEST_CASE("band-pass filtering")
{
    const FilterSpec spec;
    // DC input is suppressed away from the padded edges.
    Trace dc;
    dc.sample_rate = 3.2e6;
    dc.samples.assign(3200, 1.0);
    const auto fdc = fir_bandpass(dc, spec);
    for (std::size_t i = 5; i + 5 < fdc.samples.size(); ++i) REQUIRE(std::abs(fdc.samples[i]) < 1e-3);

    Trace zero = dc;
    zero.samples.assign(3200, 0.0);
    for (double v : fir_bandpass(zero, spec).samples) REQUIRE(v == 0.0);

    // A 253 kHz tone keeps its amplitude and phase.
    const auto tone = sine_trace(1.0, 253e3, 0.7, 0.0, 0.0, 1);
    Trace filtered = fir_bandpass(tone, spec);
    filtered.samples.erase(filtered.samples.begin(), filtered.samples.begin() + 5);
    filtered.samples.resize(filtered.samples.size() - 5);
    filtered.t0 = 5 / 3.2e6;
    const auto fit = fit_sinusoid(filtered, 253e3);
    CHECK(fit.value("amplitude") == doctest::Approx(1.0).epsilon(0.01));
    CHECK(fit.value("phase") == doctest::Approx(0.7).epsilon(1e-3));
}

TEST_CASE("sinusoid fit")
{
    const auto exact = fit_sinusoid(sine_trace(1.0, 253e3, 1.2, 0.05, 0.0, 1), 250e3);
    CHECK(exact.value("amplitude") == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(exact.value("frequency") == doctest::Approx(253e3).epsilon(1e-9));
    CHECK(exact.value("phase") == doctest::Approx(1.2).epsilon(1e-6));
    CHECK(exact.value("offset") == doctest::Approx(0.05).epsilon(1e-6));
    CHECK_FALSE(exact.has_flag("below_noise_floor"));

    // Negative amplitude convention: phase moves by pi instead.
    const auto neg = fit_sinusoid(sine_trace(-2.0, 253e3, 0.3, 0.0, 0.0, 1), 253e3);
    CHECK(neg.value("amplitude") == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(neg.value("phase") == doctest::Approx(0.3 + kPi).epsilon(1e-6));

    CHECK_THROWS_AS((void)fit_sinusoid(sine_trace(1.0, 253e3, 0, 0, 0, 1, 3.2e6, 40), 253e3), DomainError);
    CHECK_THROWS_AS((void)fit_sinusoid(sine_trace(1.0, 253e3, 0, 0, 0, 1), 0.0), DomainError);
}

TEST_CASE("sinusoid fit of pure noise is flagged")
{
    int flagged = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto fit = fit_sinusoid(sine_trace(0.0, 253e3, 0, 0, 0.1, seed), 253e3);
        CHECK(fit.value("amplitude") < 5 * 0.1 * std::sqrt(2.0 / 3200));
        flagged += fit.has_flag("below_noise_floor") ? 1 : 0;
    }
    CHECK(flagged >= 45);
}

TEST_CASE("sinusoid amplitude bias at 20 dB SNR")
{
    // Signal power A^2/2 over noise power sigma^2 = 100.
    const double sigma = std::sqrt(0.5 / 100.0);
    double sum = 0.0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        sum += fit_sinusoid(sine_trace(1.0, 253e3, 0.4, 0.0, sigma, 1000 + i), 253e3).value("amplitude");
    }
    CHECK(std::abs(sum / trials - 1.0) < 0.005);
}

TEST_CASE("velocity extraction from traces agrees with exact amplitudes")
{
    const PhysicalParams p;
    NoiseSpec noise;
    noise.synthesize_traces = true;
    noise.volts_per_meter = 1e9;
    const auto sched = canonical_schedule(p, 0.4, 0);
    const auto ens = ensemble(thermal_state(p, 0.98), sched, noise, 40, 3, 2);
    const auto ex = extract_velocities(ens, FilterSpec{}, 2);
    REQUIRE(ex.velocities.size() == 40);
    CHECK(ex.n_dropped == 0);
    CHECK(ex.drop_fraction() == 0.0);
    for (std::size_t i = 0; i < 40; ++i) {
        const double exact = ens.trials[i].signed_amplitude() / sched.t_tof;
        REQUIRE(ex.velocities[i] == doctest::Approx(exact).epsilon(1e-3).scale(1e-8));
    }

    noise.synthesize_traces = false;
    const auto plain = extract_velocities(ensemble(thermal_state(p, 0.98), sched, noise, 40, 3, 2));
    CHECK(plain.velocities.size() == 40);
}

TEST_CASE("histogram bin width")
{
    CHECK(half_scott_bin_width(1.0, 8) == doctest::Approx(0.875));
    CHECK(half_scott_bin_width(1.9e-6, 300) == doctest::Approx(4.97e-7).epsilon(1e-3));
    CHECK_THROWS_AS((void)half_scott_bin_width(1.0, 0), DomainError);

    const auto v = gaussian_sample(0.0, 1.9e-6, 300, 4);
    const auto h = velocity_histogram(v);
    CHECK(h.total() == 300);
    CHECK(h.bin_edges.size() == h.counts.size() + 1);
    CHECK(h.bin_edges.front() <= *std::min_element(v.begin(), v.end()));
    CHECK(h.bin_edges.back() >= *std::max_element(v.begin(), v.end()));
    double mean = 0.0;
    for (double x : v) mean += x / 300.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(h.bin_width == doctest::Approx(half_scott_bin_width(std::sqrt(ss / 299.0), 300)).epsilon(1e-12));

    CHECK_THROWS_AS((void)velocity_histogram(std::vector<double>(20, 1.5)), DomainError);
    CHECK_THROWS_AS((void)velocity_histogram(std::vector<double>(5, 1.0)), DomainError);
}

TEST_CASE("Gaussian fit of velocity distributions")
{
    const double dv = 1.865e-6;
    const auto v = gaussian_sample(0.0, dv, 300, 21);
    const auto fit = fit_velocity_distribution(velocity_histogram(v));
    CHECK(std::abs(fit.value("dv") - dv) < 2 * fit.error("dv"));
    CHECK(std::abs(fit.value("v0")) < 2 * fit.error("v0"));
    CHECK(fit.error("dv") > 0.0);

    // Two-point degenerate input has too few bins.
    std::vector<double> two(20, -1.0);
    for (std::size_t i = 0; i < 10; ++i) two[i] = 1.0;
    CHECK_THROWS_AS((void)fit_velocity_distribution(velocity_histogram(two)), DomainError);

    const auto ml = sample_width_ml(v);
    CHECK(ml.value("dv") == doctest::Approx(fit.value("dv")).epsilon(0.05));
}

TEST_CASE("property: translation and scale equivariance of the Gaussian fit")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto v = gaussian_sample(0.0, 1.0, 300, seed);
        const auto base = fit_velocity_distribution(velocity_histogram(v));
        std::vector<double> shifted = v;
        for (double& x : shifted) x += 0.75;
        const auto sh = fit_velocity_distribution(velocity_histogram(shifted));
        CHECK(sh.value("v0") - base.value("v0") == doctest::Approx(0.75).epsilon(1e-9));
        CHECK(sh.value("dv") == doctest::Approx(base.value("dv")).epsilon(1e-9));
        std::vector<double> scaled = v;
        for (double& x : scaled) x *= 3.0e-6;
        const auto sc = fit_velocity_distribution(velocity_histogram(scaled));
        CHECK(sc.value("dv") == doctest::Approx(3.0e-6 * base.value("dv")).epsilon(1e-9));
    }
}

TEST_CASE("property: pipeline closure recovers the propagated width")
{
    const PhysicalParams p;
    const auto th = thermal_state(p, 0.98);
    int within2 = 0;
    int cases = 0;
    for (double r : {0.0, 0.40, 0.58, 0.73, 0.85}) {
        for (double hold : {0.0, kPi / (2 * p.omega0), 2 * kPi / p.omega0}) {
            const auto sched = canonical_schedule(p, r, 0).with_hold(hold);
            const auto ens = ensemble(th, sched, NoiseSpec{}, 300, derive_seed(17, cases), 0);
            const auto ex = extract_velocities(ens);
            const auto fit = fit_velocity_distribution(velocity_histogram(ex.velocities));
            const double expected = std::sqrt(propagated_variance(th, sched) * p.ground_velocity_variance());
            const double z = std::abs(fit.value("dv") - expected) / fit.error("dv");
            CHECK(z < 3.0);
            within2 += z < 2.0 ? 1 : 0;
            ++cases;
        }
    }
    // Two-sigma coverage over the grid, allowing the expected ~5% excursions.
    CHECK(within2 >= cases - 2);
}

TEST_CASE("variance evolution fit")
{
    const double w0 = kTwoPi * 252e3;
    std::vector<VariancePoint> pts;
    for (int i = 0; i < 80; ++i) {
        const double hold = i * 0.1e-6;
        const double c = std::cos(w0 * hold);
        const double s = std::sin(w0 * hold);
        pts.push_back({hold, 0.32 * c * c + 104 * s * s, 0.0});
    }
    const auto fit = fit_variance_evolution(pts, w0);
    CHECK(fit.value("V1") == doctest::Approx(0.32).epsilon(1e-9));
    CHECK(fit.value("V2") == doctest::Approx(104).epsilon(1e-9));
    CHECK_FALSE(fit.has_flag("clipped_at_zero"));

    std::vector<VariancePoint> flat = pts;
    for (auto& q : flat) q.v_tilde = 2.5;
    const auto ff = fit_variance_evolution(flat, w0);
    CHECK(ff.value("V1") == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(ff.value("V2") == doctest::Approx(2.5).epsilon(1e-9));

    // Non-negativity: data pulling V1 below zero is clipped.
    std::vector<VariancePoint> neg = pts;
    for (auto& q : neg) q.v_tilde -= 1.0;
    const auto nf = fit_variance_evolution(neg, w0);
    CHECK(nf.value("V1") >= 0.0);
    CHECK(nf.has_flag("clipped_at_zero"));

    const std::vector<VariancePoint> few(pts.begin(), pts.begin() + 3);
    CHECK_THROWS_AS((void)fit_variance_evolution(few, w0), DomainError);
    const std::vector<VariancePoint> narrow{{0, 1, 0}, {1e-8, 1, 0}, {2e-8, 1, 0}, {3e-8, 1, 0}};
    CHECK_THROWS_AS((void)fit_variance_evolution(narrow, w0), DomainError);
}

TEST_CASE("fit consistency with the closed form at quarter-period holds")
{
    const PhysicalParams p;
    for (double r : {0.40, 0.58, 0.73, 0.85}) {
        std::vector<VariancePoint> pts;
        for (int k = 0; k < 12; ++k) {
            const double hold = k * kPi / (2 * p.omega0);
            pts.push_back({hold, analytic_variance(r, hold, p, 2.96).v_tilde, 0.0});
        }
        const auto fit = fit_variance_evolution(pts, p.omega0);
        const auto simple = analytic_variance(r, 0.0, p, 2.96);
        CHECK(fit.value("V1") == doctest::Approx(simple.v1_tilde).epsilon(5e-3));
        CHECK(fit.value("V2") == doctest::Approx(simple.v2_tilde).epsilon(5e-3));
    }

    // Over a dense grid the free cross term absorbs the sin(2 omega0 hold) part exactly.
    const double r = 0.85;
    const double wt = p.flight_phase();
    std::vector<VariancePoint> dense;
    for (int i = 0; i < 80; ++i) {
        const double hold = i * 0.1e-6;
        dense.push_back({hold, analytic_variance(r, hold, p, 2.96).v_tilde, 0.0});
    }
    const auto fit = fit_variance_evolution(dense, p.omega0, {.include_cross_term = true});
    CHECK(fit.value("C") == doctest::Approx(-2 * 2.96 * std::sinh(4 * r) / wt).epsilon(1e-9));
    CHECK(fit.value("V1") == doctest::Approx(2.96 * (2 * std::cosh(4 * r) / (wt * wt) + std::exp(-4 * r))).epsilon(1e-9));
}

TEST_CASE("squeezing-parameter dependence fit")
{
    const std::vector<double> rs{0.0, 0.40, 0.58, 0.73, 0.85};
    std::vector<SqueezePoint> minima;
    std::vector<SqueezePoint> maxima;
    for (double r : rs) {
        minima.push_back({r, 0.21 + 2.96 * std::exp(-4 * r), 0.0});
        maxima.push_back({r, 0.21 + 2.96 * std::exp(4 * r), 0.0});
    }
    CHECK(minima[0].value == doctest::Approx(0.21 + 2.96));
    const auto fmin = fit_r_dependence(minima, Branch::minima);
    CHECK(fmin.value("Vn") == doctest::Approx(0.21).epsilon(1e-9));
    CHECK(fmin.value("Vini") == doctest::Approx(2.96).epsilon(1e-9));
    const auto fmax = fit_r_dependence(maxima, Branch::maxima, 0.21);
    CHECK(fmax.value("Vini") == doctest::Approx(2.96).epsilon(1e-9));
    CHECK(fmax.value("Vn") == 0.21);
    CHECK(fmax.error("Vn") == 0.0);
    CHECK(fmax.has_flag("Vn_fixed"));

    // With the flight position term.
    const double wt = 80.75;
    for (auto& q : minima) q.value += 2.96 * std::exp(4 * q.r) / (wt * wt);
    const auto fpos = fit_r_dependence(minima, Branch::minima, std::nullopt, false, wt);
    CHECK(fpos.value("Vn") == doctest::Approx(0.21).epsilon(1e-9));
    CHECK(fpos.value("Vini") == doctest::Approx(2.96).epsilon(1e-9));
    CHECK(fpos.has_flag("position_term"));

    const std::vector<SqueezePoint> two{{0.1, 1, 0}, {0.1, 1.1, 0}, {0.5, 0.5, 0}};
    CHECK_THROWS_AS((void)fit_r_dependence(two, Branch::minima), DomainError);
}

TEST_CASE("decibel conversion")
{
    CHECK(squeezing_db(1.0) == 0.0);
    CHECK(squeezing_db(0.32) == doctest::Approx(-4.95).epsilon(1e-3));
    CHECK(squeezing_db(0.5) == doctest::Approx(-3.01).epsilon(1e-3));
    CHECK_THROWS_AS((void)squeezing_db(0.0), DomainError);
    CHECK_THROWS_AS((void)squeezing_db(-1.0), DomainError);
    double prev = squeezing_db(1e-3);
    for (double v = 2e-3; v < 200; v *= 1.3) {
        const double db = squeezing_db(v);
        REQUIRE(db > prev);
        prev = db;
    }
}

TEST_CASE("occupation from velocity width")
{
    const PhysicalParams p;
    const double ground = p.velocity_scale();
    CHECK(occupation_from_width(ground, p).n == doctest::Approx(0.0).scale(1.0));
    CHECK(occupation_from_width(ground * std::sqrt(2.96), p).n == doctest::Approx(0.98));
    CHECK(occupation_from_width(2 * ground, p).n == doctest::Approx(1.5));
    const auto sub = occupation_from_width(0.5 * ground, p);
    CHECK(sub.n < 0.0);
    CHECK(sub.below_ground);
    CHECK_THROWS_AS((void)occupation_from_width(0.0, p), DomainError);
}

TEST_CASE("fit report structure")
{
    const double w0 = kTwoPi * 252e3;
    std::vector<VariancePoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({i * 0.2e-6, 1.0 + 0.1 * i, 0.0});
    const auto j = fit_report(fit_variance_evolution(pts, w0));
    CHECK(j.contains("parameters"));
    CHECK(j.contains("errors"));
    CHECK(j.contains("residual_rms"));
    CHECK(j.contains("n_dropped"));
    CHECK(j["parameters"].contains("V1"));
}
