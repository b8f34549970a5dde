#include "squeezelab/measurement.hpp"

#include <array>
#include <cmath>
#include <ostream>

#include "squeezelab/csv.hpp"
#include "squeezelab/parallel.hpp"

namespace squeezelab {

void NoiseSpec::validate() const
{
    if (!(detector_noise_density >= 0.0)) throw DomainError("noise density must be non-negative");
    if (!(lattice_jitter_variance >= 0.0)) throw DomainError("jitter variance must be non-negative");
    if (!(flicker_rms >= 0.0)) throw DomainError("flicker level must be non-negative");
    if (!(volts_per_meter > 0.0)) throw DomainError("calibration factor must be positive");
    if (!std::isfinite(drift_velocity)) throw DomainError("drift velocity must be finite");
    if (!(trace_duration > 0.0)) throw DomainError("trace duration must be positive");
    if (!(sample_rate > 2.0 * kPassbandTop)) {
        throw DomainError("sample rate must exceed twice the filter passband");
    }
}

ReleaseSample sample_release(const GaussianState& state, Engine& engine)
{
    // 2x2 Cholesky factor of the covariance.
    const auto& c = state.cov();
    const double l00 = std::sqrt(c(0, 0));
    const double l10 = c(1, 0) / l00;
    const double l11 = std::sqrt(std::max(0.0, c(1, 1) - l10 * l10));
    const double g0 = standard_normal(engine);
    const double g1 = standard_normal(engine);
    const double x = state.mean()(0) + l00 * g0;
    const double p = state.mean()(1) + l10 * g0 + l11 * g1;
    const auto& params = state.params();
    return {x * params.position_scale(), p * params.velocity_scale()};
}

TofTrial run_tof_trial(const GaussianState& released, const ProtocolSchedule& schedule,
                       const NoiseSpec& noise, std::uint64_t seed)
{
    const auto& params = released.params();
    Engine engine(seed);

    TofTrial trial;
    trial.seed = seed;
    trial.release = sample_release(released, engine);

    const double t = schedule.t_tof;
    trial.v_final = trial.release.v;
    trial.z_final = trial.release.z + (trial.release.v + noise.drift_velocity) * t;
    if (noise.lattice_jitter_variance > 0.0) {
        // Velocity-equivalent displacement noise of the lattice reference.
        const double sigma_v = std::sqrt(noise.lattice_jitter_variance
                                         * params.ground_velocity_variance());
        trial.z_final += sigma_v * t * standard_normal(engine);
    }

    const double zv = trial.v_final / params.omega0;
    trial.recapture_amplitude = std::hypot(trial.z_final, zv);
    trial.phase = std::atan2(trial.z_final, zv);
    if (trial.phase < 0.0) trial.phase += kTwoPi;

    if (noise.synthesize_traces) {
        trial.trace = synthesize_trace(trial.recapture_amplitude, trial.phase, params, noise,
                                       derive_seed(seed, 1));
    }
    return trial;
}

namespace {

struct Biquad {
    double b0, b1, b2, a1, a2;
    double z1 = 0.0, z2 = 0.0;

    double step(double x)
    {
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        return y;
    }
};

Biquad highpass_section(double cutoff, double q, double fs)
{
    const double w = kTwoPi * cutoff / fs;
    const double alpha = std::sin(w) / (2.0 * q);
    const double cw = std::cos(w);
    const double a0 = 1.0 + alpha;
    return {(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0,
            -2.0 * cw / a0, (1.0 - alpha) / a0};
}

}  // namespace

// Fourth-order Butterworth = two biquads with these Q values.
constexpr std::array<double, 2> kButterworthQ{0.5411961001461970, 1.3065629648763766};
constexpr std::array<double, 2> kRecorderCutoffs{105.0e3, 150.0e3};

void apply_recorder_highpass(Trace& trace)
{
    for (double cutoff : kRecorderCutoffs) {
        for (double q : kButterworthQ) {
            Biquad section = highpass_section(cutoff, q, trace.sample_rate);
            for (double& s : trace.samples) s = section.step(s);
        }
    }
}

std::complex<double> recorder_highpass_response(double f, double sample_rate)
{
    const std::complex<double> zi = std::polar(1.0, -kTwoPi * f / sample_rate);
    std::complex<double> h = 1.0;
    for (double cutoff : kRecorderCutoffs) {
        for (double q : kButterworthQ) {
            const Biquad s = highpass_section(cutoff, q, sample_rate);
            h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
        }
    }
    return h;
}

Trace synthesize_trace(double amplitude, double phase, const PhysicalParams& params,
                       const NoiseSpec& noise, std::uint64_t seed)
{
    if (!(amplitude >= 0.0)) throw DomainError("amplitude must be non-negative");
    noise.validate();
    Trace trace;
    trace.sample_rate = noise.sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(noise.trace_duration * noise.sample_rate));
    trace.samples.resize(n);

    const double peak = noise.volts_per_meter * amplitude;
    for (std::size_t i = 0; i < n; ++i) {
        trace.samples[i] = peak * std::sin(params.omega0 * trace.time(i) + phase);
    }

    Engine engine(seed);
    if (noise.detector_noise_density > 0.0) {
        // One-sided density over the Nyquist band.
        const double sigma = noise.detector_noise_density * std::sqrt(noise.sample_rate / 2.0);
        for (double& s : trace.samples) s += sigma * standard_normal(engine);
    }
    if (noise.flicker_rms > 0.0) {
        // Tones on the record's frequency grid with power ~ 1/f up to 50 kHz.
        const double df = 1.0 / trace.duration();
        const auto n_tones = static_cast<std::size_t>(std::max(1.0, std::floor(50.0e3 / df)));
        double norm = 0.0;
        for (std::size_t k = 1; k <= n_tones; ++k) norm += 1.0 / static_cast<double>(k);
        for (std::size_t k = 1; k <= n_tones; ++k) {
            const double a = noise.flicker_rms * std::sqrt(2.0 / (static_cast<double>(k) * norm));
            const double ph = kTwoPi * uniform01(engine);
            const double w = kTwoPi * df * static_cast<double>(k);
            for (std::size_t i = 0; i < n; ++i) {
                trace.samples[i] += a * std::sin(w * trace.time(i) + ph);
            }
        }
    }
    if (noise.highpass) apply_recorder_highpass(trace);
    return trace;
}

TofEnsemble ensemble(const GaussianState& initial, const ProtocolSchedule& schedule,
                     const NoiseSpec& noise, std::size_t n_trials, std::uint64_t master_seed,
                     unsigned workers)
{
    if (n_trials < 1) throw DomainError("ensemble needs at least one trial");
    noise.validate();
    const GaussianState released = run_protocol(initial, schedule);

    TofEnsemble ens;
    ens.master_seed = master_seed;
    ens.n_trials = n_trials;
    ens.schedule = schedule;
    ens.noise = noise;
    ens.params = initial.params();
    ens.trials.resize(n_trials);
    parallel_for(n_trials, workers, [&](std::size_t i) {
        ens.trials[i] = run_tof_trial(released, schedule, noise, derive_seed(master_seed, i));
    });
    return ens;
}

void write_trace_csv(std::ostream& out, const Trace& trace)
{
    CsvWriter csv(out, {"t_seconds", "signal"});
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        csv.cell(trace.time(i)).cell(trace.samples[i]).end_row();
    }
}

void write_ensemble_csv(std::ostream& out, const TofEnsemble& ens)
{
    CsvWriter csv(out, {"trial", "seed", "amplitude_m", "velocity_m_per_s"});
    for (std::size_t i = 0; i < ens.trials.size(); ++i) {
        const auto& t = ens.trials[i];
        csv.cell(static_cast<unsigned long long>(i))
            .cell(static_cast<unsigned long long>(t.seed))
            .cell(t.recapture_amplitude)
            .cell(t.signed_amplitude() / ens.schedule.t_tof)
            .end_row();
    }
}

}  // namespace squeezelab
