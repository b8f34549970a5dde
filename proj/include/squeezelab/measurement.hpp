#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "squeezelab/phasespace.hpp"
#include "squeezelab/protocol.hpp"
#include "squeezelab/seeding.hpp"

namespace squeezelab {

/// Detector, readout and technical-noise configuration for TOF trials.
struct NoiseSpec {
    double detector_noise_density = 0.0;   // trace units / sqrt(Hz), white
    double sample_rate = 3.2e6;            // Hz
    double trace_duration = 1.0e-3;        // s
    double lattice_jitter_variance = 0.0;  // adds this much to the normalized variance
    double drift_velocity = 0.0;           // m/s, constant offset v0 during flight
    double volts_per_meter = 1.0e9;        // trace units per metre of displacement
    double flicker_rms = 0.0;              // trace units, 1/f component below 50 kHz
    bool synthesize_traces = false;
    bool highpass = false;                 // analog high-pass chain of the recorder

    /// Filter passband used for the sampling check.
    static constexpr double kPassbandTop = 253.0e3 + 20.0e3;

    void validate() const;
    [[nodiscard]] bool noiseless() const
    {
        return detector_noise_density == 0.0 && lattice_jitter_variance == 0.0
            && flicker_rms == 0.0;
    }
};

struct ReleaseSample {
    double z = 0.0;  // m
    double v = 0.0;  // m/s
};

/// Uniformly sampled waveform starting at t0.
struct Trace {
    double sample_rate = 0.0;
    double t0 = 0.0;
    std::vector<double> samples;

    [[nodiscard]] double time(std::size_t i) const
    {
        return t0 + static_cast<double>(i) / sample_rate;
    }
    [[nodiscard]] double duration() const
    {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

struct TofTrial {
    std::uint64_t seed = 0;
    ReleaseSample release;
    double z_final = 0.0;              // m, displacement at recapture
    double v_final = 0.0;              // m/s
    double recapture_amplitude = 0.0;  // m, sqrt(z^2 + (v/omega0)^2)
    double phase = 0.0;                // rad, z(t) = A sin(omega0 t + phase)
    Trace trace;                       // empty unless traces are synthesized

    /// Amplitude carrying the sign of the flight displacement.
    [[nodiscard]] double signed_amplitude() const
    {
        return z_final < 0.0 ? -recapture_amplitude : recapture_amplitude;
    }
};

struct TofEnsemble {
    std::vector<TofTrial> trials;
    std::uint64_t master_seed = 0;
    std::size_t n_trials = 0;
    ProtocolSchedule schedule;
    NoiseSpec noise;
    PhysicalParams params;
};

inline constexpr std::size_t kDefaultTrials = 300;

/// Draws (z, v) from the state's Wigner distribution in physical units.
[[nodiscard]] ReleaseSample sample_release(const GaussianState& state, Engine& engine);

/// One release-flight-recapture cycle from the pre-release state.
[[nodiscard]] TofTrial run_tof_trial(const GaussianState& released,
                                     const ProtocolSchedule& schedule, const NoiseSpec& noise,
                                     std::uint64_t seed);

/// Photodetector record of the recaptured oscillation:
/// volts_per_meter * A sin(omega0 t + phase) plus detector noise.
[[nodiscard]] Trace synthesize_trace(double amplitude, double phase,
                                     const PhysicalParams& params, const NoiseSpec& noise,
                                     std::uint64_t seed);

/// Two fourth-order Butterworth high-passes (105 kHz and 150 kHz), in place.
void apply_recorder_highpass(Trace& trace);

/// Complex response of that chain at frequency f.
[[nodiscard]] std::complex<double> recorder_highpass_response(double f, double sample_rate);

/// Runs the protocol from `initial` once, then n_trials independent trials
/// with seeds derive_seed(master_seed, i).
[[nodiscard]] TofEnsemble ensemble(const GaussianState& initial, const ProtocolSchedule& schedule,
                                   const NoiseSpec& noise, std::size_t n_trials,
                                   std::uint64_t master_seed, unsigned workers = 0);

/// Columns: t_seconds, signal.
void write_trace_csv(std::ostream& out, const Trace& trace);

/// Columns: trial, seed, amplitude_m, velocity_m_per_s (signed amplitude / t_tof).
void write_ensemble_csv(std::ostream& out, const TofEnsemble& ens);

}  // namespace squeezelab
