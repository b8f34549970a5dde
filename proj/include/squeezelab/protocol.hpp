#pragma once

#include "squeezelab/phasespace.hpp"

namespace squeezelab {

/// Frequency-switch squeezing sequence: drop to omega1 for t1, hold at omega0,
/// then release for t_tof.
struct ProtocolSchedule {
    double r = 0.0;          // ln(omega0 / omega1) / 2
    double omega1 = 0.0;     // rad/s
    double t1 = 0.0;         // s, duration at omega1
    double hold = 0.0;       // s, t2 - t1 at omega0
    double t_tof = 0.0;      // s
    bool heating_enabled = false;

    /// Same sequence with a different hold time.
    [[nodiscard]] ProtocolSchedule with_hold(double new_hold) const;
};

struct AnalyticPrediction {
    double v_tilde = 0.0;            // full expression including the cross term
    double v1_tilde = 0.0;           // simplified minimum
    double v2_tilde = 0.0;           // simplified maximum
    double velocity_fraction = 0.0;  // velocity share of the measured minimum
};

/// r = ln(i0 / i1) / 4 for a trap frequency scaling as sqrt(intensity).
[[nodiscard]] double squeezing_parameter_from_intensity(double i0, double i1);

/// omega1 = omega0 exp(-2r).
[[nodiscard]] double reduced_frequency(double omega0, double r);

/// t1 = pi / (2 omega1), hold = N pi / omega0, heating off.
[[nodiscard]] ProtocolSchedule canonical_schedule(const PhysicalParams& params, double r,
                                                  int n_half_periods);

/// Picks t1 in (0, pi/omega1) minimizing the momentum variance at the end of
/// the omega1 segment (heating included when enabled). Golden-section search.
[[nodiscard]] ProtocolSchedule optimize_t1(const ProtocolSchedule& schedule,
                                           const GaussianState& initial);

/// Propagates to the instant just before release.
[[nodiscard]] GaussianState run_protocol(const GaussianState& initial,
                                         const ProtocolSchedule& schedule);

/// Normalized variance of the TOF velocity estimate (recapture amplitude over
/// t_tof) for a state just after the flight: (Var x + Var p) / (omega0 t_tof)^2.
[[nodiscard]] double recapture_velocity_variance(const GaussianState& after_flight);

/// Covariance route to the measured variance: protocol, free flight, recapture.
[[nodiscard]] double propagated_variance(const GaussianState& initial,
                                         const ProtocolSchedule& schedule);

[[nodiscard]] AnalyticPrediction analytic_variance(double r, double hold,
                                                   const PhysicalParams& params, double v_ini);

/// Velocity contribution to the minimum variance,
/// e^{-4r} / (e^{-4r} + e^{4r} / (omega0 t_tof)^2).
[[nodiscard]] double velocity_fraction(double r, double flight_phase);

/// Shortest t_tof for which velocity_fraction reaches `fraction`.
[[nodiscard]] double min_tof_for_fraction(double r, const PhysicalParams& params,
                                          double fraction);

}  // namespace squeezelab
