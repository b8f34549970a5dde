#include "squeezelab/protocol.hpp"

#include <cmath>

namespace squeezelab {

ProtocolSchedule ProtocolSchedule::with_hold(double new_hold) const
{
    if (!(new_hold >= 0.0)) throw DomainError("hold must be non-negative");
    ProtocolSchedule out = *this;
    out.hold = new_hold;
    return out;
}

double squeezing_parameter_from_intensity(double i0, double i1)
{
    if (!(i0 > 0.0) || !(i1 > 0.0)) throw DomainError("intensities must be positive");
    if (i1 > i0) throw DomainError("reduced intensity exceeds the initial intensity");
    return std::log(i0 / i1) / 4.0;
}

double reduced_frequency(double omega0, double r)
{
    return omega0 * std::exp(-2.0 * r);
}

ProtocolSchedule canonical_schedule(const PhysicalParams& params, double r, int n_half_periods)
{
    params.validate();
    if (!(r >= 0.0)) throw DomainError("squeezing parameter must be non-negative");
    if (n_half_periods < 0) throw DomainError("number of half periods must be non-negative");
    ProtocolSchedule s;
    s.r = r;
    s.omega1 = reduced_frequency(params.omega0, r);
    s.t1 = kPi / (2.0 * s.omega1);
    s.hold = n_half_periods * kPi / params.omega0;
    s.t_tof = params.t_tof;
    return s;
}

namespace {

GaussianState evolve_segment(const GaussianState& state, double omega, double dt, bool heated)
{
    return heated ? evolve_harmonic_heated(state, omega, dt) : evolve_harmonic(state, omega, dt);
}

}  // namespace

ProtocolSchedule optimize_t1(const ProtocolSchedule& schedule, const GaussianState& initial)
{
    const double omega1 = schedule.omega1;
    if (!(omega1 > 0.0)) throw DomainError("schedule has no reduced frequency");
    auto momentum_variance = [&](double t) {
        return evolve_segment(initial, omega1, t, schedule.heating_enabled).cov()(1, 1);
    };

    // The minimum near pi/(2 omega1) is bracketed by the half period.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0;
    double hi = kPi / omega1;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = momentum_variance(x1);
    double f2 = momentum_variance(x2);
    for (int i = 0; i < 200 && (hi - lo) > 1e-15 * hi; ++i) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = momentum_variance(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = momentum_variance(x2);
        }
    }
    ProtocolSchedule out = schedule;
    out.t1 = 0.5 * (lo + hi);
    return out;
}

GaussianState run_protocol(const GaussianState& initial, const ProtocolSchedule& schedule)
{
    if (!(schedule.omega1 > 0.0)) throw DomainError("schedule has no reduced frequency");
    const double omega0 = initial.params().omega0;
    GaussianState s = evolve_segment(initial, schedule.omega1, schedule.t1, schedule.heating_enabled);
    return evolve_segment(s, omega0, schedule.hold, schedule.heating_enabled);
}

double recapture_velocity_variance(const GaussianState& after_flight)
{
    const double phase = after_flight.params().flight_phase();
    const auto& c = after_flight.cov();
    return (c(0, 0) + c(1, 1)) / (phase * phase);
}

double propagated_variance(const GaussianState& initial, const ProtocolSchedule& schedule)
{
    const GaussianState released = run_protocol(initial, schedule);
    return recapture_velocity_variance(free_flight(released, schedule.t_tof));
}

double velocity_fraction(double r, double flight_phase)
{
    const double velocity = std::exp(-4.0 * r);
    const double position = std::exp(4.0 * r) / (flight_phase * flight_phase);
    return velocity / (velocity + position);
}

AnalyticPrediction analytic_variance(double r, double hold, const PhysicalParams& params,
                                     double v_ini)
{
    params.validate();
    if (!(v_ini > 0.0)) throw DomainError("initial variance must be positive");
    const double wt = params.flight_phase();
    const double phi = params.omega0 * hold;
    const double s = std::sin(phi);
    const double c = std::cos(phi);
    const double ep = std::exp(4.0 * r);
    const double em = std::exp(-4.0 * r);

    AnalyticPrediction out;
    out.v_tilde = v_ini * (2.0 * std::cosh(4.0 * r) / (wt * wt)
                           - 2.0 * std::sin(2.0 * phi) * std::sinh(4.0 * r) / wt
                           + ep * s * s + em * c * c);
    out.v1_tilde = v_ini * (em + ep / (wt * wt));
    out.v2_tilde = v_ini * (ep + ep / (wt * wt));
    out.velocity_fraction = velocity_fraction(r, wt);
    return out;
}

double min_tof_for_fraction(double r, const PhysicalParams& params, double fraction)
{
    params.validate();
    if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("fraction must lie in (0, 1)");
    // Solve e^{-4r} (1 - f) (w t)^2 = f e^{4r} for t.
    return std::exp(4.0 * r) * std::sqrt(fraction / (1.0 - fraction)) / params.omega0;
}

}  // namespace squeezelab
