#include "squeezelab/phasespace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace squeezelab {

void PhysicalParams::validate() const
{
    if (!(mass > 0.0)) throw DomainError("mass must be positive");
    if (!(omega0 > 0.0)) throw DomainError("omega0 must be positive");
    if (!(t_tof > 0.0)) throw DomainError("t_tof must be positive");
    if (!(gamma_qba >= 0.0)) throw DomainError("gamma_qba must be non-negative");
    if (!(gamma_bg >= 0.0)) throw DomainError("gamma_bg must be non-negative");
}

double PhysicalParams::position_scale() const
{
    return std::sqrt(hbar / (2.0 * mass * omega0));
}

double PhysicalParams::momentum_scale() const
{
    return std::sqrt(hbar * mass * omega0 / 2.0);
}

double PhysicalParams::velocity_scale() const
{
    return std::sqrt(ground_velocity_variance());
}

double PhysicalParams::ground_velocity_variance() const
{
    return hbar * omega0 / (2.0 * mass);
}

GaussianState::GaussianState(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov,
                             const PhysicalParams& params)
    : GaussianState(mean, Moments{cov(0, 0), 0.5 * (cov(0, 1) + cov(1, 0)), cov(1, 1)}, params)
{
    const double scale = std::max({std::abs(cov(0, 0)), std::abs(cov(1, 1)), 1e-300});
    if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * scale) {
        throw DomainError("covariance must be symmetric");
    }
}

GaussianState::GaussianState(const Eigen::Vector2d& mean, const Moments& m,
                             const PhysicalParams& params)
    : mean_(mean), moments_(m), params_(params)
{
    params_.validate();
    cov_ << static_cast<double>(m.xx), static_cast<double>(m.xp),
        static_cast<double>(m.xp), static_cast<double>(m.pp);
    if (!mean.allFinite() || !cov_.allFinite()) {
        throw DomainError("state moments must be finite");
    }
    if (!(m.xx > 0) || !(m.xx * m.pp - m.xp * m.xp > 0)) {
        throw DomainError("covariance must be positive-definite");
    }
}

double GaussianState::uncertainty_product() const
{
    const auto& m = moments_;
    return static_cast<double>(m.xx * m.pp - m.xp * m.xp);
}

GaussianState GaussianState::transformed(const Eigen::Matrix2d& map) const
{
    const Real a = map(0, 0), b = map(0, 1), c = map(1, 0), d = map(1, 1);
    const auto& m = moments_;
    const Moments out{a * a * m.xx + 2 * a * b * m.xp + b * b * m.pp,
                      a * c * m.xx + (a * d + b * c) * m.xp + b * d * m.pp,
                      c * c * m.xx + 2 * c * d * m.xp + d * d * m.pp};
    return GaussianState(map * mean_, out, params_);
}

GaussianState GaussianState::diffused(const Eigen::Matrix2d& added) const
{
    const Real off = 0.5 * (added(0, 1) + added(1, 0));
    const Moments out{moments_.xx + added(0, 0), moments_.xp + off, moments_.pp + added(1, 1)};
    return GaussianState(mean_, out, params_);
}

GaussianState ground_state(const PhysicalParams& params)
{
    return GaussianState(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), params);
}

GaussianState thermal_state(const PhysicalParams& params, double occupation)
{
    if (!(occupation >= 0.0)) {
        throw DomainError("occupation number must be non-negative");
    }
    return GaussianState(Eigen::Vector2d::Zero(),
                         (2.0 * occupation + 1.0) * Eigen::Matrix2d::Identity(), params);
}

Eigen::Matrix2d harmonic_map(double omega, double omega0, double dt)
{
    if (!(omega > 0.0)) throw DomainError("trap frequency must be positive");
    if (!(dt >= 0.0)) throw DomainError("duration must be non-negative");
    const double theta = omega * dt;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Eigen::Matrix2d m;
    m << c, (omega0 / omega) * s,
        -(omega / omega0) * s, c;
    return m;
}

Eigen::Matrix2d flight_map(double omega0, double dt)
{
    if (!(dt >= 0.0)) throw DomainError("duration must be non-negative");
    Eigen::Matrix2d m;
    m << 1.0, omega0 * dt,
        0.0, 1.0;
    return m;
}

GaussianState evolve_harmonic(const GaussianState& state, double omega, double dt)
{
    if (dt == 0.0 && omega > 0.0) return state;
    return state.transformed(harmonic_map(omega, state.params().omega0, dt));
}

GaussianState free_flight(const GaussianState& state, double dt)
{
    if (dt == 0.0) return state;
    return state.transformed(flight_map(state.params().omega0, dt));
}

GaussianState add_heating(const GaussianState& state, double dt)
{
    if (!(dt >= 0.0)) throw DomainError("duration must be non-negative");
    const double added = 2.0 * state.params().total_decoherence_rate() * dt;
    if (added == 0.0) return state;
    return state.diffused(added * Eigen::Matrix2d::Identity());
}

GaussianState evolve_harmonic_heated(const GaussianState& state, double omega, double dt)
{
    const GaussianState rotated = evolve_harmonic(state, omega, dt);
    const double rate = 2.0 * state.params().total_decoherence_rate();
    if (rate == 0.0 || dt == 0.0) return rotated;

    // Noise injected at t' has rotated for dt - t'; integrate M(s) M(s)^T.
    const double a = state.params().omega0 / omega;
    const double wt = omega * dt;
    const double i_cc = 0.5 * dt + std::sin(2.0 * wt) / (4.0 * omega);
    const double i_ss = 0.5 * dt - std::sin(2.0 * wt) / (4.0 * omega);
    const double i_cs = std::sin(wt) * std::sin(wt) / (2.0 * omega);
    Eigen::Matrix2d added;
    added << i_cc + a * a * i_ss, (a - 1.0 / a) * i_cs,
        (a - 1.0 / a) * i_cs, i_ss / (a * a) + i_cc;
    return rotated.diffused(rate * added);
}

NormalizedVariance normalized_velocity_variance(const GaussianState& state)
{
    return {state.cov()(1, 1), 0.0};
}

}  // namespace squeezelab
