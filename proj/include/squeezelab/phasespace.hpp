#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include "squeezelab/constants.hpp"

namespace squeezelab {

/// Physical constants of the trapped particle and the readout.
///
/// Defaults describe a 137 nm silica sphere in a 252 kHz optical lattice,
/// released for a 51 us time of flight.
struct PhysicalParams {
    double mass = 2.4e-17;                 // kg
    double omega0 = kTwoPi * 252.0e3;      // rad/s
    double t_tof = 51.0e-6;                // s
    double gamma_qba = kTwoPi * 2.1e3;     // rad/s, photon-recoil decoherence
    double gamma_bg = kTwoPi * 0.10e3;     // rad/s, background-gas decoherence

    static constexpr double hbar = kHbar;

    /// Throws DomainError when any field is out of range.
    void validate() const;

    /// Ground-state position spread sqrt(hbar / 2 m omega0) in metres.
    [[nodiscard]] double position_scale() const;
    /// Ground-state momentum spread sqrt(hbar m omega0 / 2) in kg m/s.
    [[nodiscard]] double momentum_scale() const;
    /// Ground-state velocity spread sqrt(hbar omega0 / 2m) in m/s.
    [[nodiscard]] double velocity_scale() const;
    /// Ground-state velocity variance V0 = hbar omega0 / 2m.
    [[nodiscard]] double ground_velocity_variance() const;
    /// omega0 * t_tof, the dimensionless flight time.
    [[nodiscard]] double flight_phase() const { return omega0 * t_tof; }
    [[nodiscard]] double total_decoherence_rate() const { return gamma_qba + gamma_bg; }
};

/// Gaussian state of one motional mode in omega0-normalized phase space.
///
/// Coordinates are x = z / position_scale() and p = p_phys / momentum_scale(),
/// so the ground state has unit covariance. The frame is fixed at omega0 even
/// while the trap runs at another frequency. Values are immutable: every
/// propagation returns a new state.
class GaussianState {
public:
    /// Throws DomainError unless cov is symmetric and positive-definite.
    GaussianState(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov,
                  const PhysicalParams& params);

    [[nodiscard]] const Eigen::Vector2d& mean() const { return mean_; }
    [[nodiscard]] const Eigen::Matrix2d& cov() const { return cov_; }
    [[nodiscard]] const PhysicalParams& params() const { return params_; }

    /// det(cov) from the extended-precision copy; the uncertainty principle
    /// requires >= 1.
    [[nodiscard]] double uncertainty_product() const;
    [[nodiscard]] bool satisfies_uncertainty(double tol = 1e-9) const {
        return uncertainty_product() >= 1.0 - tol;
    }

    /// Applies x -> M x to the mean and cov -> M cov M^T.
    [[nodiscard]] GaussianState transformed(const Eigen::Matrix2d& map) const;

    /// Same mean, cov + added (added symmetric positive semi-definite).
    [[nodiscard]] GaussianState diffused(const Eigen::Matrix2d& added) const;

private:
#if defined(__SIZEOF_FLOAT128__)
    __extension__ typedef __float128 Real;
#else
    typedef long double Real;
#endif
    struct Moments {
        Real xx, xp, pp;
    };

    GaussianState(const Eigen::Vector2d& mean, const Moments& m, const PhysicalParams& params);

    // Squeezed states after flight reach cxx cpp / det ~ 1e7, so double
    // storage loses det(cov) at ~1e-10; quad-precision moments keep it exact
    // to the map's own rounding. cov_ is the rounded view.
    Eigen::Vector2d mean_;
    Moments moments_;
    Eigen::Matrix2d cov_;
    PhysicalParams params_;
};

struct NormalizedVariance {
    double value = 1.0;
    double std_error = 0.0;

    [[nodiscard]] bool is_squeezed() const { return value < 1.0; }
};

[[nodiscard]] GaussianState ground_state(const PhysicalParams& params);

/// Thermal state with mean occupation n: cov = (2n + 1) I.
[[nodiscard]] GaussianState thermal_state(const PhysicalParams& params, double occupation);

/// Symplectic map of a harmonic trap at `omega` acting for `dt`, written in
/// the omega0-normalized frame.
[[nodiscard]] Eigen::Matrix2d harmonic_map(double omega, double omega0, double dt);

/// Shear map of ballistic flight for `dt`.
[[nodiscard]] Eigen::Matrix2d flight_map(double omega0, double dt);

[[nodiscard]] GaussianState evolve_harmonic(const GaussianState& state, double omega, double dt);
[[nodiscard]] GaussianState free_flight(const GaussianState& state, double dt);

/// Isotropic momentum-and-position diffusion at 2 (gamma_qba + gamma_bg)
/// per unit time in normalized variance.
[[nodiscard]] GaussianState add_heating(const GaussianState& state, double dt);

/// Harmonic evolution with the add_heating diffusion acting continuously
/// during the segment (exact integral of the rotated diffusion).
[[nodiscard]] GaussianState evolve_harmonic_heated(const GaussianState& state, double omega,
                                                   double dt);

/// Velocity variance in units of V0; equals the momentum quadrature variance.
[[nodiscard]] NormalizedVariance normalized_velocity_variance(const GaussianState& state);

}  // namespace squeezelab
