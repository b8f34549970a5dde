#include "squeezelab/calibration.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "squeezelab/csv.hpp"
#include "squeezelab/least_squares.hpp"
#include "squeezelab/measurement.hpp"
#include "squeezelab/parallel.hpp"
#include "squeezelab/protocol.hpp"
#include "squeezelab/seeding.hpp"

namespace squeezelab {

std::string to_string(CalibrationMethod m)
{
    return m == CalibrationMethod::tof_thermometry ? "tof_thermometry" : "lattice_shift";
}

std::string calibration_report(const CalibrationFactor& k)
{
    std::ostringstream out;
    out << "method: " << to_string(k.method) << '\n'
        << "volts_per_meter: " << format_number(k.volts_per_meter) << '\n'
        << "std_error: " << format_number(k.std_error) << '\n'
        << "systematic_error: " << format_number(k.systematic_error) << '\n'
        << "n_points: " << k.n_points << '\n'
        << "n_excluded: " << k.n_excluded << '\n';
    return out.str();
}

double psd_temperature_ratio(double area_cooled, double area_uncooled, double t_reference)
{
    if (!(area_cooled > 0.0) || !(area_uncooled > 0.0)) throw DomainError("PSD areas must be positive");
    if (!(t_reference > 0.0)) throw DomainError("reference temperature must be positive");
    return t_reference * area_cooled / area_uncooled;
}

double occupation_from_temperature(double temperature, const PhysicalParams& params)
{
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    return kBoltzmann * temperature / (params.hbar * params.omega0) - 0.5;
}

double temperature_from_occupation(double n, const PhysicalParams& params)
{
    if (!(n > -0.5)) throw DomainError("occupation must exceed -1/2");
    return (n + 0.5) * params.hbar * params.omega0 / kBoltzmann;
}

CalibrationFactor tof_calibration(std::span<const double> widths_volts,
                                  std::span<const double> occupations, const PhysicalParams& params,
                                  double temperature_systematic)
{
    params.validate();
    if (widths_volts.size() != occupations.size()) throw DomainError("widths and occupations differ in length");
    if (!(temperature_systematic >= 0.0)) throw DomainError("systematic fraction must be non-negative");

    double sxx = 0.0;
    double sxy = 0.0;
    std::vector<double> xs;
    std::vector<double> ys;
    CalibrationFactor out;
    out.method = CalibrationMethod::tof_thermometry;
    for (std::size_t i = 0; i < occupations.size(); ++i) {
        if (!(occupations[i] > kMinCalibrationOccupation)) {
            ++out.n_excluded;
            continue;
        }
        if (!(widths_volts[i] > 0.0)) throw DomainError("widths must be positive");
        const double x = params.t_tof
            * std::sqrt(params.hbar * params.omega0 * (occupations[i] + 0.5) / params.mass);
        xs.push_back(x);
        ys.push_back(widths_volts[i]);
        sxx += x * x;
        sxy += x * widths_volts[i];
    }
    if (xs.size() < 3) throw DomainError("TOF calibration needs at least 3 points with n > 1.5");

    const double k = sxy / sxx;
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) ss += (ys[i] - k * xs[i]) * (ys[i] - k * xs[i]);
    out.volts_per_meter = k;
    out.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / sxx);
    out.systematic_error = k * temperature_systematic / 2.0;
    out.n_points = xs.size();
    return out;
}

LatticeGeometry LatticeGeometry::from_wavelength(double length, double wavelength)
{
    LatticeGeometry g;
    g.length = length;
    g.wavelength = wavelength;
    g.laser_omega = kTwoPi * kSpeedOfLight / wavelength;
    g.validate();
    return g;
}

void LatticeGeometry::validate() const
{
    if (!(length > 0.0)) throw DomainError("lattice length must be positive");
    if (!(wavelength > 0.0)) throw DomainError("wavelength must be positive");
    if (!(laser_omega > 0.0)) throw DomainError("laser frequency must be positive");
}

double lattice_shift_displacement(const LatticeGeometry& geom, double d_omega)
{
    geom.validate();
    if (!(std::abs(d_omega) < 1e-3 * geom.laser_omega)) {
        throw DomainError("frequency shift must be small against the laser frequency");
    }
    return geom.length * d_omega / (geom.laser_omega + d_omega);
}

double lattice_shift_oscillation(double delta, double omega0_prime, double tau)
{
    if (!(delta >= 0.0)) throw DomainError("displacement must be non-negative");
    return 2.0 * delta * std::abs(std::sin(omega0_prime * tau / 2.0));
}

FitResult fit_lattice_oscillation(std::span<const LatticeOscillationPoint> points, double omega_guess)
{
    if (points.size() < 3) throw DomainError("oscillation fit needs at least 3 points");
    if (!(omega_guess > 0.0)) throw DomainError("frequency guess must be positive");
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::VectorXd tau(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        tau(i) = points[static_cast<std::size_t>(i)].tau;
        y(i) = points[static_cast<std::size_t>(i)].amplitude;
    }
    if (!(tau.maxCoeff() > 0.0)) throw DomainError("oscillation fit needs a positive duration");

    // Linear seed for delta at the guessed frequency.
    const Eigen::ArrayXd s0 = (omega_guess * tau.array() / 2.0).sin().abs();
    const double d0 = s0.matrix().dot(y) / (2.0 * s0.matrix().squaredNorm());
    Eigen::VectorXd x0(2);
    x0 << d0, omega_guess;

    const ResidualFn residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        r = (2.0 * x(0) * (x(1) * tau.array() / 2.0).sin().abs()).matrix() - y;
    };
    const JacobianFn jacobian = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j) {
        const Eigen::ArrayXd s = (x(1) * tau.array() / 2.0).sin();
        const Eigen::ArrayXd c = (x(1) * tau.array() / 2.0).cos();
        j.resize(n, 2);
        j.col(0) = (2.0 * s.abs()).matrix();
        j.col(1) = (x(0) * s.sign() * c * tau.array()).matrix();
    };
    const LsqResult lsq = levenberg_marquardt(residual, jacobian, x0, n);
    if (!lsq.converged) throw FitError("lattice oscillation fit did not converge");

    Eigen::VectorXd values = lsq.x;
    values(0) = std::abs(values(0));
    FitResult out;
    out.names = {"delta", "omega0_prime"};
    out.values = values;
    out.covariance = lsq.covariance * lsq.reduced_chi2();
    out.std_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.residual_rms = std::sqrt(lsq.chi2 / static_cast<double>(n));
    out.n_points = points.size();
    return out;
}

CalibrationFactor lattice_calibration(std::span<const LatticePoint> points, const LatticeGeometry& geom)
{
    CalibrationFactor out;
    out.method = CalibrationMethod::lattice_shift;
    std::vector<double> ratios;
    for (const auto& p : points) {
        if (p.d_omega == 0.0) {
            ++out.n_excluded;
            continue;
        }
        const double delta = lattice_shift_displacement(geom, p.d_omega);
        ratios.push_back(p.volts / (2.0 * std::abs(delta)));
    }
    if (ratios.size() < 2) throw DomainError("lattice calibration needs at least 2 nonzero shifts");

    const double n = static_cast<double>(ratios.size());
    const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / n;
    double ss = 0.0;
    for (double r : ratios) ss += (r - mean) * (r - mean);
    if (!(mean > 0.0)) throw DomainError("lattice calibration produced a non-positive factor");
    out.volts_per_meter = mean;
    out.std_error = std::sqrt(ss / (n - 1.0) / n);
    out.n_points = ratios.size();
    return out;
}

double calibration_discrepancy(const CalibrationFactor& a, const CalibrationFactor& b)
{
    const double s = std::hypot(a.std_error, b.std_error);
    if (!(s > 0.0)) throw DomainError("discrepancy needs a nonzero combined error");
    return std::abs(a.volts_per_meter - b.volts_per_meter) / s;
}

// ---------------------------------------------------------------------------

std::vector<double> TofCalibrationSim::default_temperatures()
{
    // Log-spaced over 18 uK .. 400 uK.
    std::vector<double> t(20);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(t.size() - 1);
        t[i] = 18.0e-6 * std::pow(400.0 / 18.0, u);
    }
    return t;
}

TofCalibrationRun simulate_tof_calibration(const PhysicalParams& params, double true_volts_per_meter,
                                           const TofCalibrationSim& sim, std::uint64_t seed,
                                           unsigned workers)
{
    params.validate();
    if (!(true_volts_per_meter > 0.0)) throw DomainError("true calibration factor must be positive");
    if (!(sim.psd_area_noise >= 0.0)) throw DomainError("PSD area noise must be non-negative");

    NoiseSpec noise;
    noise.volts_per_meter = true_volts_per_meter;
    const ProtocolSchedule release = canonical_schedule(params, 0.0, 0);

    TofCalibrationRun run;
    run.points.resize(sim.temperatures.size());
    for (std::size_t i = 0; i < sim.temperatures.size(); ++i) {
        const double t_true = sim.temperatures[i];
        const double n_true = occupation_from_temperature(t_true, params);
        const TofEnsemble ens = ensemble(thermal_state(params, n_true), release, noise,
                                         sim.trials_per_point, derive_seed(seed, 0, i), workers);
        const double broadening = n_true <= kMinCalibrationOccupation ? 1.0 + sim.low_n_broadening : 1.0;
        std::vector<double> volts;
        volts.reserve(ens.trials.size());
        for (const auto& trial : ens.trials) {
            volts.push_back(broadening * true_volts_per_meter * trial.signed_amplitude());
        }
        const FitResult fit = fit_velocity_distribution(velocity_histogram(volts));

        // Cooled PSD area relative to a unit-area room-temperature reference.
        Engine engine(derive_seed(seed, 1, i));
        const double area = t_true / kRoomTemperature * (1.0 + sim.psd_area_noise * standard_normal(engine));
        auto& p = run.points[i];
        p.temperature = psd_temperature_ratio(area, 1.0);
        p.occupation = occupation_from_temperature(p.temperature, params);
        p.width_volts = fit.value("dv");
        p.width_error = fit.error("dv");
    }

    std::vector<double> widths;
    std::vector<double> occupations;
    for (const auto& p : run.points) {
        widths.push_back(p.width_volts);
        occupations.push_back(p.occupation);
    }
    run.factor = tof_calibration(widths, occupations, params);
    return run;
}

LatticeCalibrationRun simulate_lattice_calibration(const PhysicalParams& params,
                                                   double true_volts_per_meter,
                                                   const LatticeCalibrationSim& sim,
                                                   std::uint64_t seed, unsigned workers)
{
    params.validate();
    sim.geometry.validate();
    if (!(true_volts_per_meter > 0.0)) throw DomainError("true calibration factor must be positive");
    if (sim.tau_points < 3 || sim.shots_per_tau < 1) throw DomainError("lattice simulation grid too small");
    const double omega_p = sim.omega0_prime > 0.0 ? sim.omega0_prime : params.omega0;
    const GaussianState initial = thermal_state(params, sim.initial_occupation);
    const double scale = params.position_scale();

    LatticeCalibrationRun run;
    run.shifts.resize(sim.shifts_hz.size());
    std::vector<LatticePoint> points;
    for (std::size_t s = 0; s < sim.shifts_hz.size(); ++s) {
        auto& shift = run.shifts[s];
        shift.d_omega = kTwoPi * sim.shifts_hz[s];
        shift.delta_calculated = lattice_shift_displacement(sim.geometry, shift.d_omega);
        const double delta_n = shift.delta_calculated / scale;
        shift.oscillation.resize(sim.tau_points);

        parallel_for(sim.tau_points, workers, [&](std::size_t j) {
            const double tau = 2.0 * kTwoPi / omega_p * static_cast<double>(j)
                / static_cast<double>(sim.tau_points - 1);
            const Eigen::Matrix2d map = harmonic_map(omega_p, params.omega0, tau);
            Eigen::Vector2d sum = Eigen::Vector2d::Zero();
            for (std::size_t k = 0; k < sim.shots_per_tau; ++k) {
                Engine engine(derive_seed(seed, s, j * sim.shots_per_tau + k));
                const ReleaseSample z0 = sample_release(initial, engine);
                Eigen::Vector2d x(z0.z / scale, z0.v / params.velocity_scale());
                x(0) -= delta_n;
                x = map * x;
                x(0) += delta_n;
                Eigen::Vector2d volts = true_volts_per_meter * scale * x;
                if (sim.readout_noise_volts > 0.0) {
                    volts(0) += sim.readout_noise_volts * standard_normal(engine);
                    volts(1) += sim.readout_noise_volts * standard_normal(engine);
                }
                sum += volts;
            }
            // Amplitude of the shot-averaged recorded oscillation.
            shift.oscillation[j] = {tau, (sum / static_cast<double>(sim.shots_per_tau)).norm()};
        });
        shift.fit = fit_lattice_oscillation(shift.oscillation, omega_p);
        points.push_back({shift.d_omega, 2.0 * shift.fit.value("delta")});
    }
    run.factor = lattice_calibration(points, sim.geometry);
    return run;
}

}  // namespace squeezelab
