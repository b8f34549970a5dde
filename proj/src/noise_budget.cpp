#include "squeezelab/noise_budget.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "squeezelab/csv.hpp"

namespace squeezelab {

void NoiseInputs::validate() const
{
    params.validate();
    const double values[] = {r, v_ini, phase_noise_density, mirror_distance_d, resonator_drift,
                             table_tilt, tilt_stability, mirror_position_noise,
                             perpendicular_bound, timing_jitter, vibration_bound, v2_tilde};
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("noise inputs must be finite and non-negative");
    }
    if (!(wavelength > 0.0)) throw DomainError("wavelength must be positive");
    if (!(measurement_duration > 0.0)) throw DomainError("measurement duration must be positive");
}

LatticeGeometry NoiseInputs::geometry() const
{
    LatticeGeometry g;
    g.length = mirror_distance_d;
    g.wavelength = wavelength;
    g.laser_omega = kTwoPi * kSpeedOfLight / wavelength;
    return g;
}

NoiseInputs tabulated_defaults()
{
    return NoiseInputs{};
}

double item_a_initial_position(double r, double v_ini, const PhysicalParams& params)
{
    params.validate();
    const double wt = params.flight_phase();
    return v_ini * std::exp(4.0 * r) / (wt * wt);
}

double lattice_position_noise(double phase_noise_density, double d, double wavelength)
{
    return wavelength * d * phase_noise_density / kSpeedOfLight;
}

double position_noise_variance(double dz, const PhysicalParams& params)
{
    params.validate();
    const double f0 = params.omega0 / kTwoPi;
    return dz * dz * f0 * f0 * f0 / params.ground_velocity_variance();
}

double item_b_lattice_phase_noise(double phase_noise_density, double d, double wavelength,
                                  const PhysicalParams& params)
{
    return position_noise_variance(lattice_position_noise(phase_noise_density, d, wavelength), params);
}

double drift_velocity(double drift_hz, double duration, const LatticeGeometry& geom)
{
    if (!(duration > 0.0)) throw DomainError("measurement duration must be positive");
    if (geom.length == 0.0) return 0.0;
    return lattice_shift_displacement(geom, kTwoPi * drift_hz) / duration;
}

double item_c_conversion()
{
    const NoiseInputs d = tabulated_defaults();
    const double v = drift_velocity(d.resonator_drift, d.measurement_duration, d.geometry());
    return 1.0e-16 / (v * v / d.params.ground_velocity_variance());
}

double item_c_slow_drift(double drift_hz, double duration, const LatticeGeometry& geom,
                         const PhysicalParams& params)
{
    const double v = drift_velocity(drift_hz, duration, geom);
    return item_c_conversion() * v * v / params.ground_velocity_variance();
}

double tilt_velocity(double tilt_stability_deg, const PhysicalParams& params)
{
    return kStandardGravity * params.t_tof * tilt_stability_deg / 2.0 * kPi / 180.0;
}

double item_d_table_tilt(double tilt_stability_deg, const PhysicalParams& params)
{
    params.validate();
    const double v = tilt_velocity(tilt_stability_deg, params);
    return v * v / params.ground_velocity_variance();
}

double item_e_mirror_brownian(double mirror_noise, const PhysicalParams& params)
{
    return position_noise_variance(mirror_noise, params);
}

double item_g_timing_jitter(double jitter, double v2_tilde, const PhysicalParams& params)
{
    if (!(jitter >= 0.0)) throw DomainError("timing jitter must be non-negative");
    const double s = std::sin(params.omega0 * jitter);
    return v2_tilde * s * s;
}

const BudgetEntry& NoiseBudgetReport::entry(char label) const
{
    for (const auto& e : entries) {
        if (e.label == label) return e;
    }
    throw DomainError(std::string("no budget entry ") + label);
}

NoiseBudgetReport budget(const NoiseInputs& in)
{
    in.validate();
    const auto& p = in.params;
    const LatticeGeometry geom = in.geometry();
    const double dz = lattice_position_noise(in.phase_noise_density, in.mirror_distance_d, in.wavelength);

    NoiseBudgetReport report;
    auto add = [&](char label, std::string description, double value, BudgetKind kind,
                   std::string iname = {}, double ivalue = 0.0) {
        report.entries.push_back({label, std::move(description), value, kind, std::move(iname), ivalue});
    };
    using enum BudgetKind;
    add('a', "initial position fluctuation", item_a_initial_position(in.r, in.v_ini, p), calculated);
    add('b', "lattice phase noise", position_noise_variance(dz, p), calculated,
        "position_noise_m_per_sqrt_hz", dz);
    add('c', "slow resonator drift",
        item_c_slow_drift(in.resonator_drift, in.measurement_duration, geom, p), calculated,
        "velocity_m_per_s", drift_velocity(in.resonator_drift, in.measurement_duration, geom));
    add('d', "table tilt fluctuation", item_d_table_tilt(in.tilt_stability, p), calculated,
        "velocity_m_per_s", tilt_velocity(in.tilt_stability, p));
    add('e', "mirror Brownian motion", item_e_mirror_brownian(in.mirror_position_noise, p), calculated,
        "position_noise_m_per_sqrt_hz", in.mirror_position_noise);
    add('f', "perpendicular motion", in.perpendicular_bound, experimental_bound);
    add('g', "timing jitter", item_g_timing_jitter(in.timing_jitter, in.v2_tilde, p), calculated);
    add('h', "vibration", in.vibration_bound, experimental_bound);

    for (const auto& e : report.entries) report.total += e.value;
    return report;
}

namespace {

const char* kind_name(BudgetKind k)
{
    return k == BudgetKind::calculated ? "calculated" : "experimental_bound";
}

}  // namespace

void write_budget_csv(std::ostream& out, const NoiseBudgetReport& report)
{
    CsvWriter csv(out, {"label", "description", "value", "kind", "intermediate_name", "intermediate_si"});
    for (const auto& e : report.entries) {
        csv.cell(std::string(1, e.label)).cell(e.description).cell(e.value).cell(kind_name(e.kind));
        csv.cell(e.intermediate_name);
        if (e.intermediate_name.empty()) {
            csv.cell(std::string{});
        } else {
            csv.cell(e.intermediate);
        }
        csv.end_row();
    }
    csv.cell(std::string("total")).cell(std::string("sum of entries")).cell(report.total)
        .cell(std::string("sum")).cell(std::string{}).cell(std::string{}).end_row();
}

std::string budget_text(const NoiseBudgetReport& report, double fitted_vn)
{
    std::ostringstream out;
    char line[160];
    for (const auto& e : report.entries) {
        std::snprintf(line, sizeof line, "(%c) %-30s %12.3e  %s", e.label, e.description.c_str(), e.value,
                      kind_name(e.kind));
        out << line;
        if (!e.intermediate_name.empty()) {
            std::snprintf(line, sizeof line, "  [%s = %.3e]", e.intermediate_name.c_str(), e.intermediate);
            out << line;
        }
        out << '\n';
    }
    std::snprintf(line, sizeof line, "    %-30s %12.3e\n", "total", report.total);
    out << line;
    std::snprintf(line, sizeof line, "    %-30s %12.3e  %s\n", "fitted Vn", fitted_vn,
                  report.consistent_with(fitted_vn) ? "consistent (total <= Vn)" : "inconsistent (total > Vn)");
    out << line;
    return out.str();
}

}  // namespace squeezelab
