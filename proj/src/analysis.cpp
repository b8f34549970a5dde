#include "squeezelab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include <Eigen/QR>

#include "squeezelab/least_squares.hpp"
#include "squeezelab/parallel.hpp"

namespace squeezelab {

namespace {

std::size_t index_of(const std::vector<std::string>& names, const std::string& name)
{
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DomainError("fit has no parameter named " + name);
    return static_cast<std::size_t>(it - names.begin());
}

FitResult make_result(std::vector<std::string> names, const Eigen::VectorXd& values,
                      const Eigen::MatrixXd& covariance, double residual_rms, std::size_t n_points)
{
    FitResult out;
    out.names = std::move(names);
    out.values = values;
    out.covariance = covariance;
    out.std_errors = covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.residual_rms = residual_rms;
    out.n_points = n_points;
    return out;
}

}  // namespace

double FitResult::value(const std::string& name) const
{
    return values(static_cast<Eigen::Index>(index_of(names, name)));
}

double FitResult::error(const std::string& name) const
{
    return std_errors(static_cast<Eigen::Index>(index_of(names, name)));
}

bool FitResult::has_flag(const std::string& flag) const
{
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

nlohmann::ordered_json fit_report(const FitResult& fit)
{
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    nlohmann::ordered_json errors = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        params[fit.names[i]] = fit.values(static_cast<Eigen::Index>(i));
        errors[fit.names[i]] = fit.std_errors(static_cast<Eigen::Index>(i));
    }
    nlohmann::ordered_json out;
    out["parameters"] = params;
    out["errors"] = errors;
    out["residual_rms"] = fit.residual_rms;
    out["n_points"] = fit.n_points;
    out["n_dropped"] = fit.n_dropped;
    out["flags"] = fit.flags;
    return out;
}

// ---------------------------------------------------------------------------
// Trace processing

std::vector<double> design_bandpass(const FilterSpec& spec, double sample_rate)
{
    if (spec.order < 2 || spec.order % 2 != 0) throw DomainError("filter order must be even and >= 2");
    if (!(spec.bandwidth > 0.0) || !(spec.center > spec.bandwidth / 2.0)) {
        throw DomainError("filter band must lie above DC");
    }
    if (!(sample_rate > 2.0 * (spec.center + spec.bandwidth / 2.0))) {
        throw DomainError("sample rate too low for the filter band");
    }
    const int n_taps = spec.order + 1;
    const int mid = spec.order / 2;
    const double f1 = (spec.center - spec.bandwidth / 2.0) / sample_rate;
    const double f2 = (spec.center + spec.bandwidth / 2.0) / sample_rate;
    auto sinc_lowpass = [](double fc, int m) {
        if (m == 0) return 2.0 * fc;
        return std::sin(kTwoPi * fc * m) / (kPi * m);
    };

    std::vector<double> taps(static_cast<std::size_t>(n_taps));
    std::vector<double> window(taps.size());
    for (int k = 0; k < n_taps; ++k) {
        const int m = k - mid;
        window[k] = 0.54 - 0.46 * std::cos(kTwoPi * k / spec.order);
        taps[k] = (sinc_lowpass(f2, m) - sinc_lowpass(f1, m)) * window[k];
    }
    // Null the DC response with a multiple of the (symmetric) window.
    const double tap_sum = std::accumulate(taps.begin(), taps.end(), 0.0);
    const double window_sum = std::accumulate(window.begin(), window.end(), 0.0);
    for (int k = 0; k < n_taps; ++k) taps[k] -= tap_sum / window_sum * window[k];

    const double gain = std::abs(fir_response(taps, spec.center, sample_rate));
    if (!(gain > 0.0)) throw DomainError("filter has no gain at its center frequency");
    for (double& t : taps) t /= gain;
    return taps;
}

std::complex<double> fir_response(std::span<const double> taps, double f, double sample_rate)
{
    const double mid = 0.5 * static_cast<double>(taps.size() - 1);
    std::complex<double> h = 0.0;
    for (std::size_t k = 0; k < taps.size(); ++k) {
        h += taps[k] * std::polar(1.0, -kTwoPi * f * (static_cast<double>(k) - mid) / sample_rate);
    }
    return h;
}

Trace fir_bandpass(const Trace& trace, const FilterSpec& spec)
{
    const auto taps = design_bandpass(spec, trace.sample_rate);
    const auto mid = static_cast<std::ptrdiff_t>(spec.order / 2);
    const auto n = static_cast<std::ptrdiff_t>(trace.samples.size());
    Trace out;
    out.sample_rate = trace.sample_rate;
    out.t0 = trace.t0;
    out.samples.assign(trace.samples.size(), 0.0);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(taps.size()); ++k) {
            const std::ptrdiff_t j = i + mid - k;
            if (j >= 0 && j < n) acc += taps[static_cast<std::size_t>(k)] * trace.samples[j];
        }
        out.samples[i] = acc;
    }
    return out;
}

FitResult fit_sinusoid(const Trace& trace, double f0_guess)
{
    const auto n = static_cast<Eigen::Index>(trace.samples.size());
    if (!(f0_guess > 0.0)) throw DomainError("frequency guess must be positive");
    if (n < 8 || trace.duration() * f0_guess < 5.0) {
        throw DomainError("trace must cover at least five periods");
    }
    Eigen::VectorXd t(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        t(i) = trace.time(static_cast<std::size_t>(i));
        y(i) = trace.samples[static_cast<std::size_t>(i)];
    }

    // Linear seed at a fixed frequency: a sin + b cos + c.
    auto linear_seed = [&](double f) {
        Eigen::MatrixXd design(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double th = kTwoPi * f * t(i);
            design(i, 0) = std::sin(th);
            design(i, 1) = std::cos(th);
            design(i, 2) = 1.0;
        }
        const Eigen::Vector3d lin = design.colPivHouseholderQr().solve(y);
        return std::pair<Eigen::Vector3d, double>(lin, (design * lin - y).squaredNorm());
    };
    auto [lin, rss] = linear_seed(f0_guess);
    double f_seed = f0_guess;
    const double centered = (y.array() - y.mean()).matrix().squaredNorm();
    if (rss > 0.5 * centered) {
        // The guess misses by more than ~1/(4 T): pick the periodogram peak
        // within +-5% on a grid of a quarter Fourier bin.
        const double step = 0.25 / trace.duration();
        const int half = static_cast<int>(std::ceil(0.05 * f0_guess / step));
        const Eigen::ArrayXd yc = y.array() - y.mean();
        double best = -1.0;
        double f_peak = f0_guess;
        for (int k = -half; k <= half; ++k) {
            const double f = f0_guess + k * step;
            if (f <= 0.0) continue;
            const Eigen::ArrayXd th = kTwoPi * f * t.array();
            const double p = std::pow((yc * th.sin()).sum(), 2) + std::pow((yc * th.cos()).sum(), 2);
            if (p > best) {
                best = p;
                f_peak = f;
            }
        }
        // Noise-only power / (sigma^2 n) is Exp(1) per bin; accept the peak only
        // above a 1% false-alarm level over the 2 half + 1 searched bins.
        const double threshold = std::log((2.0 * half + 1.0) / 0.01) * centered;
        if (best > threshold) {
            f_seed = f_peak;
            std::tie(lin, rss) = linear_seed(f_seed);
        }
    }
    Eigen::VectorXd x0(4);
    x0 << std::hypot(lin(0), lin(1)), f_seed, std::atan2(lin(1), lin(0)), lin(2);

    // Residual and Jacobian share the trig evaluations at the same x.
    struct Cache {
        Eigen::VectorXd x;
        Eigen::ArrayXd s, c;
    };
    auto cache = std::make_shared<Cache>();
    auto refresh = [cache, &t](const Eigen::VectorXd& x) {
        if (cache->x.size() == x.size() && cache->x == x) return;
        const Eigen::ArrayXd th = kTwoPi * x(1) * t.array() + x(2);
        cache->s = th.sin();
        cache->c = th.cos();
        cache->x = x;
    };
    const ResidualFn residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        refresh(x);
        r = (x(0) * cache->s + x(3)).matrix() - y;
    };
    const JacobianFn jacobian = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j) {
        refresh(x);
        j.resize(n, 4);
        j.col(0) = cache->s.matrix();
        j.col(1) = (x(0) * cache->c * kTwoPi * t.array()).matrix();
        j.col(2) = (x(0) * cache->c).matrix();
        j.col(3).setOnes();
    };

    LsqResult lsq;
    if (x0(0) == 0.0) {
        // Flat record: nothing to refine.
        lsq.x = x0;
        lsq.covariance = Eigen::MatrixXd::Zero(4, 4);
        lsq.dof = static_cast<int>(n - 4);
        lsq.converged = true;
    } else {
        lsq = levenberg_marquardt(residual, jacobian, x0, n);
    }
    if (!lsq.converged) throw FitError("sinusoid fit did not converge");

    Eigen::VectorXd x = lsq.x;
    if (x(0) < 0.0) {
        x(0) = -x(0);
        x(2) += kPi;
    }
    x(2) = std::fmod(x(2), kTwoPi);
    if (x(2) < 0.0) x(2) += kTwoPi;

    const double sigma2 = lsq.dof > 0 ? lsq.chi2 / lsq.dof : 0.0;
    FitResult out = make_result({"amplitude", "frequency", "phase", "offset"}, x,
                                lsq.covariance * sigma2, std::sqrt(lsq.chi2 / static_cast<double>(n)),
                                static_cast<std::size_t>(n));
    if (out.values(0) < 3.0 * out.std_errors(0)) out.flags.emplace_back("below_noise_floor");
    return out;
}

VelocityExtraction extract_velocities(const TofEnsemble& ens, const FilterSpec& filter,
                                      unsigned workers, double max_drop_fraction)
{
    VelocityExtraction out;
    out.n_total = ens.trials.size();
    const double t_tof = ens.schedule.t_tof;
    if (!ens.noise.synthesize_traces) {
        out.velocities.reserve(ens.trials.size());
        for (const auto& trial : ens.trials) out.velocities.push_back(trial.signed_amplitude() / t_tof);
        return out;
    }

    const double f0 = ens.params.omega0 / kTwoPi;
    const auto taps = design_bandpass(filter, ens.noise.sample_rate);
    const auto trim = static_cast<std::size_t>(filter.order / 2);
    std::vector<double> velocity(ens.trials.size(), 0.0);
    std::vector<char> ok(ens.trials.size(), 0);

    parallel_for(ens.trials.size(), workers, [&](std::size_t i) {
        const Trace& raw = ens.trials[i].trace;
        if (raw.samples.size() <= 2 * trim) return;
        Trace filtered = fir_bandpass(raw, filter);
        filtered.samples.erase(filtered.samples.end() - static_cast<std::ptrdiff_t>(trim),
                               filtered.samples.end());
        filtered.samples.erase(filtered.samples.begin(),
                               filtered.samples.begin() + static_cast<std::ptrdiff_t>(trim));
        filtered.t0 += static_cast<double>(trim) / filtered.sample_rate;
        try {
            const FitResult fit = fit_sinusoid(filtered, f0);
            const double f = fit.value("frequency");
            std::complex<double> h = fir_response(taps, f, filtered.sample_rate);
            if (ens.noise.highpass) h *= recorder_highpass_response(f, filtered.sample_rate);
            const double amplitude = fit.value("amplitude") / std::abs(h);
            const double phase = fit.value("phase") - std::arg(h);
            const double sign = std::sin(phase) < 0.0 ? -1.0 : 1.0;
            velocity[i] = sign * amplitude / (ens.noise.volts_per_meter * t_tof);
            ok[i] = 1;
        } catch (const FitError&) {
            ok[i] = 0;
        }
    });

    for (std::size_t i = 0; i < velocity.size(); ++i) {
        if (ok[i]) {
            out.velocities.push_back(velocity[i]);
        } else {
            ++out.n_dropped;
        }
    }
    if (out.drop_fraction() > max_drop_fraction) {
        throw FitError("dropped " + std::to_string(out.n_dropped) + " of "
                       + std::to_string(out.n_total) + " trials, above the abort threshold");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Velocity distributions

std::vector<double> Histogram::centers() const
{
    std::vector<double> c(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) c[i] = 0.5 * (bin_edges[i] + bin_edges[i + 1]);
    return c;
}

long Histogram::total() const
{
    return std::accumulate(counts.begin(), counts.end(), 0L);
}

double half_scott_bin_width(double sigma, std::size_t n)
{
    if (n == 0) throw DomainError("bin width needs at least one sample");
    return 1.75 * sigma / std::cbrt(static_cast<double>(n));
}

Histogram velocity_histogram(std::span<const double> velocities)
{
    const std::size_t n = velocities.size();
    if (n < 10) throw DomainError("histogram needs at least 10 samples");
    const double mean = std::accumulate(velocities.begin(), velocities.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : velocities) ss += (v - mean) * (v - mean);
    const double sigma = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sigma > 0.0)) throw DomainError("histogram input has zero spread");

    const auto [lo_it, hi_it] = std::minmax_element(velocities.begin(), velocities.end());
    Histogram h;
    h.bin_width = half_scott_bin_width(sigma, n);
    const double range = *hi_it - *lo_it;
    const auto n_bins = static_cast<std::size_t>(std::max(1.0, std::ceil(range / h.bin_width)));
    const double start = 0.5 * (*lo_it + *hi_it) - 0.5 * static_cast<double>(n_bins) * h.bin_width;
    h.bin_edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) h.bin_edges[i] = start + static_cast<double>(i) * h.bin_width;
    h.counts.assign(n_bins, 0);
    for (double v : velocities) {
        const auto k = static_cast<long>(std::floor((v - start) / h.bin_width));
        h.counts[static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(n_bins) - 1))] += 1;
    }
    return h;
}

FitResult fit_velocity_distribution(const Histogram& hist)
{
    const auto centers = hist.centers();
    const auto nonempty = std::count_if(hist.counts.begin(), hist.counts.end(), [](long c) { return c > 0; });
    if (nonempty < 5) throw DomainError("velocity fit needs at least 5 nonempty bins");

    // Bins beyond the sample extremes were observed empty; without them a
    // free-amplitude fit widens into the unobserved tails. Pad to +-6 sigma.
    const double h = hist.bin_width;
    double raw_mean = 0.0;
    double raw_total = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        raw_mean += static_cast<double>(hist.counts[i]) * centers[i];
        raw_total += static_cast<double>(hist.counts[i]);
    }
    raw_mean /= raw_total;
    double raw_var = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        raw_var += static_cast<double>(hist.counts[i]) * (centers[i] - raw_mean) * (centers[i] - raw_mean);
    }
    const double reach = 6.0 * std::sqrt(raw_var / raw_total);
    const auto pad_lo = static_cast<Eigen::Index>(
        std::max(0.0, std::ceil((hist.bin_edges.front() - (raw_mean - reach)) / h)));
    const auto pad_hi = static_cast<Eigen::Index>(
        std::max(0.0, std::ceil((raw_mean + reach - hist.bin_edges.back()) / h)));

    const auto m = static_cast<Eigen::Index>(centers.size()) + pad_lo + pad_hi;
    Eigen::VectorXd v(m);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        v(i) = centers.front() + static_cast<double>(i - pad_lo) * h;
        const Eigen::Index k = i - pad_lo;
        if (k >= 0 && k < static_cast<Eigen::Index>(centers.size())) {
            counts(i) = static_cast<double>(hist.counts[static_cast<std::size_t>(k)]);
        }
    }
    const double total = counts.sum();
    const double mean = counts.dot(v) / total;
    const double var = counts.dot((v.array() - mean).square().matrix()) / total;

    // Work in units of the bin width so the parameters are O(1).
    const double scale = hist.bin_width;
    const Eigen::ArrayXd u = (v.array() - mean) / scale;
    Eigen::VectorXd x(3);
    x << counts.maxCoeff(), 0.0, std::max(std::sqrt(var) / scale, 0.5);

    // Expected counts integrate the Gaussian over each bin (unit width in u),
    // so the fitted width carries no h^2 / 12 binning offset; p(0) is the
    // peak density in counts per bin.
    const double root_two_pi = std::sqrt(kTwoPi);
    auto phi = [](const Eigen::ArrayXd& z) -> Eigen::ArrayXd { return (-0.5 * z.square()).exp() / std::sqrt(kTwoPi); };
    auto cdf = [](const Eigen::ArrayXd& z) -> Eigen::ArrayXd {
        return 0.5 * (z / std::sqrt(2.0)).unaryExpr([](double a) { return std::erfc(-a); });
    };
    auto model = [&](const Eigen::VectorXd& p) -> Eigen::ArrayXd {
        const Eigen::ArrayXd hi = (u + 0.5 - p(1)) / p(2);
        const Eigen::ArrayXd lo = (u - 0.5 - p(1)) / p(2);
        return p(0) * root_two_pi * p(2) * (cdf(hi) - cdf(lo));
    };

    auto model_jacobian = [&](const Eigen::VectorXd& p) -> Eigen::MatrixXd {
        const Eigen::ArrayXd hi = (u + 0.5 - p(1)) / p(2);
        const Eigen::ArrayXd lo = (u - 0.5 - p(1)) / p(2);
        const Eigen::ArrayXd mass = cdf(hi) - cdf(lo);
        const Eigen::ArrayXd ph = phi(hi);
        const Eigen::ArrayXd pl = phi(lo);
        Eigen::MatrixXd j(m, 3);
        j.col(0) = (root_two_pi * p(2) * mass).matrix();
        j.col(1) = (-p(0) * root_two_pi * (ph - pl)).matrix();
        j.col(2) = (p(0) * root_two_pi * (mass - (hi * ph - lo * pl))).matrix();
        return j;
    };

    // Poisson maximum likelihood: the squared signed deviance residuals sum
    // to the binned Poisson deviance.
    const double floor = 1e-300;
    const Eigen::ArrayXd n_obs = counts.array();
    auto deviance = [&](const Eigen::ArrayXd& mu) -> Eigen::ArrayXd {
        const Eigen::ArrayXd log_term =
            (n_obs > 0.0).select(n_obs * (n_obs / mu).log(), Eigen::ArrayXd::Zero(m));
        return (2.0 * (mu - n_obs + log_term)).max(0.0);
    };
    const ResidualFn residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const Eigen::ArrayXd mu = model(p).max(floor);
        r = ((n_obs - mu).sign() * deviance(mu).sqrt()).matrix();
    };
    const JacobianFn jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
        const Eigen::ArrayXd mu = model(p).max(floor);
        const Eigen::ArrayXd r = (n_obs - mu).sign() * deviance(mu).sqrt();
        // dr/dmu = (1 - n / mu) / r, tending to -1 / sqrt(mu) as mu -> n.
        const Eigen::ArrayXd near = -1.0 / mu.sqrt();
        const Eigen::ArrayXd slope = (r.abs() > 1e-6).select((1.0 - n_obs / mu) / r, near);
        j = slope.matrix().asDiagonal() * model_jacobian(p);
    };
    LsqResult lsq = levenberg_marquardt(residual, jacobian, x, m);
    if (!lsq.converged) throw FitError("Gaussian fit to the velocity histogram did not converge");
    x = lsq.x;
    {
        // Parameter covariance from the Poisson Fisher information.
        const Eigen::ArrayXd mu = model(x).max(floor);
        const Eigen::MatrixXd g = model_jacobian(x);
        const Eigen::MatrixXd info = g.transpose() * mu.inverse().matrix().asDiagonal() * g;
        lsq.covariance = info.completeOrthogonalDecomposition().pseudoInverse();
    }
    x(2) = std::abs(x(2));
    if (!(x(2) > 0.0) || !(x(0) > 0.0)) throw FitError("Gaussian fit collapsed");

    Eigen::VectorXd values(3);
    values << x(0), mean + x(1) * scale, x(2) * scale;
    Eigen::Vector3d jac_scale(1.0, scale, scale);
    const Eigen::MatrixXd cov = jac_scale.asDiagonal() * lsq.covariance * jac_scale.asDiagonal();
    const double rms = std::sqrt((model(x) - counts.array()).square().mean());
    return make_result({"amplitude", "v0", "dv"}, values, cov, rms, static_cast<std::size_t>(m));
}

FitResult sample_width_ml(std::span<const double> velocities)
{
    const std::size_t n = velocities.size();
    if (n < 2) throw DomainError("width estimate needs at least two samples");
    const double mean = std::accumulate(velocities.begin(), velocities.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : velocities) ss += (v - mean) * (v - mean);
    const double width = std::sqrt(ss / static_cast<double>(n));
    if (!(width > 0.0)) throw DomainError("width estimate input has zero spread");
    Eigen::Vector2d values(mean, width);
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    cov(0, 0) = width * width / static_cast<double>(n);
    cov(1, 1) = width * width / (2.0 * static_cast<double>(n));
    return make_result({"v0", "dv"}, values, cov, 0.0, n);
}

// ---------------------------------------------------------------------------
// Variance evolution and squeezing-parameter dependence

namespace {

/// Sigma vector from optional per-point errors: all supplied or unit weights.
Eigen::VectorXd point_sigmas(const std::vector<double>& errors, bool& supplied)
{
    const bool any = std::any_of(errors.begin(), errors.end(), [](double e) { return e > 0.0; });
    const bool all = std::all_of(errors.begin(), errors.end(), [](double e) { return e > 0.0; });
    if (any && !all) throw DomainError("standard errors must be given for all points or none");
    supplied = all;
    Eigen::VectorXd s(static_cast<Eigen::Index>(errors.size()));
    for (std::size_t i = 0; i < errors.size(); ++i) s(static_cast<Eigen::Index>(i)) = all ? errors[i] : 1.0;
    return s;
}

/// Linear fit with the listed columns held at zero (non-negativity fallback).
LsqResult fit_with_fixed_zero(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& sigma, const std::vector<bool>& fixed)
{
    std::vector<Eigen::Index> free_cols;
    for (Eigen::Index c = 0; c < design.cols(); ++c) {
        if (!fixed[static_cast<std::size_t>(c)]) free_cols.push_back(c);
    }
    Eigen::MatrixXd reduced(design.rows(), static_cast<Eigen::Index>(free_cols.size()));
    for (std::size_t k = 0; k < free_cols.size(); ++k) reduced.col(static_cast<Eigen::Index>(k)) = design.col(free_cols[k]);
    const LsqResult sub = weighted_linear_lsq(reduced, y, sigma);

    LsqResult out = sub;
    out.x = Eigen::VectorXd::Zero(design.cols());
    out.covariance = Eigen::MatrixXd::Zero(design.cols(), design.cols());
    for (std::size_t a = 0; a < free_cols.size(); ++a) {
        out.x(free_cols[a]) = sub.x(static_cast<Eigen::Index>(a));
        for (std::size_t b = 0; b < free_cols.size(); ++b) {
            out.covariance(free_cols[a], free_cols[b]) =
                sub.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
    }
    return out;
}

}  // namespace

FitResult fit_variance_evolution(std::span<const VariancePoint> points, double omega0,
                                 const VarianceFitOptions& options)
{
    if (!(omega0 > 0.0)) throw DomainError("omega0 must be positive");
    if (points.size() < 4) throw DomainError("variance fit needs at least 4 points");
    const auto [lo, hi] = std::minmax_element(points.begin(), points.end(),
                                              [](const auto& a, const auto& b) { return a.hold < b.hold; });
    const double half_period = kPi / (2.0 * omega0);
    if (hi->hold - lo->hold < half_period * (1.0 - 1e-9)) {
        throw DomainError("hold times must span at least half an oscillation period");
    }

    const auto n = static_cast<Eigen::Index>(points.size());
    const Eigen::Index n_params = options.include_cross_term ? 3 : 2;
    Eigen::MatrixXd design(n, n_params);
    Eigen::VectorXd y(n);
    std::vector<double> errors;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = points[static_cast<std::size_t>(i)];
        const double phi = omega0 * p.hold;
        design(i, 0) = std::cos(phi) * std::cos(phi);
        design(i, 1) = std::sin(phi) * std::sin(phi);
        if (options.include_cross_term) design(i, 2) = std::sin(2.0 * phi);
        y(i) = p.v_tilde;
        errors.push_back(p.std_error);
    }
    bool supplied = false;
    const Eigen::VectorXd supplied_sigma = point_sigmas(errors, supplied);
    Eigen::VectorXd sigma = supplied_sigma;

    LsqResult lsq;
    bool clipped = false;
    const int passes = options.model_weights && supplied ? 4 : 1;
    for (int pass = 0; pass < passes; ++pass) {
        lsq = weighted_linear_lsq(design, y, sigma);
        std::vector<bool> fixed(static_cast<std::size_t>(n_params), false);
        clipped = false;
        for (int round = 0; round < 2 && (lsq.x(0) < 0.0 || lsq.x(1) < 0.0); ++round) {
            if (lsq.x(0) < 0.0) fixed[0] = true;
            if (lsq.x(1) < 0.0) fixed[1] = true;
            lsq = fit_with_fixed_zero(design, y, sigma, fixed);
            clipped = true;
        }
        if (!lsq.converged) throw FitError("variance evolution fit failed");
        if (pass + 1 < passes) {
            const Eigen::VectorXd model = design * lsq.x;
            for (Eigen::Index i = 0; i < n; ++i) {
                // Keep each point's relative precision; skip non-positive values.
                if (y(i) > 0.0 && model(i) > 0.0) sigma(i) = supplied_sigma(i) * model(i) / y(i);
            }
        }
    }

    Eigen::MatrixXd cov = lsq.covariance;
    if (options.scale_by_chi2 || !supplied) cov *= lsq.reduced_chi2();
    const double rms = std::sqrt((design * lsq.x - y).squaredNorm() / static_cast<double>(n));
    std::vector<std::string> names{"V1", "V2"};
    if (options.include_cross_term) names.emplace_back("C");
    FitResult out = make_result(std::move(names), lsq.x, cov, rms, points.size());
    if (clipped) out.flags.emplace_back("clipped_at_zero");
    return out;
}

FitResult fit_r_dependence(std::span<const SqueezePoint> points, Branch branch,
                           std::optional<double> fixed_vn, bool scale_by_chi2,
                           std::optional<double> flight_phase)
{
    if (flight_phase && !(*flight_phase > 0.0)) throw DomainError("flight phase must be positive");
    std::set<double> distinct;
    for (const auto& p : points) distinct.insert(p.r);
    if (distinct.size() < 3) throw DomainError("r-dependence fit needs at least 3 distinct r values");

    const double sign = branch == Branch::minima ? -1.0 : 1.0;
    const double position = flight_phase ? 1.0 / (*flight_phase * *flight_phase) : 0.0;
    auto basis = [&](double r) { return std::exp(sign * 4.0 * r) + position * std::exp(4.0 * r); };
    const auto n = static_cast<Eigen::Index>(points.size());
    std::vector<double> errors;
    for (const auto& p : points) errors.push_back(p.std_error);
    bool supplied = false;
    const Eigen::VectorXd sigma = point_sigmas(errors, supplied);

    Eigen::VectorXd values(2);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    Eigen::VectorXd model(n);
    LsqResult lsq;
    if (fixed_vn) {
        Eigen::MatrixXd design(n, 1);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& p = points[static_cast<std::size_t>(i)];
            design(i, 0) = basis(p.r);
            y(i) = p.value - *fixed_vn;
        }
        lsq = weighted_linear_lsq(design, y, sigma);
        values << *fixed_vn, lsq.x(0);
        cov(1, 1) = lsq.covariance(0, 0);
        model = (design * lsq.x).array() + *fixed_vn;
    } else {
        Eigen::MatrixXd design(n, 2);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& p = points[static_cast<std::size_t>(i)];
            design(i, 0) = 1.0;
            design(i, 1) = basis(p.r);
            y(i) = p.value;
        }
        lsq = weighted_linear_lsq(design, y, sigma);
        values = lsq.x;
        cov = lsq.covariance;
        model = design * lsq.x;
    }
    if (!lsq.converged) throw FitError("r-dependence fit failed");
    if (scale_by_chi2 || !supplied) cov *= lsq.reduced_chi2();

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = points[static_cast<std::size_t>(i)].value;
    const double rms = std::sqrt((model - y).squaredNorm() / static_cast<double>(n));
    FitResult out = make_result({"Vn", "Vini"}, values, cov, rms, points.size());
    if (fixed_vn) out.flags.emplace_back("Vn_fixed");
    if (flight_phase) out.flags.emplace_back("position_term");
    return out;
}

double squeezing_db(double v_tilde)
{
    if (!(v_tilde > 0.0)) throw DomainError("variance must be positive to express in dB");
    return 10.0 * std::log10(v_tilde);
}

OccupationEstimate occupation_from_width(double dv, const PhysicalParams& params)
{
    if (!(dv > 0.0)) throw DomainError("velocity width must be positive");
    const double n = params.mass * dv * dv / (params.hbar * params.omega0) - 0.5;
    return {n, n < 0.0};
}

}  // namespace squeezelab
