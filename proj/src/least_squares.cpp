#include "squeezelab/least_squares.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include "squeezelab/constants.hpp"

namespace squeezelab {

namespace {

struct Functor {
    const ResidualFn& residual;
    const JacobianFn& jacobian;
    Eigen::Index n_inputs;
    Eigen::Index n_values;

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const
    {
        residual(x, fvec);
        return fvec.allFinite() ? 0 : -1;
    }
    int df(const Eigen::VectorXd& x, Eigen::MatrixXd& fjac) const
    {
        jacobian(x, fjac);
        return fjac.allFinite() ? 0 : -1;
    }
    [[nodiscard]] Eigen::Index inputs() const { return n_inputs; }
    [[nodiscard]] Eigen::Index values() const { return n_values; }
};

Eigen::MatrixXd normal_inverse(const Eigen::MatrixXd& jac)
{
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jtj);
    return cod.pseudoInverse();
}

}  // namespace

LsqResult levenberg_marquardt(const ResidualFn& residual, const JacobianFn& jacobian,
                              const Eigen::VectorXd& x0, Eigen::Index n_residuals,
                              const LmOptions& options)
{
    if (n_residuals < x0.size()) throw FitError("fewer residuals than parameters");
    Functor functor{residual, jacobian, x0.size(), n_residuals};
    Eigen::LevenbergMarquardt<Functor> lm(functor);
    lm.parameters.maxfev = options.max_evaluations;
    lm.parameters.ftol = options.tolerance;
    lm.parameters.xtol = options.tolerance;

    LsqResult out;
    out.x = x0;
    const auto status = lm.minimize(out.x);
    out.evaluations = static_cast<int>(lm.nfev);

    using namespace Eigen::LevenbergMarquardtSpace;
    const bool stopped_at_optimum = status == RelativeReductionTooSmall
        || status == RelativeErrorTooSmall || status == RelativeErrorAndReductionTooSmall
        || status == CosinusTooSmall || status == FtolTooSmall || status == XtolTooSmall
        || status == GtolTooSmall;

    Eigen::VectorXd r(n_residuals);
    residual(out.x, r);
    Eigen::MatrixXd jac(n_residuals, x0.size());
    jacobian(out.x, jac);
    out.chi2 = r.squaredNorm();
    out.dof = static_cast<int>(n_residuals - x0.size());
    out.covariance = normal_inverse(jac);
    out.converged = stopped_at_optimum && out.x.allFinite() && std::isfinite(out.chi2);
    return out;
}

LsqResult weighted_linear_lsq(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& sigma)
{
    if (design.rows() != y.size() || sigma.size() != y.size()) {
        throw FitError("design, data and sigma sizes differ");
    }
    if (design.rows() < design.cols()) throw FitError("fewer points than parameters");
    if ((sigma.array() <= 0.0).any()) throw FitError("standard deviations must be positive");
    const Eigen::VectorXd w = sigma.cwiseInverse();
    const Eigen::MatrixXd a = w.asDiagonal() * design;
    const Eigen::VectorXd b = w.cwiseProduct(y);

    LsqResult out;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < design.cols()) throw FitError("design matrix is rank deficient");
    out.x = qr.solve(b);
    out.chi2 = (a * out.x - b).squaredNorm();
    out.dof = static_cast<int>(design.rows() - design.cols());
    out.covariance = normal_inverse(a);
    out.converged = out.x.allFinite();
    out.evaluations = 1;
    return out;
}

}  // namespace squeezelab
