#pragma once

#include <functional>

#include <Eigen/Core>

namespace squeezelab {

/// Outcome of a least-squares solve. `covariance` is (J^T J)^{-1} of the
/// weighted problem, i.e. parameter covariance assuming the supplied weights
/// are exact inverse standard deviations.
struct LsqResult {
    Eigen::VectorXd x;
    Eigen::MatrixXd covariance;
    double chi2 = 0.0;
    int dof = 0;
    int evaluations = 0;
    bool converged = false;

    [[nodiscard]] double reduced_chi2() const { return dof > 0 ? chi2 / dof : 0.0; }
};

using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& residual)>;
using JacobianFn = std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd& jacobian)>;

struct LmOptions {
    int max_evaluations = 2000;
    double tolerance = 1.0e-10;
};

/// Minimizes |residual(x)|^2 over x from x0. Residuals must already carry the
/// weights. Backed by Eigen's MINPACK port (lmder).
[[nodiscard]] LsqResult levenberg_marquardt(const ResidualFn& residual, const JacobianFn& jacobian,
                                            const Eigen::VectorXd& x0, Eigen::Index n_residuals,
                                            const LmOptions& options = {});

/// Weighted linear least squares for y ~ A x with per-row standard deviations.
[[nodiscard]] LsqResult weighted_linear_lsq(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& sigma);

}  // namespace squeezelab
