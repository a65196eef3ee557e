#pragma once

#include <functional>

#include <Eigen/Dense>

namespace defect_forge {

/// Residual model: fills r (size m) and, when J is non-null, the m x n
/// Jacobian dr/dp. Returns false when p is outside the model's domain.
using ResidualFunction = std::function<bool(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J)>;

struct GaussNewtonOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-8;  // relative parameter step
  int max_halvings = 40;
};

struct GaussNewtonResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd covariance;  // s^2 (J^T J)^-1 with s^2 = |r|^2 / (m - n)
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;

  double rms() const { return residuals.size() ? std::sqrt(rss / residuals.size()) : 0.0; }
  double standard_error(int i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }
};

/// Damped Gauss-Newton: the full step solves J dp = -r by column-pivoted
/// QR and is halved until the residual sum of squares decreases. Stops when
/// max_i |dp_i| / max(|p_i|, 1e-12) < step_tolerance. On iteration
/// exhaustion the best point so far is returned with converged = false.
GaussNewtonResult gauss_newton(const ResidualFunction& f, Eigen::VectorXd p0, const GaussNewtonOptions& options = {});

}  // namespace defect_forge
