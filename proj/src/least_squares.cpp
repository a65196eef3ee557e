#include "defect_forge/least_squares.hpp"

#include <cmath>
#include <limits>

#include "defect_forge/errors.hpp"

namespace defect_forge {

namespace {

double relative_step(const Eigen::VectorXd& step, const Eigen::VectorXd& p) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    worst = std::max(worst, std::abs(step[i]) / std::max(std::abs(p[i]), 1e-12));
  }
  return worst;
}

}  // namespace

GaussNewtonResult gauss_newton(const ResidualFunction& f, Eigen::VectorXd p0, const GaussNewtonOptions& options) {
  GaussNewtonResult out;
  Eigen::VectorXd p = std::move(p0);
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  if (!f(p, r, &J) || !r.allFinite() || !J.allFinite()) {
    throw ValidationError("initial parameters outside the model domain");
  }
  if (r.size() < p.size()) throw ValidationError("fewer data points than fit parameters");
  double rss = r.squaredNorm();

  Eigen::VectorXd trial_r;
  for (int it = 1; it <= options.max_iterations; ++it) {
    out.iterations = it;
    const Eigen::VectorXd full = J.colPivHouseholderQr().solve(-r);
    if (!full.allFinite()) break;

    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double trial_rss = std::numeric_limits<double>::infinity();
    for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      trial = p + scale * full;
      if (f(trial, trial_r, nullptr) && trial_r.allFinite()) {
        trial_rss = trial_r.squaredNorm();
        if (trial_rss <= rss) {
          accepted = true;
          break;
        }
      }
    }

    const double rel = relative_step(scale * full, p);
    if (!accepted) {
      // No decrease along the Gauss-Newton direction: stationary point.
      out.converged = relative_step(full, p) < std::sqrt(options.step_tolerance) || rss == 0.0;
      break;
    }
    p = trial;
    rss = trial_rss;
    if (!f(p, r, &J)) break;
    if (rel < options.step_tolerance) {
      out.converged = true;
      break;
    }
  }

  f(p, r, &J);
  out.params = p;
  out.residuals = r;
  out.rss = r.squaredNorm();
  const Eigen::Index m = r.size();
  const Eigen::Index n = p.size();
  const double s2 = m > n ? out.rss / static_cast<double>(m - n) : 0.0;
  const Eigen::MatrixXd jtj = J.transpose() * J;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  out.covariance = lu.isInvertible() ? Eigen::MatrixXd(s2 * lu.inverse())
                                     : Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  return out;
}

}  // namespace defect_forge
