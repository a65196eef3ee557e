#include "defect_forge/electrostatics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "defect_forge/constants.hpp"
#include "defect_forge/errors.hpp"
#include "defect_forge/parallel.hpp"

namespace defect_forge {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSingularDistance = 1e-6;

// Integral bound of the real-space tail beyond Cartesian radius rc, using
// erfc(x) <= exp(-x^2) / (sqrt(pi) x).
double real_tail(double rc, double eta, double lambda_max, double sqrt_det, double volume) {
  const double a = eta / std::sqrt(lambda_max);
  return constants::kCoulomb * 4.0 * kPi * std::sqrt(lambda_max) / (volume * sqrt_det) *
         std::erfc(a * rc) / (2.0 * a * a);
}

double reciprocal_tail(double gc, double eta, double lambda_min) {
  const double sb = std::sqrt(lambda_min) / (2.0 * eta);
  return constants::kCoulomb * std::erfc(sb * gc) / (std::sqrt(kPi) * lambda_min * sb);
}

template <typename Tail>
double grow_cutoff(double start, double tolerance, Tail&& tail) {
  double c = start;
  for (int i = 0; i < 2000 && tail(c) >= tolerance; ++i) c *= 1.05;
  if (tail(c) >= tolerance) throw ConvergenceError("Ewald cutoff search did not converge");
  return c;
}

Eigen::Vector3d reduce(const CrystalCell& cell, const Eigen::Vector3d& r) {
  Eigen::Vector3d f = cart_to_frac(cell, r);
  f -= f.array().round().matrix();
  return frac_to_cart(cell, f);
}

}  // namespace

EwaldContext::EwaldContext(CrystalCell cell, const EwaldOptions& options) : cell_(std::move(cell)) {
  const Eigen::Matrix3d& eps = cell_.dielectric();
  const double volume = cell_.volume();
  eps_inv_ = eps.inverse();
  sqrt_det_eps_ = std::sqrt(eps.determinant());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(eps, Eigen::EigenvaluesOnly);
  const double lambda_min = solver.eigenvalues().minCoeff();
  const double lambda_max = solver.eigenvalues().maxCoeff();

  const double n_sites = std::max<double>(1.0, static_cast<double>(cell_.sites().size()));
  eta_ = options.eta.value_or(std::pow(kPi * n_sites / (volume * volume), 1.0 / 6.0));
  if (!(eta_ > 0.0) || !std::isfinite(eta_)) throw ValidationError("Ewald eta must be positive");

  auto rtail = [&](double rc) { return real_tail(rc, eta_, lambda_max, sqrt_det_eps_, volume); };
  auto gtail = [&](double gc) { return reciprocal_tail(gc, eta_, lambda_min); };

  if (options.real_cutoff) {
    real_cutoff_ = *options.real_cutoff;
    if (!(real_cutoff_ > 0.0)) throw ValidationError("real-space cutoff must be positive");
    if (rtail(real_cutoff_) > options.max_tail) {
      throw ConvergenceError("real-space cutoff " + std::to_string(real_cutoff_) +
                             " A leaves a tail estimate above tolerance");
    }
  } else {
    real_cutoff_ = grow_cutoff(std::sqrt(lambda_max) / eta_, options.auto_tolerance, rtail);
  }
  if (options.reciprocal_cutoff) {
    reciprocal_cutoff_ = *options.reciprocal_cutoff;
    if (!(reciprocal_cutoff_ > 0.0)) throw ValidationError("reciprocal cutoff must be positive");
    if (gtail(reciprocal_cutoff_) > options.max_tail) {
      throw ConvergenceError("reciprocal cutoff " + std::to_string(reciprocal_cutoff_) +
                             " 1/A leaves a tail estimate above tolerance");
    }
  } else {
    reciprocal_cutoff_ = grow_cutoff(2.0 * eta_ / std::sqrt(lambda_min), options.auto_tolerance, gtail);
  }
  tail_bound_ = rtail(real_cutoff_) + gtail(reciprocal_cutoff_);

  const Eigen::Matrix3d& a = cell_.lattice();
  const Eigen::Matrix3d b = reciprocal(a);

  // Displacements are reduced to fractional [-1/2, 1/2] before summation.
  const double r_max = 0.5 * (a.row(0).norm() + a.row(1).norm() + a.row(2).norm());
  const double reach = real_cutoff_ + r_max;
  Eigen::Vector3i nmax;
  for (int i = 0; i < 3; ++i) {
    nmax[i] = static_cast<int>(std::ceil(reach * b.row(i).norm() / (2.0 * kPi)));
  }
  for (int i = -nmax[0]; i <= nmax[0]; ++i) {
    for (int j = -nmax[1]; j <= nmax[1]; ++j) {
      for (int k = -nmax[2]; k <= nmax[2]; ++k) {
        const Eigen::Vector3d R = a.transpose() * Eigen::Vector3d(i, j, k);
        if (R.norm() <= reach) real_vectors_.push_back(R);
      }
    }
  }

  Eigen::Vector3i mmax;
  for (int i = 0; i < 3; ++i) {
    mmax[i] = static_cast<int>(std::ceil(reciprocal_cutoff_ * a.row(i).norm() / (2.0 * kPi)));
  }
  const double four_eta2 = 4.0 * eta_ * eta_;
  for (int i = 0; i <= mmax[0]; ++i) {
    for (int j = -mmax[1]; j <= mmax[1]; ++j) {
      for (int k = -mmax[2]; k <= mmax[2]; ++k) {
        // Half space: first nonzero index positive.
        if (i == 0 && (j < 0 || (j == 0 && k <= 0))) continue;
        const Eigen::Vector3d G = b.transpose() * Eigen::Vector3d(i, j, k);
        if (G.norm() > reciprocal_cutoff_) continue;
        const double geg = G.dot(eps * G);
        recip_vectors_.push_back(G);
        recip_weights_.push_back(2.0 * 4.0 * kPi / volume * std::exp(-geg / four_eta2) / geg);
      }
    }
  }

  background_ = -kPi / (volume * eta_ * eta_);
  double recip0 = 0.0;
  for (double w : recip_weights_) recip0 += w;
  self_potential_ = constants::kCoulomb * (real_sum(Eigen::Vector3d::Zero(), true) + recip0 + background_ -
                                           2.0 * eta_ / (std::sqrt(kPi) * sqrt_det_eps_));
}

double EwaldContext::real_sum(const Eigen::Vector3d& r, bool skip_origin) const {
  double sum = 0.0;
  const double rc2 = real_cutoff_ * real_cutoff_;
  for (const auto& R : real_vectors_) {
    const Eigen::Vector3d x = r - R;
    const double x2 = x.squaredNorm();
    if (x2 > rc2) continue;
    if (x2 < kSingularDistance * kSingularDistance) {
      if (skip_origin) continue;
      throw ValidationError("Ewald potential evaluated at the charge site");
    }
    const double d = std::sqrt(x.dot(eps_inv_ * x));
    sum += std::erfc(eta_ * d) / (sqrt_det_eps_ * d);
  }
  return sum;
}

double EwaldContext::reciprocal_sum(const Eigen::Vector3d& r) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < recip_vectors_.size(); ++i) {
    sum += recip_weights_[i] * std::cos(recip_vectors_[i].dot(r));
  }
  return sum;
}

double EwaldContext::unit_potential(const Eigen::Vector3d& r) const {
  const Eigen::Vector3d x = reduce(cell_, r);
  return constants::kCoulomb * (real_sum(x, false) + reciprocal_sum(x) + background_);
}

double ewald_potential(const EwaldContext& ctx, double q, const Eigen::Vector3d& r) {
  if (!r.allFinite()) throw ValidationError("non-finite evaluation point");
  const double phi = ctx.unit_potential(r);
  return q == 0.0 ? 0.0 : q * phi;
}

std::vector<double> ewald_potentials(const EwaldContext& ctx, double q,
                                     std::span<const Eigen::Vector3d> displacements) {
  std::vector<double> out(displacements.size(), 0.0);
  std::vector<std::string> errors(displacements.size());
  parallel_for(displacements.size(), [&](std::size_t i) {
    try {
      out[i] = ewald_potential(ctx, q, displacements[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw ValidationError(e);
  }
  return out;
}

double lattice_energy(const EwaldContext& ctx, double q) {
  return 0.5 * q * q * ctx.unit_self_potential();
}

double madelung_constant(const EwaldContext& ctx) {
  const double edge = std::cbrt(ctx.cell().volume());
  const double eps = ctx.cell().dielectric().trace() / 3.0;
  return -2.0 * eps * edge * lattice_energy(ctx, 1.0) / constants::kCoulomb;
}

CorrectionResult finite_size_correction(const EwaldContext& ctx, int q,
                                        std::span<const SitePotential> site_potentials,
                                        const Eigen::Vector3d& defect_frac,
                                        std::optional<double> sampling_radius) {
  CorrectionResult result;
  const CrystalCell& cell = ctx.cell();
  const double radius = sampling_radius.value_or(wigner_seitz_radius(cell));
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw ValidationError("sampling radius must be non-negative");
  result.sampling_radius = radius;

  for (const auto& sp : site_potentials) {
    if (sp.site >= cell.sites().size()) {
      throw ValidationError("site potential refers to site " + std::to_string(sp.site) + " but the cell has " +
                            std::to_string(cell.sites().size()) + " sites");
    }
  }

  if (q == 0) {
    const bool any = std::any_of(site_potentials.begin(), site_potentials.end(),
                                 [](const SitePotential& sp) { return sp.delta_v != 0.0; });
    if (any) result.warnings.push_back("q = 0 with nonzero site potentials; correction set to zero");
    return result;
  }

  std::vector<Eigen::Vector3d> displacements;
  std::vector<double> measured;
  for (const auto& sp : site_potentials) {
    const Eigen::Vector3d d = minimum_image(cell, cell.sites()[sp.site].frac - defect_frac);
    if (d.norm() > radius) {
      displacements.push_back(d);
      measured.push_back(sp.delta_v);
    }
  }
  if (displacements.size() < 4) {
    throw ValidationError("only " + std::to_string(displacements.size()) +
                          " sites lie outside the sampling radius of " + std::to_string(radius) +
                          " A; at least 4 are required");
  }

  const std::vector<double> model = ewald_potentials(ctx, q, displacements);
  double sum = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) sum += measured[i] - model[i];

  result.sampled_sites = model.size();
  result.delta_phi = sum / static_cast<double>(model.size());
  result.point_charge_term = -lattice_energy(ctx, q);
  result.alignment_term = -q * result.delta_phi;
  result.total = result.point_charge_term + result.alignment_term;
  return result;
}

}  // namespace defect_forge
