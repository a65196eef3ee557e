#include "defect_forge/lattice.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "defect_forge/errors.hpp"

namespace defect_forge {

namespace {

void validate_lattice(const Eigen::Matrix3d& lattice) {
  if (!lattice.allFinite()) throw ValidationError("lattice contains non-finite entries");
  const double det = lattice.determinant();
  const double scale = lattice.rowwise().norm().prod();
  if (!(det > 1e-10 * scale)) {
    throw ValidationError("lattice must be right-handed and non-degenerate (det = " +
                          std::to_string(det) + ")");
  }
}

void validate_dielectric(const Eigen::Matrix3d& eps) {
  if (!eps.allFinite()) throw ValidationError("dielectric tensor contains non-finite entries");
  if ((eps - eps.transpose()).cwiseAbs().maxCoeff() > 1e-10 * eps.cwiseAbs().maxCoeff()) {
    throw ValidationError("dielectric tensor must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(eps, Eigen::EigenvaluesOnly);
  if (!(solver.eigenvalues().minCoeff() > 0.0)) {
    throw ValidationError("dielectric tensor must be positive-definite");
  }
}

}  // namespace

CrystalCell::CrystalCell(const Eigen::Matrix3d& lattice, std::vector<Site> sites,
                         const Eigen::Matrix3d& dielectric)
    : lattice_(lattice), sites_(std::move(sites)), dielectric_(dielectric) {
  validate_lattice(lattice_);
  validate_dielectric(dielectric_);
  // Store the exactly symmetric part.
  dielectric_ = 0.5 * (dielectric_ + dielectric_.transpose()).eval();
  for (auto& site : sites_) {
    if (!site.frac.allFinite()) throw ValidationError("site '" + site.species + "' has non-finite coordinates");
    site.frac = wrap_fractional(site.frac);
  }
}

CrystalCell CrystalCell::with_dielectric(const Eigen::Matrix3d& dielectric) const {
  return CrystalCell(lattice_, sites_, dielectric);
}

bool CrystalCell::operator==(const CrystalCell& other) const {
  return lattice_ == other.lattice_ && sites_ == other.sites_ && dielectric_ == other.dielectric_;
}

Eigen::Vector3d wrap_fractional(const Eigen::Vector3d& frac) {
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) {
    double w = frac[i] - std::floor(frac[i]);
    if (w >= 1.0) w = 0.0;
    out[i] = w;
  }
  return out;
}

Eigen::Matrix3d reciprocal(const Eigen::Matrix3d& lattice) {
  return 2.0 * std::numbers::pi * lattice.inverse().transpose();
}

Eigen::Matrix3d reciprocal(const CrystalCell& cell) { return reciprocal(cell.lattice()); }

Eigen::Vector3d frac_to_cart(const CrystalCell& cell, const Eigen::Vector3d& frac) {
  return cell.lattice().transpose() * frac;
}

Eigen::Vector3d cart_to_frac(const CrystalCell& cell, const Eigen::Vector3d& cart) {
  return cell.lattice().transpose().partialPivLu().solve(cart);
}

CrystalCell supercell(const CrystalCell& cell, int n1, int n2, int n3) {
  if (n1 < 1 || n2 < 1 || n3 < 1) {
    throw ValidationError("supercell replication counts must be >= 1");
  }
  const Eigen::Vector3d counts(n1, n2, n3);
  Eigen::Matrix3d lattice = cell.lattice();
  for (int i = 0; i < 3; ++i) lattice.row(i) *= counts[i];

  std::vector<Site> sites;
  sites.reserve(cell.sites().size() * static_cast<std::size_t>(n1 * n2 * n3));
  for (const auto& site : cell.sites()) {
    for (int i = 0; i < n1; ++i) {
      for (int j = 0; j < n2; ++j) {
        for (int k = 0; k < n3; ++k) {
          const Eigen::Vector3d shifted = (site.frac + Eigen::Vector3d(i, j, k)).cwiseQuotient(counts);
          sites.push_back({site.species, shifted});
        }
      }
    }
  }
  return CrystalCell(lattice, std::move(sites), cell.dielectric());
}

Eigen::Vector3d minimum_image(const CrystalCell& cell, const Eigen::Vector3d& dfrac) {
  Eigen::Vector3d base = dfrac - dfrac.array().round().matrix();
  Eigen::Vector3d best = frac_to_cart(cell, base);
  double best_norm = best.squaredNorm();
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      for (int k = -1; k <= 1; ++k) {
        const Eigen::Vector3d candidate = frac_to_cart(cell, base + Eigen::Vector3d(i, j, k));
        const double n = candidate.squaredNorm();
        if (n < best_norm) {
          best_norm = n;
          best = candidate;
        }
      }
    }
  }
  return best;
}

double wigner_seitz_radius(const CrystalCell& cell) {
  double shortest = std::numeric_limits<double>::infinity();
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      for (int k = -2; k <= 2; ++k) {
        if (i == 0 && j == 0 && k == 0) continue;
        shortest = std::min(shortest, frac_to_cart(cell, Eigen::Vector3d(i, j, k)).norm());
      }
    }
  }
  return 0.5 * shortest;
}

}  // namespace defect_forge
