#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace defect_forge {

struct Site {
  std::string species;
  Eigen::Vector3d frac;  // wrapped to [0,1)

  bool operator==(const Site&) const = default;
};

/// Periodic crystal cell. Rows of `lattice()` are the lattice vectors in
/// Angstrom. Construction validates and canonicalizes; instances are
/// immutable afterwards.
class CrystalCell {
 public:
  explicit CrystalCell(const Eigen::Matrix3d& lattice, std::vector<Site> sites = {},
                       const Eigen::Matrix3d& dielectric = Eigen::Matrix3d::Identity());

  const Eigen::Matrix3d& lattice() const noexcept { return lattice_; }
  const std::vector<Site>& sites() const noexcept { return sites_; }
  const Eigen::Matrix3d& dielectric() const noexcept { return dielectric_; }

  double volume() const noexcept { return lattice_.determinant(); }

  /// Same geometry, different dielectric tensor.
  CrystalCell with_dielectric(const Eigen::Matrix3d& dielectric) const;

  bool operator==(const CrystalCell& other) const;

 private:
  Eigen::Matrix3d lattice_;
  std::vector<Site> sites_;
  Eigen::Matrix3d dielectric_;
};

/// x - floor(x) per component; values that round up to 1.0 map to 0.0.
Eigen::Vector3d wrap_fractional(const Eigen::Vector3d& frac);

/// Reciprocal lattice (rows b_j with a_i . b_j = 2 pi delta_ij), Angstrom^-1.
Eigen::Matrix3d reciprocal(const CrystalCell& cell);
Eigen::Matrix3d reciprocal(const Eigen::Matrix3d& lattice);

Eigen::Vector3d frac_to_cart(const CrystalCell& cell, const Eigen::Vector3d& frac);
Eigen::Vector3d cart_to_frac(const CrystalCell& cell, const Eigen::Vector3d& cart);

/// Replicates the cell n1 x n2 x n3 times. Sites are emitted site-major, so
/// species blocks of the input stay contiguous.
CrystalCell supercell(const CrystalCell& cell, int n1, int n2, int n3);

/// Shortest Cartesian image of a fractional displacement (searches the
/// 27 neighbouring images of the wrapped difference).
Eigen::Vector3d minimum_image(const CrystalCell& cell, const Eigen::Vector3d& dfrac);

/// Radius of the largest sphere inscribed in the Wigner-Seitz cell.
double wigner_seitz_radius(const CrystalCell& cell);

}  // namespace defect_forge
