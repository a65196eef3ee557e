#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "defect_forge/lattice.hpp"

namespace defect_forge {

struct EwaldOptions {
  /// Gaussian splitting parameter (1/Angstrom). Default (pi N_sites / V^2)^(1/6).
  std::optional<double> eta;
  /// Cartesian cutoffs. When omitted they are grown until the tail bound
  /// drops below `auto_tolerance`; when supplied, a tail bound above
  /// `max_tail` is rejected.
  std::optional<double> real_cutoff;
  std::optional<double> reciprocal_cutoff;
  double auto_tolerance = 1e-10;  // eV per e^2
  double max_tail = 1e-8;         // eV per e^2
};

/// Precomputed Ewald sums for a unit point charge in a periodic cell with
/// a neutralizing background, screened by the cell's dielectric tensor.
///
/// With d(r) = sqrt(r^T eps^-1 r), the unit-charge potential is
///   phi(r) = k [ sum_R erfc(eta d(r-R)) / (sqrt(det eps) d(r-R))
///              + (4 pi / V) sum_{G!=0} exp(-G^T eps G / 4 eta^2) cos(G.r) / (G^T eps G)
///              - pi / (V eta^2) ]
/// which averages to zero over the cell.
class EwaldContext {
 public:
  explicit EwaldContext(CrystalCell cell, const EwaldOptions& options = {});

  const CrystalCell& cell() const noexcept { return cell_; }
  double eta() const noexcept { return eta_; }
  double real_cutoff() const noexcept { return real_cutoff_; }
  double reciprocal_cutoff() const noexcept { return reciprocal_cutoff_; }
  /// Estimated truncation error (eV per e^2) of both series combined.
  double tail_bound() const noexcept { return tail_bound_; }
  std::size_t real_terms() const noexcept { return real_vectors_.size(); }
  std::size_t reciprocal_terms() const noexcept { return recip_vectors_.size(); }

  /// Unit-charge potential (V) at Cartesian displacement r from the charge.
  double unit_potential(const Eigen::Vector3d& r) const;
  /// Unit-charge self energy sum (V), i.e. lim_{r->0} [phi(r) - bare(r)].
  double unit_self_potential() const noexcept { return self_potential_; }

 private:
  double real_sum(const Eigen::Vector3d& r, bool skip_origin) const;
  double reciprocal_sum(const Eigen::Vector3d& r) const;

  CrystalCell cell_;
  double eta_ = 0.0;
  double real_cutoff_ = 0.0;
  double reciprocal_cutoff_ = 0.0;
  double tail_bound_ = 0.0;
  Eigen::Matrix3d eps_inv_;
  double sqrt_det_eps_ = 1.0;
  double background_ = 0.0;
  double self_potential_ = 0.0;
  std::vector<Eigen::Vector3d> real_vectors_;
  // Half-space of G vectors; weights already include the factor 2 for -G.
  std::vector<Eigen::Vector3d> recip_vectors_;
  std::vector<double> recip_weights_;
};

/// Periodic potential (V) of point charge q at Cartesian displacement r.
/// Throws ValidationError within 1e-6 Angstrom of any image of the charge.
double ewald_potential(const EwaldContext& ctx, double q, const Eigen::Vector3d& r);

/// Batch form of ewald_potential; evaluated in parallel, order preserved.
std::vector<double> ewald_potentials(const EwaldContext& ctx, double q,
                                     std::span<const Eigen::Vector3d> displacements);

/// Electrostatic energy (eV) per cell of the periodic array of charges q in
/// a neutralizing background. Negative for physical cells; scales as q^2.
double lattice_energy(const EwaldContext& ctx, double q);

/// Dimensionless shape constant alpha = -2 eps L E / (k q^2) for a cubic
/// cell of edge L with scalar dielectric eps.
double madelung_constant(const EwaldContext& ctx);

struct SitePotential {
  std::size_t site = 0;  // index into the cell's site list
  double delta_v = 0.0;  // defect minus bulk potential at the site (V)
};

struct CorrectionResult {
  double point_charge_term = 0.0;  // -lattice_energy (eV)
  double alignment_term = 0.0;     // -q * delta_phi (eV)
  double total = 0.0;              // point_charge_term + alignment_term
  double delta_phi = 0.0;          // mean(delta_v - model) over sampled sites (V)
  std::size_t sampled_sites = 0;
  double sampling_radius = 0.0;    // Angstrom
  std::vector<std::string> warnings;
};

/// Point-charge plus potential-alignment correction for a charged defect
/// in a periodic supercell. Add `total` to the raw formation energy.
///
/// Sites farther than `sampling_radius` (minimum image) from the defect
/// are averaged; the default radius is the Wigner-Seitz inscribed radius.
/// Fewer than four sampled sites is an error.
CorrectionResult finite_size_correction(const EwaldContext& ctx, int q,
                                        std::span<const SitePotential> site_potentials,
                                        const Eigen::Vector3d& defect_frac,
                                        std::optional<double> sampling_radius = std::nullopt);

}  // namespace defect_forge
