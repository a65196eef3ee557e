#pragma once

#include <array>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "defect_forge/defect_thermo.hpp"
#include "defect_forge/lattice.hpp"

namespace defect_forge {

struct OpticsRecord {
  std::string defect;
  int charge = 0;
  Spin spin = Spin::none;
  double zpl = 0.0;  // meV
  double tdm = 0.0;  // squared TDM, Debye^2
  double shift = 0.0;  // meV relative to the reference ZPL

  void validate() const;
};

/// Constrained-occupation ZPL in meV from total energies in eV.
double zpl(double excited_total, double ground_total);

double relative_shift(double zpl_mev, double reference_mev);
double relative_shift(const OpticsRecord& record, double reference_mev);

/// Integer-meV display rounding (half away from zero).
long display_mev(double mev);

/// E = hc / lambda; meV <-> nm.
double wavelength_to_energy(double wavelength_nm);
double energy_to_wavelength(double energy_mev);

/// One row of a ZPL/TDM table. Any numeric column may be missing,
/// e.g. the reference row has no shift and a corrupted ZPL is absent.
struct OpticsTableRow {
  std::string defect;
  int charge = 0;
  Spin spin = Spin::none;
  std::optional<double> zpl;
  std::optional<double> tdm;
  std::optional<double> stated_shift;
  std::string note;
};

enum class RowStatus { consistent, mismatch, reconstructed, reference, computed };
std::string to_string(RowStatus status);

struct RowAudit {
  std::size_t row = 0;
  RowStatus status = RowStatus::consistent;
  double zpl = 0.0;               // stated, or reference + stated shift when reconstructed
  double recomputed_shift = 0.0;  // zpl - reference
  double discrepancy = 0.0;       // |stated - recomputed|, meV
};

/// Per-row audit. A row whose shift disagrees with ZPL - reference by more
/// than 0.5 meV is a mismatch; a row without a ZPL is reconstructed from its
/// shift. A row without a shift is the reference when its ZPL equals the
/// reference value, otherwise it is `computed` (nothing to check).
std::vector<RowAudit> audit_table(std::span<const OpticsTableRow> rows, double reference_mev);

/// Only the mismatching rows of audit_table.
std::vector<RowAudit> table_consistency_check(std::span<const OpticsTableRow> rows, double reference_mev);

/// The bundled C_i ZPL/TDM table, verbatim apart from the garbled "103^2" ZPL
/// cell, which is stored as missing.
std::vector<OpticsTableRow> bundled_table1();
inline constexpr double kTable1Reference = 569.0;

/// Scalar field sampled on a uniform periodic grid over a cell. Index
/// (i, j, k) sits at fractional (i/n1, j/n2, k/n3), row-major with k fastest.
class GridFunction {
 public:
  GridFunction(CrystalCell cell, std::array<int, 3> dims, std::vector<std::complex<double>> values);

  const CrystalCell& cell() const noexcept { return cell_; }
  const std::array<int, 3>& dims() const noexcept { return dims_; }
  const std::vector<std::complex<double>>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double voxel_volume() const noexcept { return cell_.volume() / static_cast<double>(values_.size()); }
  /// sum |psi|^2 dV
  double norm_squared() const;

  /// Samples f(r) at every grid point, r Cartesian in Angstrom.
  template <typename F>
  static GridFunction sample(const CrystalCell& cell, std::array<int, 3> dims, F&& f) {
    std::vector<std::complex<double>> values;
    values.reserve(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    for (int i = 0; i < dims[0]; ++i)
      for (int j = 0; j < dims[1]; ++j)
        for (int k = 0; k < dims[2]; ++k) {
          const Eigen::Vector3d frac(static_cast<double>(i) / dims[0], static_cast<double>(j) / dims[1],
                                     static_cast<double>(k) / dims[2]);
          values.emplace_back(f(frac_to_cart(cell, frac)));
        }
    return GridFunction(cell, dims, std::move(values));
  }

 private:
  CrystalCell cell_;
  std::array<int, 3> dims_;
  std::vector<std::complex<double>> values_;
};

struct TdmResult {
  Eigen::Vector3d components = Eigen::Vector3d::Zero();  // |<f|r_a|i>|^2, Debye^2
  double total = 0.0;                                    // Debye^2
  Eigen::Vector3cd dipole = Eigen::Vector3cd::Zero();    // <f|r|i>, e*Angstrom
  double overlap = 0.0;                                  // |<f|i>|
  bool orthogonal = true;                                // overlap <= 1e-3
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();    // Cartesian, Angstrom
};

/// Squared transition dipole |<f| r - c |i>|^2 in the length gauge. Both
/// states are normalized on the grid; c is the centroid of the mean density
/// of the pair, and positions are taken in the wrapped fractional frame
/// around c, which is the minimum image for localized states.
TdmResult transition_dipole(const GridFunction& initial, const GridFunction& final_state);

}  // namespace defect_forge
