#include "defect_forge/optics.hpp"

#include <cmath>
#include <numbers>

#include "defect_forge/constants.hpp"
#include "defect_forge/errors.hpp"
#include "defect_forge/parallel.hpp"

namespace defect_forge {

void OpticsRecord::validate() const {
  if (!(zpl > 0.0)) throw ValidationError("ZPL of '" + defect + "' must be positive");
  if (!(tdm >= 0.0)) throw ValidationError("squared TDM of '" + defect + "' must be non-negative");
}

double zpl(double excited_total, double ground_total) {
  if (!std::isfinite(excited_total) || !std::isfinite(ground_total)) {
    throw ValidationError("non-finite total energy");
  }
  if (!(excited_total > ground_total)) {
    throw ValidationError("excited-state energy must exceed ground-state energy (states mislabeled?)");
  }
  return 1000.0 * (excited_total - ground_total);
}

double relative_shift(double zpl_mev, double reference_mev) {
  if (!(reference_mev > 0.0)) throw ValidationError("reference ZPL must be positive");
  return zpl_mev - reference_mev;
}

double relative_shift(const OpticsRecord& record, double reference_mev) {
  return relative_shift(record.zpl, reference_mev);
}

long display_mev(double mev) { return std::lround(mev); }

double wavelength_to_energy(double wavelength_nm) {
  if (!(wavelength_nm > 0.0) || !std::isfinite(wavelength_nm)) {
    throw ValidationError("wavelength must be positive");
  }
  return constants::kHcMeVnm / wavelength_nm;
}

double energy_to_wavelength(double energy_mev) {
  if (!(energy_mev > 0.0) || !std::isfinite(energy_mev)) throw ValidationError("energy must be positive");
  return constants::kHcMeVnm / energy_mev;
}

std::string to_string(RowStatus status) {
  switch (status) {
    case RowStatus::consistent: return "ok";
    case RowStatus::mismatch: return "mismatch";
    case RowStatus::reconstructed: return "reconstructed";
    case RowStatus::reference: return "reference";
    case RowStatus::computed: return "computed";
  }
  return "ok";
}

std::vector<RowAudit> audit_table(std::span<const OpticsTableRow> rows, double reference_mev) {
  if (!(reference_mev > 0.0)) throw ValidationError("reference ZPL must be positive");
  std::vector<RowAudit> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    RowAudit audit;
    audit.row = i;
    if (!row.zpl && !row.stated_shift) {
      throw ValidationError("table row " + std::to_string(i) + " ('" + row.defect + "') has neither ZPL nor shift");
    }
    if (!row.zpl) {
      audit.status = RowStatus::reconstructed;
      audit.zpl = reference_mev + *row.stated_shift;
      audit.recomputed_shift = *row.stated_shift;
    } else {
      audit.zpl = *row.zpl;
      audit.recomputed_shift = relative_shift(*row.zpl, reference_mev);
      if (!row.stated_shift) {
        audit.status = std::abs(audit.recomputed_shift) <= 0.5 ? RowStatus::reference : RowStatus::computed;
      } else {
        audit.discrepancy = std::abs(*row.stated_shift - audit.recomputed_shift);
        audit.status = audit.discrepancy > 0.5 ? RowStatus::mismatch : RowStatus::consistent;
      }
    }
    out.push_back(audit);
  }
  return out;
}

std::vector<RowAudit> table_consistency_check(std::span<const OpticsTableRow> rows, double reference_mev) {
  std::vector<RowAudit> flagged;
  for (const auto& a : audit_table(rows, reference_mev)) {
    if (a.status == RowStatus::mismatch) flagged.push_back(a);
  }
  return flagged;
}

std::vector<OpticsTableRow> bundled_table1() {
  using S = Spin;
  return {
      {"Ci", -1, S::down, 571.0, 0.169e-5, 2.0, ""},
      {"Ci", 0, S::none, 569.0, 0.337e-5, std::nullopt, "reference"},
      {"Ci", 1, S::down, 568.0, 0.482e-8, -1.0, ""},
      {"Ci B", 0, S::none, 655.0, 0.118, 86.0, ""},
      {"Ci+H Type 1", 0, S::down, std::nullopt, 0.29e-2, 463.0, "ZPL printed as 103^2"},
      {"Ci+H Type 1", 0, S::up, 528.0, 0.483, -41.0, ""},
      {"Ci+H Type 1", 1, S::none, 611.0, 0.632, 42.0, ""},
      {"Ci+H Type 2", 0, S::down, 847.0, 0.28e-2, 278.0, ""},
      {"Ci+H Type 2", 0, S::up, 559.0, 0.721, -10.0, ""},
      {"Ci+H Type 2", 1, S::none, 581.0, 0.633, 12.0, ""},
      {"Ci+H Type 3", 0, S::down, 1174.0, 2.52, 578.0, ""},
      {"Ci+H Type 3", 0, S::up, 592.0, 0.902e-4, 23.0, ""},
      {"Ci+H Type 3", 1, S::none, 591.0, 2.20, 22.0, ""},
  };
}

GridFunction::GridFunction(CrystalCell cell, std::array<int, 3> dims, std::vector<std::complex<double>> values)
    : cell_(std::move(cell)), dims_(dims), values_(std::move(values)) {
  for (int n : dims_) {
    if (n < 1) throw ValidationError("grid dimensions must be positive");
  }
  const auto expected = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  if (expected != values_.size()) {
    throw ValidationError("grid expects " + std::to_string(expected) + " values, got " +
                          std::to_string(values_.size()));
  }
  const double n2 = norm_squared();
  if (!std::isfinite(n2) || !(n2 > 0.0)) throw ValidationError("grid function is not normalizable");
}

double GridFunction::norm_squared() const {
  double s = 0.0;
  for (const auto& v : values_) s += std::norm(v);
  return s * voxel_volume();
}

namespace {

struct Partial {
  double weight = 0.0;
  Eigen::Vector3d first = Eigen::Vector3d::Zero();
  Eigen::Vector3cd dipole = Eigen::Vector3cd::Zero();
  std::complex<double> overlap = 0.0;
  double sin_sum[3] = {0, 0, 0};
  double cos_sum[3] = {0, 0, 0};
};

double wrap_half(double x) { return x - std::round(x); }

}  // namespace

TdmResult transition_dipole(const GridFunction& initial, const GridFunction& final_state) {
  if (initial.dims() != final_state.dims()) throw ValidationError("grid dimensions of the two states differ");
  if (!(initial.cell().lattice() - final_state.cell().lattice()).isZero(1e-9)) {
    throw ValidationError("the two states live on different cells");
  }
  const auto [n1, n2, n3] = initial.dims();
  const CrystalCell& cell = initial.cell();
  const Eigen::Matrix3d lt = cell.lattice().transpose();
  const double dv = initial.voxel_volume();
  const double inv_ni = 1.0 / initial.norm_squared();
  const double inv_nf = 1.0 / final_state.norm_squared();
  const auto& psi_i = initial.values();
  const auto& psi_f = final_state.values();
  const double two_pi = 2.0 * std::numbers::pi;

  auto density = [&](std::size_t idx) {
    return 0.5 * (std::norm(psi_i[idx]) * inv_ni + std::norm(psi_f[idx]) * inv_nf) * dv;
  };
  auto frac_of = [&](int i, int j, int k) {
    return Eigen::Vector3d(static_cast<double>(i) / n1, static_cast<double>(j) / n2, static_cast<double>(k) / n3);
  };

  // Circular mean of the pair density along each fractional axis.
  std::vector<Partial> slabs(static_cast<std::size_t>(n1));
  parallel_for(slabs.size(), [&](std::size_t si) {
    Partial& p = slabs[si];
    const int i = static_cast<int>(si);
    for (int j = 0; j < n2; ++j)
      for (int k = 0; k < n3; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(i) * n2 + j) * n3 + k;
        const double rho = density(idx);
        const Eigen::Vector3d f = frac_of(i, j, k);
        for (int a = 0; a < 3; ++a) {
          p.sin_sum[a] += rho * std::sin(two_pi * f[a]);
          p.cos_sum[a] += rho * std::cos(two_pi * f[a]);
        }
      }
  });
  Eigen::Vector3d center_frac;
  for (int a = 0; a < 3; ++a) {
    double s = 0.0, c = 0.0;
    for (const auto& p : slabs) {
      s += p.sin_sum[a];
      c += p.cos_sum[a];
    }
    center_frac[a] = std::atan2(s, c) / two_pi;
  }

  // Centroid refinement and matrix elements in the wrapped frame.
  slabs.assign(static_cast<std::size_t>(n1), Partial{});
  parallel_for(slabs.size(), [&](std::size_t si) {
    Partial& p = slabs[si];
    const int i = static_cast<int>(si);
    for (int j = 0; j < n2; ++j)
      for (int k = 0; k < n3; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(i) * n2 + j) * n3 + k;
        Eigen::Vector3d df = frac_of(i, j, k) - center_frac;
        for (int a = 0; a < 3; ++a) df[a] = wrap_half(df[a]);
        const Eigen::Vector3d r = lt * df;
        const double rho = density(idx);
        p.weight += rho;
        p.first += rho * r;
        const std::complex<double> m = std::conj(psi_f[idx]) * psi_i[idx];
        p.overlap += m;
        p.dipole += m * r.cast<std::complex<double>>();
      }
  });
  Partial total;
  for (const auto& p : slabs) {
    total.weight += p.weight;
    total.first += p.first;
    total.overlap += p.overlap;
    total.dipole += p.dipole;
  }

  const double scale = std::sqrt(inv_ni * inv_nf) * dv;
  const Eigen::Vector3d offset = total.first / total.weight;
  const std::complex<double> overlap = total.overlap * scale;

  TdmResult result;
  result.dipole = total.dipole * scale - overlap * offset.cast<std::complex<double>>();
  for (int a = 0; a < 3; ++a) {
    result.components[a] = std::norm(result.dipole[a]) * constants::kDebyePerEAngstrom * constants::kDebyePerEAngstrom;
  }
  result.total = result.components.sum();
  result.overlap = std::abs(overlap);
  result.orthogonal = result.overlap <= 1e-3;
  result.centroid = lt * center_frac + offset;
  return result;
}

}  // namespace defect_forge
