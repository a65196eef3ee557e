#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "defect_forge/defect_thermo.hpp"
#include "defect_forge/dose_map.hpp"
#include "defect_forge/lattice.hpp"
#include "defect_forge/optics.hpp"
#include "defect_forge/spectro_fit.hpp"

namespace defect_forge::io {

namespace fs = std::filesystem;

/// Shortest decimal form that parses back to the same double.
std::string format_number(double value);

/// Reads a whole file; throws ValidationError naming the path on failure.
std::string read_file(const fs::path& path);
/// Writes `content` verbatim, creating parent directories.
void write_file(const fs::path& path, std::string_view content);

// Structure files: title line, three lattice rows (Angstrom), species
// labels, per-species counts, then one fractional coordinate row per site.
CrystalCell parse_structure(std::string_view text, const std::string& source = "<structure>");
std::string write_structure(const CrystalCell& cell, const std::string& title = "defect_forge structure");

// "# key=value" metadata lines, header "wavelength_nm,counts", data rows.
Spectrum parse_spectrum_csv(std::string_view text, const std::string& source = "<spectrum>");
std::string write_spectrum_csv(const Spectrum& spectrum);

// Header "time_ns,counts".
DecayTrace parse_decay_csv(std::string_view text, const std::string& source = "<decay>");
std::string write_decay_csv(const DecayTrace& trace);

// Header "fluence_mJcm2,intensity".
std::vector<DosePoint> parse_dose_csv(std::string_view text, const std::string& source = "<dose>");
std::string write_dose_csv(std::span<const DosePoint> points);

// Header "power_mW,intensity".
struct SaturationData {
  std::vector<double> powers;
  std::vector<double> intensities;
};
SaturationData parse_saturation_csv(std::string_view text, const std::string& source = "<saturation>");

// Header "x_um,y_um,counts".
std::vector<RasterPoint> parse_raster_csv(std::string_view text, const std::string& source = "<raster>");
std::string write_raster_csv(const RasterMap& map);
/// Plain (P2) greyscale image, top row = largest y.
std::string write_raster_pgm(const RasterMap& map);

// "GRID n1 n2 n3 complex|real" followed by values, k fastest; complex
// values are "re im" pairs.
GridFunction parse_grid(std::string_view text, const CrystalCell& cell, const std::string& source = "<grid>");
std::string write_grid(const GridFunction& grid, bool complex_values = true);

// Rows "spin index energy_eV occupation".
std::map<Spin, std::vector<EigenLevel>> parse_eigenvalues(std::string_view text,
                                                          const std::string& source = "<eigenvalues>");
// Rows "site_index delta_V".
std::vector<SitePotential> parse_site_potentials(std::string_view text,
                                                 const std::string& source = "<site potentials>");
// A single number: the total energy in eV.
double parse_energy(std::string_view text, const std::string& source = "<energy>");

// Diagram CSV: fermi_eV,q=-3,...,q=+3,envelope_eV,stable_q. Absent
// charge states are empty cells.
std::string write_diagram_csv(const DiagramTable& table);
DiagramTable parse_diagram_csv(std::string_view text, const std::string& source = "<diagram>");

// Optics table CSV: defect,ZPL_meV,spin,TDM_D2,shift_meV,consistency_flag.
// On input the ZPL and shift cells may be empty; extra columns are ignored.
std::vector<OpticsTableRow> parse_optics_table_csv(std::string_view text, const std::string& source = "<table>");
std::string write_optics_csv(std::span<const OpticsTableRow> rows, std::span<const RowAudit> audits);

struct HostBlock {
  HostReference reference;
  Eigen::Matrix3d dielectric = Eigen::Matrix3d::Identity();
  std::optional<fs::path> cell_file;
  std::shared_ptr<const CrystalCell> cell;  // carries `dielectric`
  std::optional<double> intrinsic_fermi;
};

struct DefectEntry {
  DefectRun run;
  fs::path energy_file;
  std::optional<fs::path> eigenvalue_file;
  std::optional<fs::path> site_potential_file;
  std::optional<fs::path> wavefunction_file;
  std::optional<Eigen::Vector3d> defect_position;  // fractional
  std::optional<double> sampling_radius;           // Angstrom
  std::optional<double> correction;                // eV, overrides the computed one
  std::size_t line = 0;
};

struct SpectrumEntry {
  std::string kind;  // pl | trpl | dose | raster
  fs::path file;
  std::map<std::string, std::string> metadata;
  std::size_t line = 0;
};

struct OpticsEntry {
  std::string label;
  int charge = 0;
  Spin spin = Spin::none;
  std::optional<double> excited_energy;  // eV
  std::optional<double> ground_energy;   // eV
  std::optional<double> zpl;             // meV
  std::optional<double> tdm;             // Debye^2
  std::optional<fs::path> initial_wavefunction;
  std::optional<fs::path> final_wavefunction;
  std::optional<double> stated_shift;  // meV
  std::optional<int> ks_from;
  std::optional<int> ks_to;
  std::size_t line = 0;
};

struct RunManifest {
  std::string project;
  fs::path source;
  HostBlock host;
  std::vector<DefectEntry> defects;
  std::vector<SpectrumEntry> spectra;
  std::vector<OpticsEntry> optics;
  std::optional<double> reference_zpl;  // meV
  std::vector<std::string> warnings;
};

/// Parses a manifest. Relative paths resolve against `base_dir`; every
/// referenced file must exist, and energy, eigenvalue, site-potential and
/// structure files are parsed eagerly. Unknown keys are collected as
/// warnings.
RunManifest parse_manifest(std::string_view text, const fs::path& base_dir,
                           const std::string& source = "<manifest>");
RunManifest load_manifest(const fs::path& path);

}  // namespace defect_forge::io
