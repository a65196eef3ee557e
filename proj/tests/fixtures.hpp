#pragma once

// Synthetic inputs shared by the unit and acceptance suites.

#include <filesystem>
#include <vector>

#include "defect_forge/defect_thermo.hpp"
#include "defect_forge/dose_map.hpp"
#include "defect_forge/lattice.hpp"
#include "defect_forge/optics.hpp"
#include "defect_forge/spectro_fit.hpp"

namespace fixtures {

defect_forge::CrystalCell simple_cubic(double edge, double epsilon = 1.0);

/// Two-atom Si primitive cell (fcc, a = 5.43 Angstrom).
defect_forge::CrystalCell silicon_primitive();

/// C_i-like charge states -3..+3 over a 1.12 eV gap: q = 0 stable from the
/// VBM to 0.50 eV, then -1 (covering mid-gap), -2 from 0.80 and -3 from
/// 1.00 eV. Positive states are never stable.
struct DiagramFixture {
  defect_forge::HostReference host;
  std::vector<defect_forge::DefectRun> runs;
};
DiagramFixture ci_topology();

/// Rising to 28, falling to a minimum at 36, rising again through 44.5
/// to 48 mJ/cm^2.
std::vector<defect_forge::DosePoint> g_center_dose();

/// Lorentzian (or Gaussian) lines on a constant baseline.
struct Line {
  double center, fwhm, amplitude;
};
defect_forge::Spectrum synthetic_spectrum(double lo, double hi, double step, const std::vector<Line>& lines,
                                          double baseline, defect_forge::SpectrumMetadata md = {},
                                          defect_forge::LineShape shape = defect_forge::LineShape::lorentzian,
                                          unsigned noise_seed = 0);

/// A exp(-(t - t0)/tau) + B for t >= t0 and B before, Poisson counts.
defect_forge::DecayTrace synthetic_decay(double amplitude, double tau, double background, unsigned seed,
                                         double t0 = 2.0, double t_max = 60.0, double dt = 0.1);

/// Hydrogen 1s and 2p_z (in Bohr units) centred in a cubic box.
struct HydrogenGrids {
  defect_forge::GridFunction s1, p2z;
};
HydrogenGrids hydrogen_grids(double box_bohr, int n);

/// psi_i: s-like Gaussian on atom A at (-d, 0, 0); psi_f: p_y-like Gaussian
/// on atom B at (+d, 0, 0), both about the box centre. Both are even in z
/// and opposite in y parity.
struct MirrorGrids {
  defect_forge::GridFunction initial, final_state;
};
MirrorGrids mirror_grids(int n, double box = 12.0, double d = 1.0, double sigma = 1.0);

/// Writes the diagram fixture as a manifest plus energy files into `dir`
/// and returns the manifest path.
std::filesystem::path write_diagram_manifest(const std::filesystem::path& dir);

}  // namespace fixtures
