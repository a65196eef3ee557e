#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defect_forge/electrostatics.hpp"
#include "defect_forge/lattice.hpp"

namespace defect_forge {

enum class Spin { up, down, none };

std::string to_string(Spin spin);
Spin spin_from_string(const std::string& text);

struct EigenLevel {
  int index = 0;
  double energy = 0.0;      // eV
  double occupation = 0.0;  // electrons in this spin channel
};

inline constexpr int kMinCharge = -3;
inline constexpr int kMaxCharge = 3;

/// One first-principles calculation of a defect in a given charge state.
struct DefectRun {
  std::string label;
  int charge = 0;
  double total_energy = 0.0;                 // eV
  std::map<std::string, int> composition;    // atoms added (+) / removed (-) vs bulk
  std::map<Spin, std::vector<EigenLevel>> eigenvalues;
  std::vector<SitePotential> site_potentials;
  std::shared_ptr<const CrystalCell> cell;
};

/// Checks charge range and non-empty composition.
void validate(const DefectRun& run);

struct HostReference {
  double bulk_energy = 0.0;  // eV
  double vbm = 0.0;          // eV, absolute
  double gap = 0.0;          // eV
  std::map<std::string, double> chemical_potentials;  // eV/atom
};

void validate(const HostReference& host);

/// E_tot - E_bulk - sum n_i mu_i + q (E_VBM + E_F) + E_corr, with E_F
/// measured from the VBM. E_F within 0.5 eV outside the gap is accepted
/// (a note is appended to `warnings` if given); beyond that it is an error.
double formation_energy(const DefectRun& run, const HostReference& host, double fermi,
                        double correction = 0.0, std::vector<std::string>* warnings = nullptr);
double formation_energy(const DefectRun& run, const HostReference& host, double fermi,
                        const CorrectionResult& correction, std::vector<std::string>* warnings = nullptr);

/// Fermi level (eV above VBM) where the two charge states are degenerate.
double transition_level(const DefectRun& a, const DefectRun& b, const HostReference& host,
                        double correction_a = 0.0, double correction_b = 0.0);

/// Line E_f(q; E_F) = intercept + charge * E_F.
struct FormationLine {
  int charge = 0;
  double intercept = 0.0;
  double value(double fermi) const { return intercept + charge * fermi; }
};

double transition_level(const FormationLine& a, const FormationLine& b);

struct StableInterval {
  double lower = 0.0;
  double upper = 0.0;
  int charge = 0;
};

struct TransitionLevel {
  int charge_below = 0;  // stable just below the level
  int charge_above = 0;  // stable just above
  double fermi = 0.0;
};

/// Formation-energy lines of one defect over [0, gap] with their lower
/// envelope. Lines are sorted by decreasing charge.
struct FormationDiagram {
  std::string label;
  double gap = 0.0;
  std::vector<FormationLine> lines;
  std::vector<StableInterval> envelope;
  std::vector<TransitionLevel> transitions;
  double intrinsic_fermi = 0.0;
  int intrinsic_charge = 0;
  std::vector<std::string> warnings;

  const FormationLine* line(int charge) const;
  double envelope_value(double fermi) const;
  /// Stable charge at `fermi`; at a breakpoint the lower-|q| state wins.
  int stable_charge(double fermi) const;
};

/// Lower envelope of a set of lines over [0, gap].
FormationDiagram envelope_of(std::vector<FormationLine> lines, double gap);

/// One run per charge state (duplicates: lowest total energy kept, with a
/// warning). `corrections` is either empty or parallel to `runs`.
FormationDiagram build_diagram(std::span<const DefectRun> runs, const HostReference& host,
                               std::span<const double> corrections = {},
                               std::optional<double> intrinsic_fermi = std::nullopt);

/// Kohn-Sham eigenvalue difference target - source in one spin channel (eV).
double delta_ks(const DefectRun& run, int from_level, int to_level, Spin spin);

/// Plot-ready table: fermi_eV, q=-3..q=+3, envelope_eV, stable_q.
struct DiagramTable {
  struct Row {
    double fermi = 0.0;
    std::map<int, double> lines;
    double envelope = 0.0;
    int stable_charge = 0;
    bool operator==(const Row&) const = default;
  };
  std::vector<Row> rows;
  bool operator==(const DiagramTable&) const = default;
};

DiagramTable tabulate(const FormationDiagram& diagram, std::size_t points);

}  // namespace defect_forge
