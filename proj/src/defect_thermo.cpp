#include "defect_forge/defect_thermo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "defect_forge/errors.hpp"

namespace defect_forge {

std::string to_string(Spin spin) {
  switch (spin) {
    case Spin::up: return "up";
    case Spin::down: return "down";
    case Spin::none: return "none";
  }
  return "none";
}

Spin spin_from_string(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "up") return Spin::up;
  if (t == "down" || t == "dn") return Spin::down;
  if (t == "none" || t == "n/a" || t == "na" || t.empty()) return Spin::none;
  throw ValidationError("unknown spin channel '" + text + "'");
}

void validate(const DefectRun& run) {
  if (run.charge < kMinCharge || run.charge > kMaxCharge) {
    throw ValidationError("charge " + std::to_string(run.charge) + " of '" + run.label +
                          "' outside the supported range [-3, +3]");
  }
  if (run.composition.empty()) {
    throw ValidationError("defect run '" + run.label + "' has an empty composition delta");
  }
  if (!std::isfinite(run.total_energy)) throw ValidationError("non-finite total energy for '" + run.label + "'");
}

void validate(const HostReference& host) {
  if (!(host.gap > 0.0)) throw ValidationError("host band gap must be positive");
  if (!std::isfinite(host.bulk_energy) || !std::isfinite(host.vbm)) {
    throw ValidationError("host reference energies must be finite");
  }
}

double formation_energy(const DefectRun& run, const HostReference& host, double fermi, double correction,
                        std::vector<std::string>* warnings) {
  if (fermi < -0.5 || fermi > host.gap + 0.5 || !std::isfinite(fermi)) {
    throw ValidationError("Fermi level " + std::to_string(fermi) + " eV outside [-0.5, gap + 0.5]");
  }
  if (warnings && (fermi < 0.0 || fermi > host.gap)) {
    warnings->push_back("Fermi level " + std::to_string(fermi) + " eV lies outside the band gap");
  }
  double chem = 0.0;
  for (const auto& [species, n] : run.composition) {
    const auto it = host.chemical_potentials.find(species);
    if (it == host.chemical_potentials.end()) {
      throw ValidationError("missing chemical potential for species '" + species + "'");
    }
    chem += n * it->second;
  }
  return run.total_energy - host.bulk_energy - chem + run.charge * (host.vbm + fermi) + correction;
}

double formation_energy(const DefectRun& run, const HostReference& host, double fermi,
                        const CorrectionResult& correction, std::vector<std::string>* warnings) {
  return formation_energy(run, host, fermi, correction.total, warnings);
}

double transition_level(const FormationLine& a, const FormationLine& b) {
  if (a.charge == b.charge) throw ValidationError("transition level needs two different charges");
  return (a.intercept - b.intercept) / static_cast<double>(b.charge - a.charge);
}

double transition_level(const DefectRun& a, const DefectRun& b, const HostReference& host, double correction_a,
                        double correction_b) {
  if (a.charge == b.charge) throw ValidationError("transition level needs two different charges");
  const FormationLine la{a.charge, formation_energy(a, host, 0.0, correction_a)};
  const FormationLine lb{b.charge, formation_energy(b, host, 0.0, correction_b)};
  // Order the operands so the result is bitwise symmetric under swap.
  return a.charge > b.charge ? transition_level(la, lb) : transition_level(lb, la);
}

const FormationLine* FormationDiagram::line(int charge) const {
  for (const auto& l : lines) {
    if (l.charge == charge) return &l;
  }
  return nullptr;
}

double FormationDiagram::envelope_value(double fermi) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& l : lines) best = std::min(best, l.value(fermi));
  return best;
}

int FormationDiagram::stable_charge(double fermi) const {
  if (envelope.empty()) throw ValidationError("empty formation diagram");
  for (std::size_t i = 0; i < envelope.size(); ++i) {
    const auto& iv = envelope[i];
    if (fermi < iv.upper || i + 1 == envelope.size()) {
      if (i > 0 && fermi == iv.lower) {
        const int left = envelope[i - 1].charge;
        return std::abs(left) <= std::abs(iv.charge) ? left : iv.charge;
      }
      return iv.charge;
    }
  }
  return envelope.back().charge;
}

FormationDiagram envelope_of(std::vector<FormationLine> lines, double gap) {
  if (lines.empty()) throw ValidationError("formation diagram needs at least one charge state");
  if (!(gap > 0.0)) throw ValidationError("band gap must be positive");
  std::sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.charge > b.charge; });

  FormationDiagram d;
  d.gap = gap;
  d.lines = lines;

  // Lowest at E_F = 0; among ties the smallest slope continues to the right.
  std::size_t cur = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].intercept < lines[cur].intercept ||
        (lines[i].intercept == lines[cur].intercept && lines[i].charge < lines[cur].charge)) {
      cur = i;
    }
  }

  double x = 0.0;
  for (;;) {
    double next_x = std::numeric_limits<double>::infinity();
    std::size_t next = cur;
    for (std::size_t j = 0; j < lines.size(); ++j) {
      if (lines[j].charge >= lines[cur].charge) continue;
      const double xj = transition_level(lines[cur], lines[j]);
      if (xj <= x) continue;
      if (xj < next_x || (xj == next_x && lines[j].charge < lines[next].charge)) {
        next_x = xj;
        next = j;
      }
    }
    if (next == cur || next_x >= gap) {
      d.envelope.push_back({x, gap, lines[cur].charge});
      break;
    }
    d.envelope.push_back({x, next_x, lines[cur].charge});
    d.transitions.push_back({lines[cur].charge, lines[next].charge, next_x});
    x = next_x;
    cur = next;
  }

  d.intrinsic_fermi = 0.5 * gap;
  d.intrinsic_charge = d.stable_charge(d.intrinsic_fermi);
  return d;
}

FormationDiagram build_diagram(std::span<const DefectRun> runs, const HostReference& host,
                               std::span<const double> corrections, std::optional<double> intrinsic_fermi) {
  if (runs.empty()) throw ValidationError("build_diagram needs at least one run");
  if (!corrections.empty() && corrections.size() != runs.size()) {
    throw ValidationError("corrections must be empty or match the number of runs");
  }
  validate(host);

  std::vector<std::string> warnings;
  std::map<int, std::size_t> by_charge;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    validate(runs[i]);
    if (runs[i].label != runs.front().label) {
      throw ValidationError("build_diagram received runs of different defects ('" + runs.front().label +
                            "', '" + runs[i].label + "')");
    }
    auto [it, inserted] = by_charge.emplace(runs[i].charge, i);
    if (!inserted) {
      warnings.push_back("duplicate runs for charge " + std::to_string(runs[i].charge) +
                         "; keeping the lowest total energy");
      if (runs[i].total_energy < runs[it->second].total_energy) it->second = i;
    }
  }

  std::vector<FormationLine> lines;
  for (const auto& [q, i] : by_charge) {
    const double corr = corrections.empty() ? 0.0 : corrections[i];
    lines.push_back({q, formation_energy(runs[i], host, 0.0, corr)});
  }

  FormationDiagram d = envelope_of(std::move(lines), host.gap);
  d.label = runs.front().label;
  d.warnings = std::move(warnings);
  if (intrinsic_fermi) {
    if (*intrinsic_fermi < 0.0 || *intrinsic_fermi > host.gap) {
      throw ValidationError("intrinsic Fermi level must lie in the gap");
    }
    d.intrinsic_fermi = *intrinsic_fermi;
    d.intrinsic_charge = d.stable_charge(d.intrinsic_fermi);
  }
  return d;
}

double delta_ks(const DefectRun& run, int from_level, int to_level, Spin spin) {
  if (from_level == to_level) throw ValidationError("delta_ks needs two distinct levels");
  const auto channel = run.eigenvalues.find(spin);
  if (channel == run.eigenvalues.end() || channel->second.empty()) {
    throw ValidationError("no eigenvalues for spin channel '" + to_string(spin) + "' in '" + run.label + "'");
  }
  auto find = [&](int index) {
    for (const auto& level : channel->second) {
      if (level.index == index) return level.energy;
    }
    throw ValidationError("level " + std::to_string(index) + " not present in spin channel '" +
                          to_string(spin) + "'");
  };
  return find(to_level) - find(from_level);
}

DiagramTable tabulate(const FormationDiagram& diagram, std::size_t points) {
  if (points < 2) throw ValidationError("Fermi grid needs at least 2 points");
  DiagramTable table;
  table.rows.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    DiagramTable::Row row;
    row.fermi = i + 1 == points ? diagram.gap
                                : diagram.gap * static_cast<double>(i) / static_cast<double>(points - 1);
    for (const auto& l : diagram.lines) row.lines[l.charge] = l.value(row.fermi);
    row.stable_charge = diagram.stable_charge(row.fermi);
    row.envelope = diagram.envelope_value(row.fermi);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace defect_forge
