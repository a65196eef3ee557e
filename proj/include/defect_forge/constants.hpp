#pragma once

namespace defect_forge::constants {

// Units throughout: Angstrom, eV, elementary charge, volt.

/// e^2 / (4 pi eps0) in eV*Angstrom.
inline constexpr double kCoulomb = 14.399645;

/// hc in meV*nm.
inline constexpr double kHcMeVnm = 1239841.98;

/// Debye per e*Angstrom.
inline constexpr double kDebyePerEAngstrom = 4.80320;

/// Bohr radius in Angstrom.
inline constexpr double kBohrAngstrom = 0.529177210903;

/// Speed of light in nm/ns.
inline constexpr double kSpeedOfLightNmPerNs = 299792458.0;

}  // namespace defect_forge::constants
