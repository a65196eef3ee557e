#pragma once

#include <span>
#include <string>
#include <vector>

namespace defect_forge {

struct DosePoint {
  double fluence = 0.0;    // mJ/cm^2
  double intensity = 0.0;  // peak counts
  bool operator==(const DosePoint&) const = default;
};

enum class Trend { rising, falling, flat };

/// Fluence -> emitter response calibration as a piecewise-linear curve.
/// Segment i spans points i and i+1.
struct DoseCurve {
  std::string emitter;  // G | Ci | W
  std::vector<DosePoint> points;
  std::vector<Trend> segments;
  std::vector<double> boundaries;  // fluences where the trend reverses

  /// Linear interpolation; exact at calibration points.
  double intensity_at(double fluence) const;
  bool operator==(const DoseCurve&) const = default;
};

/// Sorts by fluence; duplicates and fewer than 3 points are errors.
DoseCurve calibrate(std::span<const DosePoint> points, std::string emitter = "");

enum class Regime { below_calibration, write, erase, rewrite, near_damage };
std::string to_string(Regime regime);

struct Classification {
  double fluence = 0.0;
  Regime regime = Regime::write;
  int segment = -1;           // -1 below calibration or at/above damage
  bool extrapolated = false;  // beyond the last calibrated fluence
};

/// Rising segments before the first fall are `write`, falling segments
/// `erase`, rising segments after a fall `rewrite`. Flat segments inherit
/// the preceding label. At or above `damage_threshold` the regime is
/// near-damage (W-centre forming).
Classification classify(const DoseCurve& curve, double fluence, double damage_threshold);

}  // namespace defect_forge
