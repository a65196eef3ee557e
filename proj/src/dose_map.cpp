#include "defect_forge/dose_map.hpp"

#include <algorithm>
#include <cmath>

#include "defect_forge/errors.hpp"

namespace defect_forge {

double DoseCurve::intensity_at(double fluence) const {
  if (points.empty()) throw ValidationError("empty dose curve");
  if (fluence <= points.front().fluence) return points.front().intensity;
  if (fluence >= points.back().fluence) return points.back().intensity;
  const auto hi = std::upper_bound(points.begin(), points.end(), fluence,
                                   [](double f, const DosePoint& p) { return f < p.fluence; });
  const auto lo = hi - 1;
  if (lo->fluence == fluence) return lo->intensity;
  const double t = (fluence - lo->fluence) / (hi->fluence - lo->fluence);
  return lo->intensity + t * (hi->intensity - lo->intensity);
}

DoseCurve calibrate(std::span<const DosePoint> points, std::string emitter) {
  if (points.size() < 3) throw ValidationError("dose calibration needs at least 3 points");
  DoseCurve curve;
  curve.emitter = std::move(emitter);
  curve.points.assign(points.begin(), points.end());
  for (const auto& p : curve.points) {
    if (!std::isfinite(p.fluence) || !std::isfinite(p.intensity)) throw ValidationError("non-finite dose point");
    if (p.fluence < 0.0) throw ValidationError("negative fluence in dose data");
    if (p.intensity < 0.0) throw ValidationError("negative intensity in dose data");
  }
  std::sort(curve.points.begin(), curve.points.end(),
            [](const DosePoint& a, const DosePoint& b) { return a.fluence < b.fluence; });
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    if (curve.points[i].fluence == curve.points[i - 1].fluence) {
      throw ValidationError("duplicate fluence " + std::to_string(curve.points[i].fluence) + " mJ/cm^2");
    }
  }

  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const double d = curve.points[i + 1].intensity - curve.points[i].intensity;
    curve.segments.push_back(d > 0 ? Trend::rising : d < 0 ? Trend::falling : Trend::flat);
  }
  // A boundary sits where a reversed trend starts; plateaus keep the
  // earlier regime, matching classify().
  Trend last = Trend::flat;
  for (std::size_t i = 0; i < curve.segments.size(); ++i) {
    const Trend t = curve.segments[i];
    if (t == Trend::flat) continue;
    if (last != Trend::flat && t != last) curve.boundaries.push_back(curve.points[i].fluence);
    last = t;
  }
  return curve;
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::below_calibration: return "below-calibration";
    case Regime::write: return "write";
    case Regime::erase: return "erase";
    case Regime::rewrite: return "rewrite";
    case Regime::near_damage: return "near-damage(W-forming)";
  }
  return "write";
}

namespace {

std::vector<Regime> segment_regimes(const DoseCurve& curve) {
  std::vector<Regime> out;
  bool fallen = false;
  Regime previous = Regime::write;
  for (const Trend t : curve.segments) {
    Regime r = previous;
    if (t == Trend::rising) r = fallen ? Regime::rewrite : Regime::write;
    if (t == Trend::falling) {
      r = Regime::erase;
      fallen = true;
    }
    out.push_back(r);
    previous = r;
  }
  return out;
}

}  // namespace

Classification classify(const DoseCurve& curve, double fluence, double damage_threshold) {
  if (curve.points.size() < 2) throw ValidationError("classify needs a calibrated curve");
  if (!std::isfinite(fluence) || fluence < 0.0) throw ValidationError("fluence must be non-negative");
  if (!(damage_threshold > curve.points.back().fluence)) {
    throw ValidationError("damage threshold must exceed the largest calibrated fluence");
  }
  Classification c;
  c.fluence = fluence;
  if (fluence >= damage_threshold) {
    c.regime = Regime::near_damage;
    return c;
  }
  if (fluence < curve.points.front().fluence) {
    c.regime = Regime::below_calibration;
    return c;
  }
  const auto regimes = segment_regimes(curve);
  // Segment i covers (f_i, f_{i+1}]; the first point belongs to segment 0.
  std::size_t seg = regimes.size() - 1;
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    if (fluence <= curve.points[i + 1].fluence) {
      seg = i;
      break;
    }
  }
  c.segment = static_cast<int>(seg);
  c.regime = regimes[seg];
  c.extrapolated = fluence > curve.points.back().fluence;
  return c;
}

}  // namespace defect_forge
