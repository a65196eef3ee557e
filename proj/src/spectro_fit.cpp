#include "defect_forge/spectro_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "defect_forge/constants.hpp"
#include "defect_forge/errors.hpp"
#include "defect_forge/least_squares.hpp"

namespace defect_forge {

Spectrum::Spectrum(std::vector<double> wavelengths, std::vector<double> intensities, SpectrumMetadata metadata)
    : wavelengths_(std::move(wavelengths)), intensities_(std::move(intensities)), metadata_(std::move(metadata)) {
  if (wavelengths_.size() != intensities_.size()) {
    throw ValidationError("spectrum wavelength and intensity columns differ in length");
  }
  if (wavelengths_.size() < kMinSamples) {
    throw ValidationError("spectrum needs at least " + std::to_string(kMinSamples) + " samples, got " +
                          std::to_string(wavelengths_.size()));
  }
  for (std::size_t i = 0; i < wavelengths_.size(); ++i) {
    if (!std::isfinite(wavelengths_[i]) || !std::isfinite(intensities_[i])) {
      throw ValidationError("non-finite spectrum sample at index " + std::to_string(i));
    }
    if (intensities_[i] < 0.0) throw ValidationError("negative intensity at index " + std::to_string(i));
    if (i > 0 && !(wavelengths_[i] > wavelengths_[i - 1])) {
      throw ValidationError("wavelength axis not strictly increasing at index " + std::to_string(i));
    }
  }
}

std::string to_string(LineShape shape) { return shape == LineShape::lorentzian ? "lorentzian" : "gaussian"; }

LineShape line_shape_from_string(const std::string& text) {
  if (text == "lorentzian") return LineShape::lorentzian;
  if (text == "gaussian") return LineShape::gaussian;
  throw ValidationError("unknown line shape '" + text + "' (expected lorentzian|gaussian)");
}

double grating_resolution(double grating_gpmm) {
  if (!(grating_gpmm > 0.0)) throw ValidationError("grating line density must be positive");
  return 0.03 * 1200.0 / grating_gpmm;
}

double linewidth_ghz(double center_nm, double fwhm_nm) {
  // c in nm/ns gives GHz directly.
  return constants::kSpeedOfLightNmPerNs * fwhm_nm / (center_nm * center_nm);
}

namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double m = v[n / 2];
  if (n % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + n / 2));
  }
  return m;
}

constexpr double kFourLn2 = 2.772588722239781;

// Profile value and derivatives w.r.t. (center, fwhm, amplitude).
struct ProfileEval {
  double value, d_center, d_fwhm, d_amp;
};

ProfileEval profile(LineShape shape, double x, double c, double w, double a) {
  if (shape == LineShape::lorentzian) {
    const double u = 2.0 * (x - c) / w;
    const double den = 1.0 + u * u;
    const double g = 1.0 / den;
    return {a * g, 4.0 * a * u * g * g / w, 2.0 * a * u * u * g * g / w, g};
  }
  const double dx = x - c;
  const double e = std::exp(-kFourLn2 * dx * dx / (w * w));
  return {a * e, a * e * 2.0 * kFourLn2 * dx / (w * w), a * e * 2.0 * kFourLn2 * dx * dx / (w * w * w), e};
}

// Half-maximum width around a seed. Walks outward until the signal drops
// to half height; noise wiggles are ignored, a higher sample stops the walk.
double seed_width(const std::vector<double>& x, const std::vector<double>& y, std::size_t peak, double base) {
  const double half = base + 0.5 * (y[peak] - base);
  auto walk = [&](int dir) {
    std::size_t i = peak;
    for (;;) {
      if ((dir < 0 && i == 0) || (dir > 0 && i + 1 == x.size())) return std::abs(x[i] - x[peak]);
      const std::size_t j = dir < 0 ? i - 1 : i + 1;
      if (y[j] <= half) {
        const double t = (y[i] - half) / (y[i] - y[j]);
        return std::abs(x[i] + t * (x[j] - x[i]) - x[peak]);
      }
      if (y[j] > y[peak]) return std::abs(x[i] - x[peak]);
      i = j;
    }
  };
  const double spacing = x[std::min(peak + 1, x.size() - 1)] - x[peak > 0 ? peak - 1 : 0];
  const double w = walk(-1) + walk(+1);
  return std::max(w, 0.5 * std::abs(spacing));
}

// Interior local maxima above `threshold`; a flat top counts once, at its
// middle sample.
std::vector<std::size_t> local_maxima(const std::vector<double>& y, double threshold) {
  std::vector<std::size_t> out;
  const std::size_t n = y.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    std::size_t j = i;
    while (j + 1 < n && y[j + 1] == y[i]) ++j;
    if (j + 1 < n && y[i] > y[i - 1] && y[j + 1] < y[j] && y[i] > threshold) out.push_back((i + j) / 2);
    i = j + 1;
  }
  return out;
}

// Height of y[peak] above the higher of the two saddles that separate it
// from taller signal (or from the ends of the spectrum), and that saddle.
std::pair<double, double> prominence(const std::vector<double>& y, std::size_t peak) {
  auto saddle = [&](int dir) {
    double lowest = y[peak];
    for (std::size_t i = peak;;) {
      if ((dir < 0 && i == 0) || (dir > 0 && i + 1 == y.size())) break;
      i = dir < 0 ? i - 1 : i + 1;
      if (y[i] > y[peak]) break;
      lowest = std::min(lowest, y[i]);
    }
    return lowest;
  };
  const double s = std::max(saddle(-1), saddle(+1));
  return {y[peak] - s, s};
}

}  // namespace

PeakFitResult fit_peaks(const Spectrum& spectrum, LineShape model, int max_peaks) {
  if (max_peaks < 1) throw ValidationError("max_peaks must be >= 1");
  const auto& x = spectrum.wavelengths();
  const auto& y = spectrum.intensities();
  const std::size_t n = x.size();

  const double base = median(y);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::abs(y[i] - base);
  const double mad = median(dev);
  PeakFitResult result;
  result.threshold = base + 5.0 * mad;

  // Noise riding on a strong line's wings clears the threshold. A seed must
  // also stand 5 noise units above its saddle, with counting noise scaled
  // from the baseline MAD to the saddle level.
  std::vector<std::size_t> candidates;
  for (const std::size_t c : local_maxima(y, result.threshold)) {
    const auto [height, saddle] = prominence(y, c);
    const double noise = base > 0.0 ? mad * std::sqrt(std::max(saddle, base) / base) : mad;
    if (height > 5.0 * noise) candidates.push_back(c);
  }
  if (candidates.empty()) throw ValidationError("no peak above threshold " + std::to_string(result.threshold));
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  // Noise on a strong line gives several maxima; keep one per half-width window.
  std::vector<std::size_t> seeds;
  std::vector<double> widths;
  for (const std::size_t c : candidates) {
    if (seeds.size() == static_cast<std::size_t>(max_peaks)) break;
    bool separate = true;
    for (std::size_t s = 0; s < seeds.size() && separate; ++s) {
      separate = std::abs(x[c] - x[seeds[s]]) > widths[s];
    }
    if (!separate) continue;
    seeds.push_back(c);
    widths.push_back(seed_width(x, y, c, base));
  }

  // A line narrower than the sampling is unconstrained between samples.
  double min_width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < n; ++i) min_width = std::min(min_width, x[i] - x[i - 1]);
  for (auto& w : widths) w = std::max(w, min_width);

  // Axis relative to the first sample keeps the problem well conditioned
  // and makes the fit equivariant under axis shifts.
  const double origin = x.front();
  const auto k = static_cast<Eigen::Index>(seeds.size());
  Eigen::VectorXd p0(1 + 3 * k);
  p0[0] = base;
  for (Eigen::Index s = 0; s < k; ++s) {
    const std::size_t i = seeds[static_cast<std::size_t>(s)];
    p0[1 + 3 * s] = x[i] - origin;
    p0[2 + 3 * s] = widths[static_cast<std::size_t>(s)];
    p0[3 + 3 * s] = y[i] - base;
  }

  // Counting-noise weights 1/sqrt(max(y, baseline)); the floor keeps dim
  // baseline samples from dominating, and the weights scale with y so the
  // fit stays equivariant under intensity scaling.
  const double peak_height = *std::max_element(y.begin(), y.end());
  const double floor = base > 0.0 ? base : (peak_height > 0.0 ? 1e-6 * peak_height : 1.0);
  Eigen::VectorXd xs(static_cast<Eigen::Index>(n)), ys(static_cast<Eigen::Index>(n)), ws(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    xs[static_cast<Eigen::Index>(i)] = x[i] - origin;
    ys[static_cast<Eigen::Index>(i)] = y[i];
    ws[static_cast<Eigen::Index>(i)] = 1.0 / std::sqrt(std::max(y[i], floor));
  }

  ResidualFunction f = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    for (Eigen::Index s = 0; s < k; ++s) {
      if (!(p[2 + 3 * s] >= min_width)) return false;
    }
    r.resize(xs.size());
    if (J) J->setZero(xs.size(), p.size());
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      const double w = ws[i];
      double v = p[0];
      if (J) (*J)(i, 0) = w;
      for (Eigen::Index s = 0; s < k; ++s) {
        const auto e = profile(model, xs[i], p[1 + 3 * s], p[2 + 3 * s], p[3 + 3 * s]);
        v += e.value;
        if (J) {
          (*J)(i, 1 + 3 * s) = w * e.d_center;
          (*J)(i, 2 + 3 * s) = w * e.d_fwhm;
          (*J)(i, 3 + 3 * s) = w * e.d_amp;
        }
      }
      r[i] = w * (v - ys[i]);
    }
    return true;
  };

  const GaussNewtonResult fit = gauss_newton(f, p0);
  result.iterations = fit.iterations;
  result.converged = fit.converged;
  const double rms = std::sqrt(fit.residuals.cwiseQuotient(ws).squaredNorm() / static_cast<double>(n));

  const std::optional<double> resolution =
      spectrum.metadata().grating_gpmm ? std::optional<double>(grating_resolution(*spectrum.metadata().grating_gpmm))
                                       : std::nullopt;
  for (Eigen::Index s = 0; s < k; ++s) {
    PeakFit pk;
    pk.center = fit.params[1 + 3 * s] + origin;
    pk.fwhm = fit.params[2 + 3 * s];
    pk.amplitude = fit.params[3 + 3 * s];
    pk.baseline = fit.params[0];
    pk.model = model;
    pk.residual_rms = rms;
    pk.center_error = fit.standard_error(static_cast<int>(1 + 3 * s));
    pk.fwhm_error = fit.standard_error(static_cast<int>(2 + 3 * s));
    pk.resolution_limited = resolution && pk.fwhm <= 1.05 * *resolution;
    result.peaks.push_back(pk);
  }
  std::stable_sort(result.peaks.begin(), result.peaks.end(),
                   [](const PeakFit& a, const PeakFit& b) { return a.amplitude > b.amplitude; });
  return result;
}

void DecayTrace::validate() const {
  if (times.size() != counts.size()) throw ValidationError("decay trace columns differ in length");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(counts[i])) {
      throw ValidationError("non-finite decay sample at index " + std::to_string(i));
    }
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw ValidationError("decay time axis not strictly increasing at index " + std::to_string(i));
    }
  }
}

DecayFit fit_lifetime(const DecayTrace& trace) {
  trace.validate();
  const auto& t = trace.times;
  const auto& c = trace.counts;
  if (t.empty()) throw ValidationError("empty decay trace");
  const std::size_t peak = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
  const std::size_t m = t.size() - peak;
  if (m < 11) {
    throw ValidationError("decay fit needs at least 10 samples after the peak channel, got " + std::to_string(m - 1));
  }

  const double t0 = t[peak];
  const std::size_t tail = std::max<std::size_t>(3, m / 5);
  double b0 = 0.0;
  for (std::size_t i = t.size() - tail; i < t.size(); ++i) b0 += c[i];
  b0 /= static_cast<double>(tail);
  const double a0 = c[peak] - b0;
  if (!(a0 > 0.0)) throw ValidationError("signal does not decay toward its tail (non-positive decay)");

  // Log-linear seed over the part of the decay well above background.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t used = 0;
  for (std::size_t i = peak; i < t.size(); ++i) {
    const double v = c[i] - b0;
    if (v < 0.1 * a0) break;
    const double lx = t[i] - t0, ly = std::log(v);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, ++used;
  }
  double tau0 = 0.0;
  if (used >= 2) {
    const double slope = (used * sxy - sx * sy) / (used * sxx - sx * sx);
    if (slope >= 0.0) throw ValidationError("signal is rising; no decay to fit");
    tau0 = -1.0 / slope;
  } else {
    tau0 = std::max(t[peak + 1] - t0, 1e-12);
  }

  Eigen::VectorXd ts(static_cast<Eigen::Index>(m)), ys(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    ts[static_cast<Eigen::Index>(i)] = t[peak + i] - t0;
    ys[static_cast<Eigen::Index>(i)] = c[peak + i];
  }
  ResidualFunction f = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    if (!(p[1] > 0.0)) return false;
    r.resize(ts.size());
    if (J) J->resize(ts.size(), 3);
    for (Eigen::Index i = 0; i < ts.size(); ++i) {
      const double e = std::exp(-ts[i] / p[1]);
      r[i] = p[0] * e + p[2] - ys[i];
      if (J) {
        (*J)(i, 0) = e;
        (*J)(i, 1) = p[0] * e * ts[i] / (p[1] * p[1]);
        (*J)(i, 2) = 1.0;
      }
    }
    return true;
  };
  const GaussNewtonResult fit = gauss_newton(f, Eigen::Vector3d(a0, tau0, b0));
  if (!(fit.params[0] > 0.0)) throw ValidationError("fitted decay amplitude is not positive");

  DecayFit out;
  out.tau = fit.params[1];
  out.tau_error = fit.standard_error(1);
  out.amplitude_at_start = fit.params[0];
  out.amplitude = fit.params[0] * std::exp(t0 / out.tau);
  out.background = fit.params[2];
  out.start_time = t0;
  out.samples = m;
  out.residual_rms = fit.rms();
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  return out;
}

SaturationFit fit_saturation(std::span<const double> powers_mw, std::span<const double> intensities) {
  if (powers_mw.size() != intensities.size()) throw ValidationError("power and intensity columns differ in length");
  if (powers_mw.size() < 4) throw ValidationError("saturation fit needs at least 4 points");
  for (std::size_t i = 0; i < powers_mw.size(); ++i) {
    if (!(powers_mw[i] > 0.0) || !std::isfinite(powers_mw[i])) throw ValidationError("powers must be positive");
    if (!std::isfinite(intensities[i])) throw ValidationError("non-finite intensity");
  }
  const auto n = static_cast<Eigen::Index>(powers_mw.size());
  Eigen::VectorXd P(n), I(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    P[i] = powers_mw[static_cast<std::size_t>(i)];
    I[i] = intensities[static_cast<std::size_t>(i)];
  }
  const double p_min = P.minCoeff(), p_max = P.maxCoeff();

  // Coarse log scan in P_sat with the optimal linear I_sat at each value.
  double best_rss = std::numeric_limits<double>::infinity(), best_ps = p_max, best_is = I.maxCoeff();
  for (int s = 0; s <= 240; ++s) {
    const double ps = p_min * 1e-2 * std::pow(1e4 * p_max / p_min, s / 240.0);
    const Eigen::VectorXd g = P.array() / (P.array() + ps);
    const double is = g.dot(I) / g.squaredNorm();
    const double rss = (is * g - I).squaredNorm();
    if (rss < best_rss) best_rss = rss, best_ps = ps, best_is = is;
  }

  ResidualFunction f = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    if (!(p[1] > 0.0)) return false;
    r.resize(n);
    if (J) J->resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double den = P[i] + p[1];
      r[i] = p[0] * P[i] / den - I[i];
      if (J) {
        (*J)(i, 0) = P[i] / den;
        (*J)(i, 1) = -p[0] * P[i] / (den * den);
      }
    }
    return true;
  };
  const GaussNewtonResult fit = gauss_newton(f, Eigen::Vector2d(best_is, best_ps));

  SaturationFit out;
  out.i_sat = fit.params[0];
  out.p_sat = fit.params[1];
  out.i_sat_error = fit.standard_error(0);
  out.p_sat_error = fit.standard_error(1);
  out.residual_rms = fit.rms();
  out.converged = fit.converged;
  out.identifiable = fit.converged && out.p_sat > 0.0 && out.p_sat < p_max;
  return out;
}

TemperatureSeries temperature_series(std::span<const Spectrum> spectra, LineShape model) {
  TemperatureSeries out;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const auto& s = spectra[i];
    if (!s.metadata().temperature_k) {
      throw ValidationError("spectrum " + std::to_string(i) + " has no temperature_K metadata");
    }
    const PeakFitResult fit = fit_peaks(s, model, 1);
    out.rows.push_back({*s.metadata().temperature_k, fit.peaks.front().amplitude, fit.peaks.front().center});
  }
  std::sort(out.rows.begin(), out.rows.end(), [](const TemperatureRow& a, const TemperatureRow& b) {
    if (a.temperature != b.temperature) return a.temperature < b.temperature;
    if (a.amplitude != b.amplitude) return a.amplitude > b.amplitude;
    return a.center < b.center;
  });
  if (out.rows.size() >= 2) {
    std::size_t down = 0;
    for (std::size_t i = 1; i < out.rows.size(); ++i) {
      if (out.rows[i].amplitude < out.rows[i - 1].amplitude) ++down;
    }
    out.decreasing_fraction = static_cast<double>(down) / static_cast<double>(out.rows.size() - 1);
  }
  return out;
}

std::optional<double> RasterMap::row_mean(int iy) const {
  double s = 0.0;
  int count = 0;
  for (int ix = 0; ix < nx; ++ix) {
    const double v = at(ix, iy);
    if (v != kMissing) s += v, ++count;
  }
  if (count == 0) return std::nullopt;
  return s / count;
}

namespace {

struct AxisGrid {
  double origin = 0.0;
  double pitch = 0.0;
  int count = 1;
  std::vector<int> index;
};

AxisGrid fit_axis(const std::vector<double>& v, const char* name) {
  AxisGrid g;
  std::vector<double> u = v;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  g.index.assign(v.size(), 0);
  if (u.size() == 1) {
    g.origin = u.front();
    return g;
  }
  double max_gap = 0.0;
  for (std::size_t i = 1; i < u.size(); ++i) max_gap = std::max(max_gap, u[i] - u[i - 1]);
  double pitch = max_gap;
  for (std::size_t i = 1; i < u.size(); ++i) {
    const double gap = u[i] - u[i - 1];
    if (gap > 0.25 * max_gap) pitch = std::min(pitch, gap);
  }
  // Least-squares refinement of origin and pitch from the integer indices.
  double si = 0, sv = 0, sii = 0, siv = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    g.index[i] = static_cast<int>(std::lround((v[i] - u.front()) / pitch));
    si += g.index[i], sv += v[i], sii += double(g.index[i]) * g.index[i], siv += g.index[i] * v[i];
  }
  const double m = static_cast<double>(v.size());
  const double den = m * sii - si * si;
  g.pitch = den != 0.0 ? (m * siv - si * sv) / den : pitch;
  g.origin = (sv - g.pitch * si) / m;
  int lowest = *std::min_element(g.index.begin(), g.index.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double residual = v[i] - (g.origin + g.pitch * g.index[i]);
    if (std::abs(residual) > 0.01 * g.pitch * (1.0 + 1e-9)) {
      throw ValidationError(std::string("scan point with ") + name + " = " + std::to_string(v[i]) +
                            " is off the rectilinear grid (pitch " + std::to_string(g.pitch) + ")");
    }
  }
  g.origin += lowest * g.pitch;
  for (auto& i : g.index) i -= lowest;
  g.count = *std::max_element(g.index.begin(), g.index.end()) + 1;
  return g;
}

}  // namespace

RasterMap raster_map(std::span<const RasterPoint> points) {
  if (points.empty()) throw ValidationError("raster map needs at least one point");
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.counts)) {
      throw ValidationError("non-finite raster point");
    }
    if (p.counts < 0.0) throw ValidationError("negative raster counts");
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  const AxisGrid gx = fit_axis(xs, "x");
  const AxisGrid gy = fit_axis(ys, "y");

  RasterMap map;
  map.nx = gx.count;
  map.ny = gy.count;
  map.x0 = gx.origin;
  map.y0 = gy.origin;
  map.pitch_x = gx.pitch;
  map.pitch_y = gy.pitch;
  map.values.assign(static_cast<std::size_t>(map.nx) * map.ny, RasterMap::kMissing);
  std::vector<bool> seen(map.values.size(), false);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t slot = static_cast<std::size_t>(gy.index[i]) * map.nx + gx.index[i];
    if (seen[slot]) {
      throw ValidationError("duplicate raster point at (" + std::to_string(points[i].x) + ", " +
                            std::to_string(points[i].y) + ")");
    }
    seen[slot] = true;
    map.values[slot] = points[i].counts;
  }
  for (int iy = 0; iy < map.ny; ++iy)
    for (int ix = 0; ix < map.nx; ++ix)
      if (!seen[static_cast<std::size_t>(iy) * map.nx + ix]) map.missing.emplace_back(ix, iy);
  return map;
}

}  // namespace defect_forge
