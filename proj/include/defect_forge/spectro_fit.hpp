#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace defect_forge {

struct SpectrumMetadata {
  std::optional<double> temperature_k;
  std::optional<double> power_mw;
  std::optional<double> grating_gpmm;
  std::optional<double> x_um;
  std::optional<double> y_um;
  std::string location;

  bool operator==(const SpectrumMetadata&) const = default;
};

/// PL spectrum: strictly increasing wavelength axis (nm), non-negative counts.
class Spectrum {
 public:
  static constexpr std::size_t kMinSamples = 16;

  Spectrum(std::vector<double> wavelengths, std::vector<double> intensities, SpectrumMetadata metadata = {});

  const std::vector<double>& wavelengths() const noexcept { return wavelengths_; }
  const std::vector<double>& intensities() const noexcept { return intensities_; }
  const SpectrumMetadata& metadata() const noexcept { return metadata_; }
  std::size_t size() const noexcept { return wavelengths_.size(); }

  bool operator==(const Spectrum&) const = default;

 private:
  std::vector<double> wavelengths_;
  std::vector<double> intensities_;
  SpectrumMetadata metadata_;
};

enum class LineShape { lorentzian, gaussian };
std::string to_string(LineShape shape);
LineShape line_shape_from_string(const std::string& text);

struct PeakFit {
  double center = 0.0;     // nm
  double fwhm = 0.0;       // nm
  double amplitude = 0.0;  // counts above baseline at the center
  double baseline = 0.0;   // counts, shared by all peaks of one fit
  LineShape model = LineShape::lorentzian;
  double residual_rms = 0.0;
  double center_error = 0.0;
  double fwhm_error = 0.0;
  bool resolution_limited = false;
};

struct PeakFitResult {
  std::vector<PeakFit> peaks;  // sorted by amplitude, largest first
  double threshold = 0.0;      // seeding threshold, median + 5 MAD
  int iterations = 0;
  bool converged = false;
};

/// Spectrometer resolution (nm) for a grating: 0.03 nm at 1200 lines/mm,
/// inversely proportional to the line density.
double grating_resolution(double grating_gpmm);

/// Linewidth in GHz of a FWHM (nm) at a centre wavelength (nm).
double linewidth_ghz(double center_nm, double fwhm_nm);

/// Seeds on local maxima above median + 5 MAD, keeps the `max_peaks`
/// highest, then refines all peaks and a constant baseline jointly by
/// damped Gauss-Newton. Peaks whose FWHM is within 5% of the grating
/// resolution or below it are flagged resolution-limited. Throws
/// ValidationError when nothing rises above the threshold.
PeakFitResult fit_peaks(const Spectrum& spectrum, LineShape model = LineShape::lorentzian, int max_peaks = 8);

/// Time-resolved PL trace; times in ns, strictly increasing.
struct DecayTrace {
  std::vector<double> times;
  std::vector<double> counts;

  void validate() const;
  bool operator==(const DecayTrace&) const = default;
};

struct DecayFit {
  double tau = 0.0;  // ns
  double tau_error = 0.0;
  double amplitude = 0.0;           // A in A exp(-t/tau) + B, referred to t = 0
  double amplitude_at_start = 0.0;  // model amplitude at the first fitted sample
  double background = 0.0;
  double start_time = 0.0;  // time of the peak channel
  std::size_t samples = 0;
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Fits A exp(-t/tau) + B from the peak channel onward. Needs at least 10
/// samples after the peak; a non-decaying signal is a ValidationError.
DecayFit fit_lifetime(const DecayTrace& trace);

struct SaturationFit {
  double i_sat = 0.0;
  double i_sat_error = 0.0;
  double p_sat = 0.0;  // mW
  double p_sat_error = 0.0;
  double residual_rms = 0.0;
  bool identifiable = false;  // false when no power reaches P_sat
  bool converged = false;
};

/// Fits I(P) = I_sat P / (P + P_sat). Needs at least 4 points, P > 0.
SaturationFit fit_saturation(std::span<const double> powers_mw, std::span<const double> intensities);

struct TemperatureRow {
  double temperature = 0.0;  // K
  double amplitude = 0.0;
  double center = 0.0;  // nm
  bool operator==(const TemperatureRow&) const = default;
};

struct TemperatureSeries {
  std::vector<TemperatureRow> rows;          // ascending temperature
  std::optional<double> decreasing_fraction;  // share of steps where amplitude falls
};

/// Dominant-peak fit per spectrum, sorted by temperature.
TemperatureSeries temperature_series(std::span<const Spectrum> spectra, LineShape model = LineShape::lorentzian);

struct RasterPoint {
  double x = 0.0;  // um
  double y = 0.0;  // um
  double counts = 0.0;
};

/// Dense scan map. Row iy holds y = y0 + iy * pitch_y (ascending), column
/// ix holds x = x0 + ix * pitch_x. Missing points hold kMissing.
struct RasterMap {
  static constexpr double kMissing = -1.0;

  int nx = 0;
  int ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double pitch_x = 0.0;
  double pitch_y = 0.0;
  std::vector<double> values;
  std::vector<std::pair<int, int>> missing;  // (ix, iy)

  double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * nx + ix]; }
  /// Mean over the present points of one row; nullopt for an empty row.
  std::optional<double> row_mean(int iy) const;
};

/// Assembles scan points lying on a rectilinear grid (within 1% of the
/// pitch) into a dense map. Off-grid or duplicated points are errors.
RasterMap raster_map(std::span<const RasterPoint> points);

}  // namespace defect_forge
