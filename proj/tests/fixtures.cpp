#include "fixtures.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "defect_forge/io.hpp"

namespace fixtures {

using namespace defect_forge;

CrystalCell simple_cubic(double edge, double epsilon) {
  return CrystalCell(edge * Eigen::Matrix3d::Identity(), {{"X", Eigen::Vector3d::Zero()}},
                     epsilon * Eigen::Matrix3d::Identity());
}

CrystalCell silicon_primitive() {
  const double a = 5.43;
  Eigen::Matrix3d lattice;
  lattice << 0.0, a / 2, a / 2, a / 2, 0.0, a / 2, a / 2, a / 2, 0.0;
  return CrystalCell(lattice, {{"Si", Eigen::Vector3d::Zero()}, {"Si", Eigen::Vector3d::Constant(0.25)}});
}

namespace {

constexpr double kBulk = -292.0;
constexpr double kMuC = -9.0;
constexpr double kVbm = 5.0;

}  // namespace

DiagramFixture ci_topology() {
  DiagramFixture f;
  f.host.bulk_energy = kBulk;
  f.host.vbm = kVbm;
  f.host.gap = 1.12;
  f.host.chemical_potentials = {{"C", kMuC}};
  const std::vector<std::pair<int, double>> intercepts = {{3, 3.5},  {2, 2.8},  {1, 2.3}, {0, 2.0},
                                                          {-1, 2.5}, {-2, 3.3}, {-3, 4.3}};
  for (const auto& [q, c] : intercepts) {
    DefectRun run;
    run.label = "Ci";
    run.charge = q;
    run.composition = {{"C", 1}};
    run.total_energy = c + kBulk + kMuC - q * kVbm;
    f.runs.push_back(run);
  }
  return f;
}

std::vector<DosePoint> g_center_dose() {
  return {{8, 40},    {12, 150},  {16, 600},  {20, 900},  {24, 1100},   {28, 1200},
          {32, 300},  {36, 60},   {40, 400},  {44.5, 900}, {48, 1000}};
}

Spectrum synthetic_spectrum(double lo, double hi, double step, const std::vector<Line>& lines, double baseline,
                            SpectrumMetadata md, LineShape shape, unsigned noise_seed) {
  std::vector<double> x, y;
  std::mt19937_64 rng(noise_seed);
  const auto n = static_cast<int>(std::floor((hi - lo) / step + 0.5));
  for (int i = 0; i <= n; ++i) {
    const double w = lo + i * step;
    double v = baseline;
    for (const auto& l : lines) {
      if (shape == LineShape::lorentzian) {
        const double u = 2.0 * (w - l.center) / l.fwhm;
        v += l.amplitude / (1.0 + u * u);
      } else {
        v += l.amplitude * std::exp(-4.0 * std::log(2.0) * (w - l.center) * (w - l.center) / (l.fwhm * l.fwhm));
      }
    }
    if (noise_seed != 0) v = static_cast<double>(std::poisson_distribution<long>(v)(rng));
    x.push_back(w);
    y.push_back(v);
  }
  return Spectrum(std::move(x), std::move(y), std::move(md));
}

DecayTrace synthetic_decay(double amplitude, double tau, double background, unsigned seed, double t0, double t_max,
                           double dt) {
  DecayTrace trace;
  std::mt19937_64 rng(seed);
  const auto n = static_cast<int>(std::floor(t_max / dt + 0.5));
  for (int i = 0; i <= n; ++i) {
    const double t = i * dt;
    const double mean = t < t0 - 1e-12 ? background : amplitude * std::exp(-(t - t0) / tau) + background;
    trace.times.push_back(t);
    trace.counts.push_back(seed == 0 ? mean : static_cast<double>(std::poisson_distribution<long>(mean)(rng)));
  }
  return trace;
}

HydrogenGrids hydrogen_grids(double box_bohr, int n) {
  const double bohr = 0.529177210903;
  const double edge = box_bohr * bohr;
  const CrystalCell cell(edge * Eigen::Matrix3d::Identity());
  const Eigen::Vector3d centre = Eigen::Vector3d::Constant(0.5 * edge);
  const std::array<int, 3> dims{n, n, n};
  auto s1 = GridFunction::sample(cell, dims, [&](const Eigen::Vector3d& r) {
    const double rb = (r - centre).norm() / bohr;
    return std::complex<double>(std::exp(-rb) / std::sqrt(M_PI), 0.0);
  });
  auto p2z = GridFunction::sample(cell, dims, [&](const Eigen::Vector3d& r) {
    const Eigen::Vector3d d = (r - centre) / bohr;
    return std::complex<double>(d.z() * std::exp(-0.5 * d.norm()) / (4.0 * std::sqrt(2.0 * M_PI)), 0.0);
  });
  return {std::move(s1), std::move(p2z)};
}

MirrorGrids mirror_grids(int n, double box, double d, double sigma) {
  const CrystalCell cell(box * Eigen::Matrix3d::Identity());
  const Eigen::Vector3d centre = Eigen::Vector3d::Constant(0.5 * box);
  const Eigen::Vector3d a = centre - Eigen::Vector3d(d, 0, 0);
  const Eigen::Vector3d b = centre + Eigen::Vector3d(d, 0, 0);
  const std::array<int, 3> dims{n, n, n};
  auto gi = GridFunction::sample(cell, dims, [&](const Eigen::Vector3d& r) {
    return std::complex<double>(std::exp(-(r - a).squaredNorm() / (2 * sigma * sigma)), 0.0);
  });
  auto gf = GridFunction::sample(cell, dims, [&](const Eigen::Vector3d& r) {
    return std::complex<double>((r - b).y() * std::exp(-(r - b).squaredNorm() / (2 * sigma * sigma)), 0.0);
  });
  return {std::move(gi), std::move(gf)};
}

std::filesystem::path write_diagram_manifest(const std::filesystem::path& dir) {
  const DiagramFixture f = ci_topology();
  std::ostringstream m;
  m << "# C_i topology fixture\n"
    << "project = ci-topology\n\n"
    << "[host]\n"
    << "E_bulk = " << io::format_number(f.host.bulk_energy) << "\n"
    << "E_VBM = " << io::format_number(f.host.vbm) << "\n"
    << "E_gap = " << io::format_number(f.host.gap) << "\n"
    << "mu.C = " << io::format_number(f.host.chemical_potentials.at("C")) << "\n"
    << "dielectric = 11.7\n";
  for (const auto& run : f.runs) {
    const std::string name = "Ci_q" + std::to_string(run.charge) + ".energy";
    io::write_file(dir / name, "# total energy (eV)\n" + io::format_number(run.total_energy) + "\n");
    m << "\n[defect]\nlabel = Ci\ncharge = " << run.charge << "\nenergy = " << name << "\ncomposition = C:+1\n";
  }
  io::write_file(dir / "manifest.txt", m.str());
  return dir / "manifest.txt";
}

}  // namespace fixtures
