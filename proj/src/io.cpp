#include "defect_forge/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "defect_forge/errors.hpp"

namespace defect_forge::io {

namespace {

struct Line {
  std::size_t number;
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0, number = 1;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(start, end - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!(end == text.size() && l.empty() && start == text.size())) lines.push_back({number, l});
    start = end + 1;
    ++number;
  }
  return lines;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_comment(std::string_view s) {
  const auto pos = s.find('#');
  return trim(pos == std::string_view::npos ? s : s.substr(0, pos));
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_csv(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(',', start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view token, const std::string& source, std::size_t line) {
  std::string_view t = trim(token);
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(source, line, "expected a number, got '" + std::string(token) + "'");
  }
  return v;
}

int parse_int(std::string_view token, const std::string& source, std::size_t line) {
  std::string_view t = trim(token);
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(source, line, "expected an integer, got '" + std::string(token) + "'");
  }
  return v;
}

// Data lines of a two-column CSV with a fixed header; '#' lines are handed
// to `on_comment`.
template <typename OnComment>
std::vector<std::pair<Line, std::vector<std::string_view>>> read_csv(std::string_view text, const std::string& source,
                                                                     const std::vector<std::string>& header,
                                                                     OnComment&& on_comment) {
  std::vector<std::pair<Line, std::vector<std::string_view>>> rows;
  bool have_header = false;
  for (const Line& l : split_lines(text)) {
    const std::string_view t = trim(l.text);
    if (t.empty()) continue;
    if (t.front() == '#') {
      on_comment(l, trim(t.substr(1)));
      continue;
    }
    auto cells = split_csv(strip_comment(t));
    if (!have_header) {
      std::vector<std::string> got(cells.begin(), cells.end());
      if (got != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw ParseError(source, l.number, "expected header '" + expected + "'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != header.size()) {
      throw ParseError(source, l.number,
                       "expected " + std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    }
    rows.emplace_back(l, std::move(cells));
  }
  if (!have_header) throw ParseError(source, 1, "empty file: missing header");
  if (rows.empty()) throw ParseError(source, 1, "no data rows");
  return rows;
}

std::vector<std::pair<Line, std::vector<std::string_view>>> read_csv(std::string_view text, const std::string& source,
                                                                     const std::vector<std::string>& header) {
  return read_csv(text, source, header, [](const Line&, std::string_view) {});
}

}  // namespace

std::string format_number(double value) {
  if (value == 0.0) return "0";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw ValidationError("number formatting failed");
  return std::string(buf, ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

// ---------------------------------------------------------------- structure

CrystalCell parse_structure(std::string_view text, const std::string& source) {
  const auto all = split_lines(text);
  if (all.empty()) throw ParseError(source, 1, "empty structure file: missing title line");
  std::vector<Line> body;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (!strip_comment(all[i].text).empty()) body.push_back({all[i].number, strip_comment(all[i].text)});
  }
  const std::size_t last_line = all.back().number;
  auto need = [&](std::size_t idx, const char* what) -> const Line& {
    if (idx >= body.size()) throw ParseError(source, last_line, std::string("truncated file: missing ") + what);
    return body[idx];
  };

  Eigen::Matrix3d lattice;
  for (int r = 0; r < 3; ++r) {
    const Line& l = need(static_cast<std::size_t>(r), "lattice rows");
    const auto tok = split_ws(l.text);
    if (tok.size() != 3) {
      throw ParseError(source, l.number, "lattice row needs 3 numbers, got " + std::to_string(tok.size()));
    }
    for (int c = 0; c < 3; ++c) lattice(r, c) = parse_number(tok[static_cast<std::size_t>(c)], source, l.number);
  }
  const Line& species_line = need(3, "species line");
  const Line& counts_line = need(4, "species counts line");
  const auto species = split_ws(species_line.text);
  const auto counts_tok = split_ws(counts_line.text);
  if (species.size() != counts_tok.size()) {
    throw ParseError(source, counts_line.number,
                     "species/count mismatch: " + std::to_string(species.size()) + " labels, " +
                         std::to_string(counts_tok.size()) + " counts");
  }
  std::vector<Site> sites;
  std::size_t idx = 5;
  for (std::size_t s = 0; s < species.size(); ++s) {
    const int count = parse_int(counts_tok[s], source, counts_line.number);
    if (count < 0) throw ParseError(source, counts_line.number, "negative species count");
    for (int n = 0; n < count; ++n, ++idx) {
      const Line& l = need(idx, "fractional coordinates");
      const auto tok = split_ws(l.text);
      if (tok.size() < 3) throw ParseError(source, l.number, "coordinate row needs 3 numbers");
      Eigen::Vector3d f;
      for (int c = 0; c < 3; ++c) f[c] = parse_number(tok[static_cast<std::size_t>(c)], source, l.number);
      sites.push_back({std::string(species[s]), f});
    }
  }
  if (idx < body.size()) {
    throw ParseError(source, body[idx].number, "more coordinate rows than the species counts declare");
  }
  try {
    return CrystalCell(lattice, std::move(sites));
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ParseError(source, body.front().number, e.what());
  }
}

std::string write_structure(const CrystalCell& cell, const std::string& title) {
  std::string out = title + "\n";
  for (int r = 0; r < 3; ++r) {
    out += format_number(cell.lattice()(r, 0)) + " " + format_number(cell.lattice()(r, 1)) + " " +
           format_number(cell.lattice()(r, 2)) + "\n";
  }
  std::vector<std::pair<std::string, int>> blocks;
  for (const auto& s : cell.sites()) {
    if (blocks.empty() || blocks.back().first != s.species) blocks.emplace_back(s.species, 0);
    ++blocks.back().second;
  }
  std::string names, counts;
  for (const auto& [name, n] : blocks) {
    names += (names.empty() ? "" : " ") + name;
    counts += (counts.empty() ? "" : " ") + std::to_string(n);
  }
  out += names + "\n" + counts + "\n";
  for (const auto& s : cell.sites()) {
    out += format_number(s.frac[0]) + " " + format_number(s.frac[1]) + " " + format_number(s.frac[2]) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- spectra

Spectrum parse_spectrum_csv(std::string_view text, const std::string& source) {
  SpectrumMetadata meta;
  auto on_comment = [&](const Line& l, std::string_view body) {
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) return;
    const std::string key(trim(body.substr(0, eq)));
    const std::string_view value = trim(body.substr(eq + 1));
    if (key == "temperature_K") meta.temperature_k = parse_number(value, source, l.number);
    else if (key == "power_mW") meta.power_mw = parse_number(value, source, l.number);
    else if (key == "grating_gpmm") meta.grating_gpmm = parse_number(value, source, l.number);
    else if (key == "x_um") meta.x_um = parse_number(value, source, l.number);
    else if (key == "y_um") meta.y_um = parse_number(value, source, l.number);
    else if (key == "location") meta.location = std::string(value);
  };
  const auto rows = read_csv(text, source, {"wavelength_nm", "counts"}, on_comment);
  std::vector<double> w, c;
  for (const auto& [l, cells] : rows) {
    w.push_back(parse_number(cells[0], source, l.number));
    c.push_back(parse_number(cells[1], source, l.number));
  }
  try {
    return Spectrum(std::move(w), std::move(c), std::move(meta));
  } catch (const ValidationError& e) {
    throw ParseError(source, rows.front().first.number, e.what());
  }
}

std::string write_spectrum_csv(const Spectrum& spectrum) {
  std::string out;
  const auto& m = spectrum.metadata();
  if (m.temperature_k) out += "# temperature_K=" + format_number(*m.temperature_k) + "\n";
  if (m.power_mw) out += "# power_mW=" + format_number(*m.power_mw) + "\n";
  if (m.grating_gpmm) out += "# grating_gpmm=" + format_number(*m.grating_gpmm) + "\n";
  if (m.x_um) out += "# x_um=" + format_number(*m.x_um) + "\n";
  if (m.y_um) out += "# y_um=" + format_number(*m.y_um) + "\n";
  if (!m.location.empty()) out += "# location=" + m.location + "\n";
  out += "wavelength_nm,counts\n";
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    out += format_number(spectrum.wavelengths()[i]) + "," + format_number(spectrum.intensities()[i]) + "\n";
  }
  return out;
}

DecayTrace parse_decay_csv(std::string_view text, const std::string& source) {
  DecayTrace trace;
  const auto rows = read_csv(text, source, {"time_ns", "counts"});
  for (const auto& [l, cells] : rows) {
    trace.times.push_back(parse_number(cells[0], source, l.number));
    trace.counts.push_back(parse_number(cells[1], source, l.number));
  }
  try {
    trace.validate();
  } catch (const ValidationError& e) {
    throw ParseError(source, rows.front().first.number, e.what());
  }
  return trace;
}

std::string write_decay_csv(const DecayTrace& trace) {
  std::string out = "time_ns,counts\n";
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    out += format_number(trace.times[i]) + "," + format_number(trace.counts[i]) + "\n";
  }
  return out;
}

std::vector<DosePoint> parse_dose_csv(std::string_view text, const std::string& source) {
  std::vector<DosePoint> points;
  for (const auto& [l, cells] : read_csv(text, source, {"fluence_mJcm2", "intensity"})) {
    points.push_back({parse_number(cells[0], source, l.number), parse_number(cells[1], source, l.number)});
  }
  return points;
}

std::string write_dose_csv(std::span<const DosePoint> points) {
  std::string out = "fluence_mJcm2,intensity\n";
  for (const auto& p : points) out += format_number(p.fluence) + "," + format_number(p.intensity) + "\n";
  return out;
}

SaturationData parse_saturation_csv(std::string_view text, const std::string& source) {
  SaturationData d;
  for (const auto& [l, cells] : read_csv(text, source, {"power_mW", "intensity"})) {
    d.powers.push_back(parse_number(cells[0], source, l.number));
    d.intensities.push_back(parse_number(cells[1], source, l.number));
  }
  return d;
}

std::vector<RasterPoint> parse_raster_csv(std::string_view text, const std::string& source) {
  std::vector<RasterPoint> points;
  for (const auto& [l, cells] : read_csv(text, source, {"x_um", "y_um", "counts"})) {
    points.push_back({parse_number(cells[0], source, l.number), parse_number(cells[1], source, l.number),
                      parse_number(cells[2], source, l.number)});
  }
  return points;
}

std::string write_raster_csv(const RasterMap& map) {
  std::string out = "# nx=" + std::to_string(map.nx) + " ny=" + std::to_string(map.ny) +
                    " x0_um=" + format_number(map.x0) + " y0_um=" + format_number(map.y0) +
                    " pitch_x_um=" + format_number(map.pitch_x) + " pitch_y_um=" + format_number(map.pitch_y) +
                    " missing=" + format_number(RasterMap::kMissing) + "\n";
  out += "# row iy holds y = y0 + iy * pitch_y, ascending\n";
  for (int iy = 0; iy < map.ny; ++iy) {
    for (int ix = 0; ix < map.nx; ++ix) out += (ix ? "," : "") + format_number(map.at(ix, iy));
    out += "\n";
  }
  return out;
}

std::string write_raster_pgm(const RasterMap& map) {
  double hi = 0.0;
  for (double v : map.values) hi = std::max(hi, v);
  std::string out = "P2\n" + std::to_string(map.nx) + " " + std::to_string(map.ny) + "\n255\n";
  for (int iy = map.ny - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < map.nx; ++ix) {
      const double v = map.at(ix, iy);
      const long g = v == RasterMap::kMissing || hi <= 0.0 ? 0 : std::lround(255.0 * v / hi);
      out += (ix ? " " : "") + std::to_string(g);
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------- grids

GridFunction parse_grid(std::string_view text, const CrystalCell& cell, const std::string& source) {
  std::array<int, 3> dims{};
  bool complex_values = true;
  bool have_header = false;
  std::vector<std::complex<double>> values;
  std::vector<double> pending;
  for (const Line& l : split_lines(text)) {
    const auto body = strip_comment(l.text);
    if (body.empty()) continue;
    const auto tok = split_ws(body);
    if (!have_header) {
      if (tok.size() != 5 || tok[0] != "GRID") {
        throw ParseError(source, l.number, "expected header 'GRID n1 n2 n3 complex|real'");
      }
      for (int i = 0; i < 3; ++i) dims[static_cast<std::size_t>(i)] = parse_int(tok[static_cast<std::size_t>(i + 1)], source, l.number);
      if (tok[4] == "complex") complex_values = true;
      else if (tok[4] == "real") complex_values = false;
      else throw ParseError(source, l.number, "grid value type must be 'complex' or 'real'");
      for (int n : dims) {
        if (n < 1) throw ParseError(source, l.number, "grid dimensions must be positive");
      }
      values.reserve(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
      have_header = true;
      continue;
    }
    for (const auto t : tok) {
      const double v = parse_number(t, source, l.number);
      if (complex_values) {
        pending.push_back(v);
        if (pending.size() == 2) {
          values.emplace_back(pending[0], pending[1]);
          pending.clear();
        }
      } else {
        values.emplace_back(v, 0.0);
      }
    }
  }
  if (!have_header) throw ParseError(source, 1, "empty grid file: missing GRID header");
  if (!pending.empty()) throw ParseError(source, split_lines(text).back().number, "dangling real part without imaginary part");
  try {
    return GridFunction(cell, dims, std::move(values));
  } catch (const ValidationError& e) {
    throw ParseError(source, 1, e.what());
  }
}

std::string write_grid(const GridFunction& grid, bool complex_values) {
  const auto& d = grid.dims();
  std::string out = "GRID " + std::to_string(d[0]) + " " + std::to_string(d[1]) + " " + std::to_string(d[2]) +
                    (complex_values ? " complex\n" : " real\n");
  for (const auto& v : grid.values()) {
    out += complex_values ? format_number(v.real()) + " " + format_number(v.imag()) + "\n"
                          : format_number(v.real()) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- run data

std::map<Spin, std::vector<EigenLevel>> parse_eigenvalues(std::string_view text, const std::string& source) {
  std::map<Spin, std::vector<EigenLevel>> out;
  for (const Line& l : split_lines(text)) {
    const auto body = strip_comment(l.text);
    if (body.empty()) continue;
    const auto tok = split_ws(body);
    if (tok.size() != 4) throw ParseError(source, l.number, "expected 'spin index energy_eV occupation'");
    Spin spin;
    try {
      spin = spin_from_string(std::string(tok[0]));
    } catch (const ValidationError& e) {
      throw ParseError(source, l.number, e.what());
    }
    out[spin].push_back({parse_int(tok[1], source, l.number), parse_number(tok[2], source, l.number),
                         parse_number(tok[3], source, l.number)});
  }
  if (out.empty()) throw ParseError(source, 1, "no eigenvalues");
  return out;
}

std::vector<SitePotential> parse_site_potentials(std::string_view text, const std::string& source) {
  std::vector<SitePotential> out;
  for (const Line& l : split_lines(text)) {
    const auto body = strip_comment(l.text);
    if (body.empty()) continue;
    const auto tok = split_ws(body);
    if (tok.size() != 2) throw ParseError(source, l.number, "expected 'site_index delta_V'");
    const int site = parse_int(tok[0], source, l.number);
    if (site < 0) throw ParseError(source, l.number, "negative site index");
    out.push_back({static_cast<std::size_t>(site), parse_number(tok[1], source, l.number)});
  }
  if (out.empty()) throw ParseError(source, 1, "no site potentials");
  return out;
}

double parse_energy(std::string_view text, const std::string& source) {
  std::optional<double> value;
  for (const Line& l : split_lines(text)) {
    const auto body = strip_comment(l.text);
    if (body.empty()) continue;
    if (value) throw ParseError(source, l.number, "energy file must contain a single number");
    const auto tok = split_ws(body);
    if (tok.size() != 1) throw ParseError(source, l.number, "energy file must contain a single number");
    value = parse_number(tok[0], source, l.number);
  }
  if (!value) throw ParseError(source, 1, "empty energy file");
  return *value;
}

// ---------------------------------------------------------------- diagram

namespace {

const std::vector<std::string>& diagram_header() {
  static const std::vector<std::string> h = {"fermi_eV", "q=-3", "q=-2", "q=-1", "q=0", "q=+1",
                                             "q=+2",     "q=+3", "envelope_eV", "stable_q"};
  return h;
}

}  // namespace

std::string write_diagram_csv(const DiagramTable& table) {
  std::string out;
  for (const auto& h : diagram_header()) out += (out.empty() ? "" : ",") + h;
  out += "\n";
  for (const auto& row : table.rows) {
    out += format_number(row.fermi);
    for (int q = kMinCharge; q <= kMaxCharge; ++q) {
      out += ",";
      const auto it = row.lines.find(q);
      if (it != row.lines.end()) out += format_number(it->second);
    }
    out += "," + format_number(row.envelope) + "," + std::to_string(row.stable_charge) + "\n";
  }
  return out;
}

DiagramTable parse_diagram_csv(std::string_view text, const std::string& source) {
  DiagramTable table;
  for (const auto& [l, cells] : read_csv(text, source, diagram_header())) {
    DiagramTable::Row row;
    row.fermi = parse_number(cells[0], source, l.number);
    for (int q = kMinCharge; q <= kMaxCharge; ++q) {
      const auto cell = cells[static_cast<std::size_t>(q - kMinCharge + 1)];
      if (!cell.empty()) row.lines[q] = parse_number(cell, source, l.number);
    }
    row.envelope = parse_number(cells[8], source, l.number);
    row.stable_charge = parse_int(cells[9], source, l.number);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------- optics table

namespace {

// "Ci+H Type 2 (+1)" -> ("Ci+H Type 2", +1)
std::pair<std::string, int> split_defect_label(std::string_view cell, const std::string& source, std::size_t line) {
  const auto open = cell.rfind('(');
  if (open == std::string_view::npos || cell.back() != ')') return {std::string(cell), 0};
  const auto inner = cell.substr(open + 1, cell.size() - open - 2);
  return {std::string(trim(cell.substr(0, open))), parse_int(inner, source, line)};
}

std::string charge_text(int q) { return q > 0 ? "+" + std::to_string(q) : std::to_string(q); }

}  // namespace

std::vector<OpticsTableRow> parse_optics_table_csv(std::string_view text, const std::string& source) {
  std::vector<OpticsTableRow> rows;
  bool have_header = false;
  std::map<std::string, std::size_t> col;
  for (const Line& l : split_lines(text)) {
    const auto t = trim(l.text);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = split_csv(t);
    if (!have_header) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[std::string(cells[i])] = i;
      for (const char* need : {"defect", "ZPL_meV", "spin", "TDM_D2", "shift_meV"}) {
        if (!col.count(need)) throw ParseError(source, l.number, std::string("missing column '") + need + "'");
      }
      have_header = true;
      continue;
    }
    auto get = [&](const char* name) -> std::string_view {
      const std::size_t i = col.at(name);
      return i < cells.size() ? cells[i] : std::string_view{};
    };
    OpticsTableRow row;
    std::tie(row.defect, row.charge) = split_defect_label(get("defect"), source, l.number);
    try {
      row.spin = spin_from_string(std::string(get("spin")));
    } catch (const ValidationError& e) {
      throw ParseError(source, l.number, e.what());
    }
    if (!get("ZPL_meV").empty()) row.zpl = parse_number(get("ZPL_meV"), source, l.number);
    if (!get("TDM_D2").empty()) row.tdm = parse_number(get("TDM_D2"), source, l.number);
    if (!get("shift_meV").empty()) row.stated_shift = parse_number(get("shift_meV"), source, l.number);
    if (col.count("note")) row.note = std::string(get("note"));
    rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(source, 1, "empty optics table");
  return rows;
}

std::string write_optics_csv(std::span<const OpticsTableRow> rows, std::span<const RowAudit> audits) {
  if (rows.size() != audits.size()) throw ValidationError("optics rows and audits differ in length");
  std::string out = "defect,ZPL_meV,spin,TDM_D2,shift_meV,consistency_flag\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& a = audits[i];
    out += r.defect + " (" + charge_text(r.charge) + ")," + format_number(a.zpl) + "," + to_string(r.spin) + "," +
           (r.tdm ? format_number(*r.tdm) : std::string()) + "," +
           (display_mev(a.recomputed_shift) > 0 ? "+" : "") + std::to_string(display_mev(a.recomputed_shift)) + "," +
           to_string(a.status) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- manifest

namespace {

struct Section {
  std::string name;
  std::size_t line = 0;
  std::vector<std::tuple<std::string, std::string, std::size_t>> entries;
};

Eigen::Matrix3d parse_dielectric(std::string_view value, const std::string& source, std::size_t line) {
  const auto tok = split_ws(value);
  std::vector<double> v;
  for (auto t : tok) v.push_back(parse_number(t, source, line));
  Eigen::Matrix3d eps = Eigen::Matrix3d::Zero();
  if (v.size() == 1) {
    eps = v[0] * Eigen::Matrix3d::Identity();
  } else if (v.size() == 3) {
    eps.diagonal() << v[0], v[1], v[2];
  } else if (v.size() == 9) {
    for (int i = 0; i < 9; ++i) eps(i / 3, i % 3) = v[static_cast<std::size_t>(i)];
  } else {
    throw ParseError(source, line, "dielectric needs 1, 3 or 9 numbers");
  }
  return eps;
}

std::map<std::string, int> parse_composition(std::string_view value, const std::string& source, std::size_t line) {
  std::map<std::string, int> out;
  for (auto tok : split_ws(value)) {
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw ParseError(source, line, "composition entries look like 'C:+1', got '" + std::string(tok) + "'");
    }
    out[std::string(tok.substr(0, colon))] += parse_int(tok.substr(colon + 1), source, line);
  }
  return out;
}

}  // namespace

RunManifest parse_manifest(std::string_view text, const fs::path& base_dir, const std::string& source) {
  RunManifest m;
  m.source = source;
  std::vector<Section> sections(1);
  for (const Line& l : split_lines(text)) {
    const auto body = strip_comment(l.text);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ParseError(source, l.number, "malformed section header");
      sections.push_back({std::string(trim(body.substr(1, body.size() - 2))), l.number, {}});
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, l.number, "expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    if (key.empty()) throw ParseError(source, l.number, "empty key");
    sections.back().entries.emplace_back(key, std::string(trim(body.substr(eq + 1))), l.number);
  }

  auto resolve = [&](const std::string& value, std::size_t line) {
    fs::path p(value);
    if (p.is_relative()) p = base_dir / p;
    if (!fs::exists(p)) throw ParseError(source, line, "referenced file not found: " + p.string());
    return p;
  };
  auto warn_unknown = [&](const std::string& section, const std::string& key, std::size_t line) {
    m.warnings.push_back(source + ":" + std::to_string(line) + ": unknown key '" + key + "' in [" + section + "]");
  };

  bool have_host = false;
  std::optional<double> e_bulk, e_vbm, e_gap;
  std::size_t host_line = 0;
  for (const Section& sec : sections) {
    if (sec.name.empty()) {
      for (const auto& [k, v, ln] : sec.entries) {
        if (k == "project") m.project = v;
        else if (k == "reference_zpl_meV") m.reference_zpl = parse_number(v, source, ln);
        else warn_unknown("top level", k, ln);
      }
    } else if (sec.name == "host") {
      if (have_host) throw ParseError(source, sec.line, "duplicate [host] section");
      have_host = true;
      host_line = sec.line;
      for (const auto& [k, v, ln] : sec.entries) {
        if (k == "E_bulk") e_bulk = parse_number(v, source, ln);
        else if (k == "E_VBM") e_vbm = parse_number(v, source, ln);
        else if (k == "E_gap") e_gap = parse_number(v, source, ln);
        else if (k.rfind("mu.", 0) == 0 && k.size() > 3) m.host.reference.chemical_potentials[k.substr(3)] = parse_number(v, source, ln);
        else if (k == "dielectric") m.host.dielectric = parse_dielectric(v, source, ln);
        else if (k == "cell") m.host.cell_file = resolve(v, ln);
        else if (k == "intrinsic_fermi") m.host.intrinsic_fermi = parse_number(v, source, ln);
        else warn_unknown("host", k, ln);
      }
    } else if (sec.name == "defect") {
      DefectEntry e;
      e.line = sec.line;
      bool have_label = false, have_charge = false, have_energy = false, have_comp = false;
      for (const auto& [k, v, ln] : sec.entries) {
        if (k == "label") e.run.label = v, have_label = true;
        else if (k == "charge") e.run.charge = parse_int(v, source, ln), have_charge = true;
        else if (k == "energy") {
          e.energy_file = resolve(v, ln);
          e.run.total_energy = parse_energy(read_file(e.energy_file), e.energy_file.string());
          have_energy = true;
        } else if (k == "composition") e.run.composition = parse_composition(v, source, ln), have_comp = true;
        else if (k == "eigenvalues") {
          e.eigenvalue_file = resolve(v, ln);
          e.run.eigenvalues = parse_eigenvalues(read_file(*e.eigenvalue_file), e.eigenvalue_file->string());
        } else if (k == "site_potentials") {
          e.site_potential_file = resolve(v, ln);
          e.run.site_potentials = parse_site_potentials(read_file(*e.site_potential_file), e.site_potential_file->string());
        } else if (k == "wavefunction") e.wavefunction_file = resolve(v, ln);
        else if (k == "defect_position") {
          const auto tok = split_ws(v);
          if (tok.size() != 3) throw ParseError(source, ln, "defect_position needs 3 fractional coordinates");
          e.defect_position = Eigen::Vector3d(parse_number(tok[0], source, ln), parse_number(tok[1], source, ln),
                                              parse_number(tok[2], source, ln));
        } else if (k == "sampling_radius") e.sampling_radius = parse_number(v, source, ln);
        else if (k == "correction") e.correction = parse_number(v, source, ln);
        else warn_unknown("defect", k, ln);
      }
      if (!have_label) throw ParseError(source, sec.line, "defect.label required");
      if (!have_charge) throw ParseError(source, sec.line, "defect.charge required");
      if (!have_energy) throw ParseError(source, sec.line, "defect.energy required");
      if (!have_comp) throw ParseError(source, sec.line, "defect.composition required");
      try {
        validate(e.run);
      } catch (const ValidationError& err) {
        throw ParseError(source, sec.line, err.what());
      }
      if (!e.run.site_potentials.empty() && !e.correction && !e.defect_position) {
        throw ParseError(source, sec.line, "defect.defect_position required with site_potentials");
      }
      m.defects.push_back(std::move(e));
    } else if (sec.name == "spectrum") {
      SpectrumEntry e;
      e.line = sec.line;
      for (const auto& [k, v, ln] : sec.entries) {
        if (k == "kind") {
          if (v != "pl" && v != "trpl" && v != "dose" && v != "raster") {
            throw ParseError(source, ln, "spectrum.kind must be pl|trpl|dose|raster");
          }
          e.kind = v;
        } else if (k == "file") e.file = resolve(v, ln);
        else e.metadata[k] = v;
      }
      if (e.kind.empty()) throw ParseError(source, sec.line, "spectrum.kind required");
      if (e.file.empty()) throw ParseError(source, sec.line, "spectrum.file required");
      m.spectra.push_back(std::move(e));
    } else if (sec.name == "optics") {
      OpticsEntry e;
      e.line = sec.line;
      for (const auto& [k, v, ln] : sec.entries) {
        if (k == "label") e.label = v;
        else if (k == "charge") e.charge = parse_int(v, source, ln);
        else if (k == "spin") {
          try {
            e.spin = spin_from_string(v);
          } catch (const ValidationError& err) {
            throw ParseError(source, ln, err.what());
          }
        } else if (k == "E_excited") e.excited_energy = parse_number(v, source, ln);
        else if (k == "E_ground") e.ground_energy = parse_number(v, source, ln);
        else if (k == "zpl_meV") e.zpl = parse_number(v, source, ln);
        else if (k == "tdm_D2") e.tdm = parse_number(v, source, ln);
        else if (k == "initial_wavefunction") e.initial_wavefunction = resolve(v, ln);
        else if (k == "final_wavefunction") e.final_wavefunction = resolve(v, ln);
        else if (k == "stated_shift_meV") e.stated_shift = parse_number(v, source, ln);
        else if (k == "ks_from") e.ks_from = parse_int(v, source, ln);
        else if (k == "ks_to") e.ks_to = parse_int(v, source, ln);
        else warn_unknown("optics", k, ln);
      }
      if (e.label.empty()) throw ParseError(source, sec.line, "optics.label required");
      if (!e.zpl && !(e.excited_energy && e.ground_energy)) {
        throw ParseError(source, sec.line, "optics entry needs zpl_meV or both E_excited and E_ground");
      }
      if (e.initial_wavefunction.has_value() != e.final_wavefunction.has_value()) {
        throw ParseError(source, sec.line, "optics entry needs both initial_wavefunction and final_wavefunction");
      }
      m.optics.push_back(std::move(e));
    } else {
      throw ParseError(source, sec.line, "unknown section [" + sec.name + "]");
    }
  }

  if (!have_host) {
    if (!m.defects.empty()) throw ParseError(source, m.defects.front().line, "host section required");
  } else {
    if (!e_bulk) throw ParseError(source, host_line, "host.E_bulk required");
    if (!e_vbm) throw ParseError(source, host_line, "host.E_VBM required");
    if (!e_gap) throw ParseError(source, host_line, "host.E_gap required");
    m.host.reference.bulk_energy = *e_bulk;
    m.host.reference.vbm = *e_vbm;
    m.host.reference.gap = *e_gap;
    try {
      validate(m.host.reference);
      if (m.host.cell_file) {
        const CrystalCell cell = parse_structure(read_file(*m.host.cell_file), m.host.cell_file->string());
        m.host.cell = std::make_shared<const CrystalCell>(cell.with_dielectric(m.host.dielectric));
      } else {
        // Validates the tensor even without geometry.
        CrystalCell(Eigen::Matrix3d::Identity(), {}, m.host.dielectric);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& err) {
      throw ParseError(source, host_line, err.what());
    }
  }

  std::set<std::pair<std::string, int>> seen;
  for (auto& e : m.defects) {
    if (!seen.emplace(e.run.label, e.run.charge).second) {
      throw ParseError(source, e.line,
                       "duplicate defect entry for label '" + e.run.label + "' charge " + std::to_string(e.run.charge));
    }
    for (const auto& [species, n] : e.run.composition) {
      if (!m.host.reference.chemical_potentials.count(species)) {
        throw ParseError(source, e.line, "host.mu." + species + " required by defect '" + e.run.label + "'");
      }
    }
    if (!e.run.site_potentials.empty() && !e.correction) {
      if (!m.host.cell) throw ParseError(source, e.line, "host.cell required for site-potential corrections");
      for (const auto& sp : e.run.site_potentials) {
        if (sp.site >= m.host.cell->sites().size()) {
          throw ParseError(source, e.line, "site potential index " + std::to_string(sp.site) + " exceeds the cell's " +
                                               std::to_string(m.host.cell->sites().size()) + " sites");
        }
      }
    }
    e.run.cell = m.host.cell;
  }
  return m;
}

RunManifest load_manifest(const fs::path& path) {
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return parse_manifest(read_file(path), base, path.string());
}

}  // namespace defect_forge::io
