#include "defect_forge/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "defect_forge/errors.hpp"
#include "defect_forge/io.hpp"
#include "defect_forge/parallel.hpp"

namespace defect_forge {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Options {
  std::string manifest;
  std::string out = "out";
  std::size_t fermi_grid = 2001;
  std::optional<double> damage_threshold;
  std::string model = "lorentzian";
  bool verbose = false;
  std::vector<std::string> inputs;
  int max_peaks = 8;
  std::vector<double> fluences;
  std::string emitter;
  std::optional<double> reference;
  std::string cell;
  std::string initial;
  std::string final_state;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects diagnostics for logs/<command>.log and writes result files.
class Session {
 public:
  Session(std::string command, const Options& opts, std::ostream& out, std::ostream& err)
      : command_(std::move(command)), opts_(opts), out_(out), err_(err) {
    log_ << "started " << utc_timestamp() << "\n";
    log_ << "command " << command_ << "\n";
    log_ << "threads " << thread_count() << "\n";
  }

  const Options& options() const { return opts_; }
  std::ostream& out() { return out_; }

  void note(const std::string& line) {
    log_ << line << "\n";
    if (opts_.verbose) err_ << line << "\n";
  }
  void warn(const std::string& line) {
    log_ << "warning: " << line << "\n";
    err_ << "warning: " << line << "\n";
  }
  void write(const fs::path& relative, std::string_view content) {
    io::write_file(fs::path(opts_.out) / relative, content);
    log_ << "wrote " << relative.generic_string() << "\n";
  }
  void write_json(const fs::path& relative, const json& value) { write(relative, value.dump(2) + "\n"); }

  void finish(int code, const std::string& message = {}) {
    if (!message.empty()) log_ << "error: " << message << "\n";
    log_ << "exit " << code << "\n";
    log_ << "finished " << utc_timestamp() << "\n";
    try {
      io::write_file(fs::path(opts_.out) / "logs" / (command_ + ".log"), log_.str());
    } catch (const std::exception& e) {
      err_ << "warning: could not write log: " << e.what() << "\n";
    }
  }

 private:
  std::string command_;
  const Options& opts_;
  std::ostream& out_;
  std::ostream& err_;
  std::ostringstream log_;
};

std::string safe_name(const std::string& label) {
  std::string s;
  for (char c : label) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    s += keep ? c : (c == '+' ? 'p' : '_');
  }
  return s.empty() ? "defect" : s;
}

std::string charge_label(int q) { return q > 0 ? "+" + std::to_string(q) : std::to_string(q); }

io::RunManifest require_manifest(Session& s) {
  if (s.options().manifest.empty()) throw ValidationError(std::string("--manifest is required"));
  auto m = io::load_manifest(s.options().manifest);
  for (const auto& w : m.warnings) s.warn(w);
  return m;
}

struct InputFile {
  std::string name;
  fs::path path;
  std::map<std::string, std::string> metadata;
};

std::vector<InputFile> gather_inputs(Session& s, const std::string& kind) {
  std::vector<InputFile> files;
  if (!s.options().inputs.empty()) {
    for (const auto& p : s.options().inputs) files.push_back({p, fs::path(p), {}});
  } else if (!s.options().manifest.empty()) {
    const auto m = require_manifest(s);
    for (const auto& e : m.spectra) {
      if (e.kind == kind) files.push_back({e.file.generic_string(), e.file, e.metadata});
    }
  }
  if (files.empty()) {
    throw ValidationError("no " + kind + " input: pass data files or a manifest with [spectrum] kind = " + kind);
  }
  return files;
}

Spectrum load_spectrum(const InputFile& f) {
  Spectrum sp = io::parse_spectrum_csv(io::read_file(f.path), f.path.string());
  if (f.metadata.empty()) return sp;
  SpectrumMetadata md = sp.metadata();
  auto number = [&](const char* key, std::optional<double>& slot) {
    const auto it = f.metadata.find(key);
    if (it == f.metadata.end() || slot) return;
    try {
      slot = std::stod(it->second);
    } catch (const std::exception&) {
      throw ValidationError("metadata " + std::string(key) + " of " + f.name + " is not a number");
    }
  };
  number("temperature_K", md.temperature_k);
  number("power_mW", md.power_mw);
  number("grating_gpmm", md.grating_gpmm);
  number("x_um", md.x_um);
  number("y_um", md.y_um);
  if (const auto it = f.metadata.find("location"); it != f.metadata.end() && md.location.empty()) {
    md.location = it->second;
  }
  return Spectrum(sp.wavelengths(), sp.intensities(), md);
}

json correction_json(const CorrectionResult& c, const std::string& source) {
  return json{{"source", source},
              {"total_eV", c.total},
              {"point_charge_eV", c.point_charge_term},
              {"alignment_eV", c.alignment_term},
              {"delta_phi_V", c.delta_phi},
              {"sampled_sites", c.sampled_sites},
              {"sampling_radius_A", c.sampling_radius}};
}

// ---------------------------------------------------------------- diagram

int cmd_diagram(Session& s) {
  const auto m = require_manifest(s);
  if (m.defects.empty()) throw ValidationError("manifest has no [defect] entries");
  if (s.options().fermi_grid < 2) throw ValidationError("--fermi-grid must be at least 2");

  std::vector<std::string> labels;
  for (const auto& e : m.defects) {
    if (std::find(labels.begin(), labels.end(), e.run.label) == labels.end()) labels.push_back(e.run.label);
  }

  std::optional<EwaldContext> ewald;
  auto context = [&]() -> const EwaldContext& {
    if (!ewald) {
      ewald.emplace(*m.host.cell);
      s.note("ewald eta=" + io::format_number(ewald->eta()) + " real_cutoff=" + io::format_number(ewald->real_cutoff()) +
             " reciprocal_cutoff=" + io::format_number(ewald->reciprocal_cutoff()) +
             " real_terms=" + std::to_string(ewald->real_terms()) +
             " reciprocal_terms=" + std::to_string(ewald->reciprocal_terms()) +
             " tail_bound=" + io::format_number(ewald->tail_bound()));
    }
    return *ewald;
  };

  for (const auto& label : labels) {
    std::vector<DefectRun> runs;
    std::vector<double> corrections;
    json correction_details = json::object();
    for (const auto& e : m.defects) {
      if (e.run.label != label) continue;
      CorrectionResult c;
      std::string source = "none";
      if (e.correction) {
        c.total = *e.correction;
        source = "manifest";
      } else if (!e.run.site_potentials.empty()) {
        c = finite_size_correction(context(), e.run.charge, e.run.site_potentials, *e.defect_position,
                                   e.sampling_radius);
        source = "computed";
        for (const auto& w : c.warnings) s.warn(label + " q=" + charge_label(e.run.charge) + ": " + w);
        s.note(label + " q=" + charge_label(e.run.charge) + " correction=" + io::format_number(c.total) +
               " eV (point charge " + io::format_number(c.point_charge_term) + ", alignment " +
               io::format_number(c.alignment_term) + ", " + std::to_string(c.sampled_sites) + " sites)");
      }
      runs.push_back(e.run);
      corrections.push_back(c.total);
      correction_details[charge_label(e.run.charge)] = correction_json(c, source);
    }

    const FormationDiagram d = build_diagram(runs, m.host.reference, corrections, m.host.intrinsic_fermi);
    for (const auto& w : d.warnings) s.warn(label + ": " + w);
    const std::string stem = "diagrams/" + safe_name(label);
    s.write(stem + ".csv", io::write_diagram_csv(tabulate(d, s.options().fermi_grid)));

    json lines = json::array();
    for (const auto& l : d.lines) {
      lines.push_back({{"charge", l.charge},
                       {"intercept_eV", l.intercept},
                       {"correction", correction_details[charge_label(l.charge)]}});
    }
    json envelope = json::array();
    for (const auto& iv : d.envelope) {
      envelope.push_back({{"lower_eV", iv.lower}, {"upper_eV", iv.upper}, {"charge", iv.charge}});
    }
    json transitions = json::array();
    for (const auto& t : d.transitions) {
      transitions.push_back({{"level", charge_label(t.charge_below) + "/" + charge_label(t.charge_above)},
                             {"charge_below", t.charge_below},
                             {"charge_above", t.charge_above},
                             {"fermi_eV", t.fermi}});
    }
    json doc{{"label", label},
             {"gap_eV", d.gap},
             {"vbm_eV", m.host.reference.vbm},
             {"intrinsic_fermi_eV", d.intrinsic_fermi},
             {"intrinsic_charge", d.intrinsic_charge},
             {"lines", lines},
             {"envelope", envelope},
             {"transitions", transitions},
             {"warnings", d.warnings}};
    s.write_json(stem + ".json", doc);

    s.out() << label << ": stable";
    for (const auto& iv : d.envelope) {
      s.out() << " q=" << charge_label(iv.charge) << " [" << io::format_number(iv.lower) << ", "
              << io::format_number(iv.upper) << "]";
    }
    s.out() << "; at E_F=" << io::format_number(d.intrinsic_fermi) << " eV q=" << charge_label(d.intrinsic_charge)
            << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- optics / tdm

json tdm_json(const TdmResult& r) {
  json dipole = json::array();
  for (int a = 0; a < 3; ++a) dipole.push_back(json::array({r.dipole[a].real(), r.dipole[a].imag()}));
  return json{{"tdm_D2", r.total},
              {"components_D2", {r.components[0], r.components[1], r.components[2]}},
              {"dipole_eA", dipole},
              {"overlap", r.overlap},
              {"orthogonal", r.orthogonal},
              {"centroid_A", {r.centroid[0], r.centroid[1], r.centroid[2]}}};
}

TdmResult compute_tdm(Session& s, const CrystalCell& cell, const fs::path& initial, const fs::path& final_state,
                      const std::string& what) {
  const GridFunction gi = io::parse_grid(io::read_file(initial), cell, initial.string());
  const GridFunction gf = io::parse_grid(io::read_file(final_state), cell, final_state.string());
  const TdmResult r = transition_dipole(gi, gf);
  if (!r.orthogonal) {
    s.warn(what + ": states are not orthogonal (overlap " + io::format_number(r.overlap) + ")");
  }
  s.note(what + ": tdm=" + io::format_number(r.total) + " D^2 overlap=" + io::format_number(r.overlap));
  return r;
}

std::shared_ptr<const CrystalCell> require_cell(const io::RunManifest& m) {
  if (!m.host.cell) throw ValidationError("host.cell required for wavefunction grids");
  return m.host.cell;
}

int cmd_tdm(Session& s) {
  const auto& o = s.options();
  json results = json::array();
  if (!o.initial.empty() || !o.final_state.empty() || !o.cell.empty()) {
    if (o.initial.empty() || o.final_state.empty() || o.cell.empty()) {
      throw ValidationError("direct mode needs --cell, --initial and --final");
    }
    const CrystalCell cell = io::parse_structure(io::read_file(o.cell), o.cell);
    const TdmResult r = compute_tdm(s, cell, o.initial, o.final_state, "tdm");
    json entry{{"initial", o.initial}, {"final", o.final_state}};
    entry.update(tdm_json(r));
    results.push_back(entry);
  } else {
    const auto m = require_manifest(s);
    for (const auto& e : m.optics) {
      if (!e.initial_wavefunction) continue;
      const std::string what = e.label + " (" + charge_label(e.charge) + ") " + to_string(e.spin);
      const TdmResult r = compute_tdm(s, *require_cell(m), *e.initial_wavefunction, *e.final_wavefunction, what);
      json entry{{"label", e.label}, {"charge", e.charge}, {"spin", to_string(e.spin)}};
      entry.update(tdm_json(r));
      results.push_back(entry);
    }
    if (results.empty()) throw ValidationError("no [optics] entry with wavefunction grids in the manifest");
  }
  s.write_json("optics/tdm.json", results);
  for (const auto& r : results) {
    s.out() << (r.contains("label") ? r["label"].get<std::string>() : std::string("tdm")) << ": "
            << io::format_number(r["tdm_D2"].get<double>()) << " D^2\n";
  }
  return kExitOk;
}

int cmd_optics(Session& s) {
  const auto m = require_manifest(s);
  if (m.optics.empty()) throw ValidationError("manifest has no [optics] entries");
  const double reference = s.options().reference.value_or(m.reference_zpl.value_or(kTable1Reference));

  std::vector<OpticsTableRow> rows;
  json tdms = json::array();
  std::string delta_ks_csv;
  for (const auto& e : m.optics) {
    OpticsTableRow row{e.label, e.charge, e.spin, e.zpl, e.tdm, e.stated_shift, ""};
    if (!row.zpl) row.zpl = zpl(*e.excited_energy, *e.ground_energy);
    const std::string what = e.label + " (" + charge_label(e.charge) + ") " + to_string(e.spin);
    if (e.initial_wavefunction) {
      const TdmResult r = compute_tdm(s, *require_cell(m), *e.initial_wavefunction, *e.final_wavefunction, what);
      if (!row.tdm) row.tdm = r.total;
      json entry{{"label", e.label}, {"charge", e.charge}, {"spin", to_string(e.spin)}};
      entry.update(tdm_json(r));
      tdms.push_back(entry);
    }
    OpticsRecord{row.defect, row.charge, row.spin, *row.zpl, row.tdm.value_or(0.0), 0.0}.validate();
    if (e.ks_from || e.ks_to) {
      if (!e.ks_from || !e.ks_to) throw ValidationError(what + ": ks_from and ks_to go together");
      const auto run = std::find_if(m.defects.begin(), m.defects.end(), [&](const io::DefectEntry& d) {
        return d.run.label == e.label && d.run.charge == e.charge;
      });
      if (run == m.defects.end()) {
        throw ValidationError(what + ": no [defect] entry with matching label and charge for delta KS");
      }
      const double dks = delta_ks(run->run, *e.ks_from, *e.ks_to, e.spin);
      if (delta_ks_csv.empty()) delta_ks_csv = "defect,spin,from_level,to_level,delta_KS_meV\n";
      delta_ks_csv += e.label + " (" + charge_label(e.charge) + ")," + to_string(e.spin) + "," +
                      std::to_string(*e.ks_from) + "," + std::to_string(*e.ks_to) + "," +
                      io::format_number(1000.0 * dks) + "\n";
    }
    rows.push_back(std::move(row));
  }
  const auto audits = audit_table(rows, reference);
  s.write("optics/table.csv", io::write_optics_csv(rows, audits));
  if (!tdms.empty()) s.write_json("optics/tdm.json", tdms);
  if (!delta_ks_csv.empty()) s.write("optics/delta_ks.csv", delta_ks_csv);
  std::size_t flagged = 0;
  for (const auto& a : audits) {
    if (a.status == RowStatus::mismatch) ++flagged;
  }
  s.out() << rows.size() << " optics rows, reference ZPL " << io::format_number(reference) << " meV, " << flagged
          << " inconsistent\n";
  return kExitOk;
}

int cmd_check_table1(Session& s) {
  std::vector<OpticsTableRow> rows;
  if (s.options().inputs.empty()) {
    rows = bundled_table1();
  } else {
    if (s.options().inputs.size() != 1) throw ValidationError("check-table1 takes at most one table file");
    const auto& p = s.options().inputs.front();
    rows = io::parse_optics_table_csv(io::read_file(p), p);
  }
  const double reference = s.options().reference.value_or(kTable1Reference);
  const auto audits = audit_table(rows, reference);
  std::string csv = "defect,spin,ZPL_meV,stated_shift_meV,recomputed_shift_meV,status,discrepancy_meV,note\n";
  std::size_t flagged = 0;
  for (const auto& a : audits) {
    const auto& r = rows[a.row];
    csv += r.defect + " (" + charge_label(r.charge) + ")," + to_string(r.spin) + "," + io::format_number(a.zpl) + "," +
           (r.stated_shift ? io::format_number(*r.stated_shift) : std::string()) + "," +
           io::format_number(a.recomputed_shift) + "," + to_string(a.status) + "," +
           io::format_number(a.discrepancy) + "," + r.note + "\n";
    const std::string name = r.defect + " (" + charge_label(r.charge) + ") " + to_string(r.spin);
    if (a.status == RowStatus::mismatch) {
      ++flagged;
      s.out() << "MISMATCH " << name << ": ZPL " << io::format_number(a.zpl) << " meV, stated shift "
              << io::format_number(*r.stated_shift) << " meV, ZPL - reference = "
              << io::format_number(a.recomputed_shift) << " meV (discrepancy " << io::format_number(a.discrepancy)
              << " meV)\n";
    } else if (a.status == RowStatus::reconstructed) {
      s.out() << "RECONSTRUCTED " << name << ": ZPL = " << io::format_number(reference) << " + "
              << io::format_number(*r.stated_shift) << " = " << io::format_number(a.zpl) << " meV\n";
    }
  }
  s.write("optics/table1_check.csv", csv);
  s.out() << flagged << " of " << rows.size() << " rows inconsistent\n";
  return kExitOk;
}

// ---------------------------------------------------------------- spectra

int cmd_fitpl(Session& s) {
  const LineShape model = line_shape_from_string(s.options().model);
  const auto files = gather_inputs(s, "pl");
  std::vector<Spectrum> spectra;
  for (const auto& f : files) spectra.push_back(load_spectrum(f));

  std::vector<PeakFitResult> fits(spectra.size());
  parallel_for(spectra.size(), [&](std::size_t i) { fits[i] = fit_peaks(spectra[i], model, s.options().max_peaks); });

  std::string csv =
      "source,peak,center_nm,fwhm_nm,amplitude,baseline,model,residual_rms,center_error_nm,fwhm_error_nm,"
      "energy_meV,linewidth_GHz,resolution_limited,converged\n";
  bool all_converged = true;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& r = fits[i];
    all_converged = all_converged && r.converged;
    s.note(files[i].name + ": " + std::to_string(r.peaks.size()) + " peaks, threshold " +
           io::format_number(r.threshold) + ", " + std::to_string(r.iterations) + " iterations, converged=" +
           (r.converged ? "true" : "false"));
    for (std::size_t k = 0; k < r.peaks.size(); ++k) {
      const auto& p = r.peaks[k];
      csv += files[i].name + "," + std::to_string(k) + "," + io::format_number(p.center) + "," +
             io::format_number(p.fwhm) + "," + io::format_number(p.amplitude) + "," + io::format_number(p.baseline) +
             "," + to_string(p.model) + "," + io::format_number(p.residual_rms) + "," +
             io::format_number(p.center_error) + "," + io::format_number(p.fwhm_error) + "," +
             io::format_number(wavelength_to_energy(p.center)) + "," +
             io::format_number(linewidth_ghz(p.center, p.fwhm)) + "," + (p.resolution_limited ? "true" : "false") +
             "," + (r.converged ? "true" : "false") + "\n";
    }
    if (!r.peaks.empty()) {
      const auto& p = r.peaks.front();
      s.out() << files[i].name << ": " << r.peaks.size() << " peaks, strongest at " << io::format_number(p.center)
              << " nm, FWHM " << io::format_number(p.fwhm) << " nm" << (p.resolution_limited ? " (resolution-limited)" : "")
              << "\n";
    }
  }
  s.write("fits/peaks.csv", csv);

  const bool have_temperatures = std::all_of(spectra.begin(), spectra.end(), [](const Spectrum& sp) {
    return sp.metadata().temperature_k.has_value();
  });
  if (have_temperatures) {
    const TemperatureSeries series = temperature_series(spectra, model);
    std::string t = series.decreasing_fraction
                        ? "# decreasing_fraction=" + io::format_number(*series.decreasing_fraction) + "\n"
                        : std::string();
    t += "temperature_K,amplitude,center_nm\n";
    for (const auto& row : series.rows) {
      t += io::format_number(row.temperature) + "," + io::format_number(row.amplitude) + "," +
           io::format_number(row.center) + "\n";
    }
    s.write("fits/temperature_series.csv", t);
  }
  if (!all_converged) throw ConvergenceError("peak fit did not converge within the iteration limit");
  return kExitOk;
}

int cmd_lifetime(Session& s) {
  const auto files = gather_inputs(s, "trpl");
  std::vector<DecayFit> fits(files.size());
  std::vector<DecayTrace> traces;
  for (const auto& f : files) traces.push_back(io::parse_decay_csv(io::read_file(f.path), f.path.string()));
  parallel_for(traces.size(), [&](std::size_t i) { fits[i] = fit_lifetime(traces[i]); });

  std::string csv =
      "source,tau_ns,tau_error_ns,amplitude,amplitude_at_start,background,start_time_ns,samples,residual_rms,"
      "iterations,converged\n";
  bool all_converged = true;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    all_converged = all_converged && f.converged;
    csv += files[i].name + "," + io::format_number(f.tau) + "," + io::format_number(f.tau_error) + "," +
           io::format_number(f.amplitude) + "," + io::format_number(f.amplitude_at_start) + "," +
           io::format_number(f.background) + "," + io::format_number(f.start_time) + "," +
           std::to_string(f.samples) + "," + io::format_number(f.residual_rms) + "," + std::to_string(f.iterations) +
           "," + (f.converged ? "true" : "false") + "\n";
    s.note(files[i].name + ": " + std::to_string(f.iterations) + " iterations, rms " +
           io::format_number(f.residual_rms));
    s.out() << files[i].name << ": tau = " << io::format_number(f.tau) << " +/- " << io::format_number(f.tau_error)
            << " ns\n";
  }
  s.write("fits/lifetime.csv", csv);
  if (!all_converged) throw ConvergenceError("lifetime fit did not converge within the iteration limit");
  return kExitOk;
}

int cmd_saturation(Session& s) {
  std::vector<double> powers, intensities;
  std::string source;
  if (!s.options().inputs.empty()) {
    if (s.options().inputs.size() != 1) throw ValidationError("saturation takes one power_mW,intensity file");
    source = s.options().inputs.front();
    auto d = io::parse_saturation_csv(io::read_file(source), source);
    powers = std::move(d.powers);
    intensities = std::move(d.intensities);
  } else {
    // Dominant-peak amplitude of each PL spectrum against its excitation power.
    const LineShape model = line_shape_from_string(s.options().model);
    source = s.options().manifest;
    for (const auto& f : gather_inputs(s, "pl")) {
      const Spectrum sp = load_spectrum(f);
      if (!sp.metadata().power_mw) throw ValidationError(f.name + " has no power_mW metadata");
      powers.push_back(*sp.metadata().power_mw);
      intensities.push_back(fit_peaks(sp, model, 1).peaks.front().amplitude);
    }
  }
  const SaturationFit f = fit_saturation(powers, intensities);
  if (!f.identifiable) s.warn("P_sat is not identifiable: no power reaches the saturation knee");
  json doc{{"source", source},
           {"points", powers.size()},
           {"i_sat", f.i_sat},
           {"i_sat_error", f.i_sat_error},
           {"p_sat_mW", f.p_sat},
           {"p_sat_error_mW", f.p_sat_error},
           {"residual_rms", f.residual_rms},
           {"identifiable", f.identifiable},
           {"converged", f.converged}};
  s.write_json("fits/saturation.json", doc);
  s.out() << "I_sat = " << io::format_number(f.i_sat) << ", P_sat = " << io::format_number(f.p_sat) << " mW"
          << (f.identifiable ? "" : " (unidentifiable)") << "\n";
  if (!f.converged) throw ConvergenceError("saturation fit did not converge within the iteration limit");
  return kExitOk;
}

std::string trend_name(Trend t) {
  switch (t) {
    case Trend::rising: return "rising";
    case Trend::falling: return "falling";
    case Trend::flat: return "flat";
  }
  return "flat";
}

int cmd_dose(Session& s) {
  const auto files = gather_inputs(s, "dose");
  const double threshold = s.options().damage_threshold.value_or(std::numeric_limits<double>::infinity());
  if (!s.options().damage_threshold) s.note("no --damage-threshold given; near-damage regime disabled");

  std::string curve_csv = "emitter,fluence_mJcm2,intensity,trend_to_next,regime\n";
  std::string jsonl;
  for (const auto& f : files) {
    std::string emitter = s.options().emitter;
    if (emitter.empty()) {
      const auto it = f.metadata.find("emitter");
      emitter = it != f.metadata.end() ? it->second : f.path.stem().string();
    }
    const auto points = io::parse_dose_csv(io::read_file(f.path), f.path.string());
    const DoseCurve curve = calibrate(points, emitter);
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      const auto& p = curve.points[i];
      const Classification c = classify(curve, p.fluence, threshold);
      curve_csv += emitter + "," + io::format_number(p.fluence) + "," + io::format_number(p.intensity) + "," +
                   (i + 1 < curve.points.size() ? trend_name(curve.segments[i]) : std::string()) + "," +
                   to_string(c.regime) + "\n";
    }
    std::vector<double> queries = s.options().fluences;
    if (queries.empty()) {
      for (const auto& p : curve.points) queries.push_back(p.fluence);
    }
    for (double q : queries) {
      const Classification c = classify(curve, q, threshold);
      json line{{"emitter", emitter},
                {"fluence", c.fluence},
                {"regime", to_string(c.regime)},
                {"segment", c.segment},
                {"extrapolated", c.extrapolated}};
      jsonl += line.dump() + "\n";
      s.out() << emitter << " " << io::format_number(q) << " mJ/cm^2: " << to_string(c.regime) << "\n";
    }
    std::string b;
    for (double x : curve.boundaries) b += (b.empty() ? "" : " ") + io::format_number(x);
    s.note(emitter + ": boundaries at [" + b + "] mJ/cm^2");
  }
  s.write("fits/dose_curve.csv", curve_csv);
  s.write("fits/dose_classification.jsonl", jsonl);
  return kExitOk;
}

int cmd_raster(Session& s) {
  const auto files = gather_inputs(s, "raster");
  if (files.size() != 1) throw ValidationError("raster takes exactly one scan file");
  const auto points = io::parse_raster_csv(io::read_file(files.front().path), files.front().path.string());
  const RasterMap map = raster_map(points);
  for (const auto& [ix, iy] : map.missing) {
    s.warn("missing scan point at x=" + io::format_number(map.x0 + ix * map.pitch_x) +
           " y=" + io::format_number(map.y0 + iy * map.pitch_y) + " um");
  }
  s.write("fits/raster.csv", io::write_raster_csv(map));
  s.write("fits/raster.pgm", io::write_raster_pgm(map));
  json missing = json::array();
  for (const auto& [ix, iy] : map.missing) missing.push_back({ix, iy});
  json means = json::array();
  for (int iy = 0; iy < map.ny; ++iy) {
    const auto m = map.row_mean(iy);
    means.push_back(m ? json(*m) : json(nullptr));
  }
  json doc{{"nx", map.nx},         {"ny", map.ny},           {"x0_um", map.x0},
           {"y0_um", map.y0},      {"pitch_x_um", map.pitch_x}, {"pitch_y_um", map.pitch_y},
           {"missing_value", RasterMap::kMissing}, {"missing", missing}, {"row_means", means}};
  s.write_json("fits/raster_summary.json", doc);
  s.out() << map.nx << " x " << map.ny << " map, " << map.missing.size() << " missing points\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Point-defect emitter analysis: formation-energy diagrams, optics and PL fitting", "defect_forge"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--manifest", o.manifest, "Run manifest");
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--fermi-grid", o.fermi_grid, "Fermi-level samples in diagram CSVs")->capture_default_str();
  app.add_option("--damage-threshold", o.damage_threshold, "Damage-threshold fluence (mJ/cm^2)");
  app.add_option("--model", o.model, "Peak line shape")
      ->check(CLI::IsMember({"lorentzian", "gaussian"}))
      ->capture_default_str();
  app.add_flag("--verbose", o.verbose, "Print convergence diagnostics");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(Session&);
  };
  const std::vector<Command> commands = {
      {"diagram", "Formation-energy diagrams for every defect label in the manifest", cmd_diagram},
      {"optics", "ZPL/TDM table with relative shifts from the manifest [optics] entries", cmd_optics},
      {"tdm", "Squared transition dipole moments from wavefunction grids", cmd_tdm},
      {"fitpl", "Peak fits of PL spectra (and a temperature series when metadata allows)", cmd_fitpl},
      {"lifetime", "Exponential lifetime fits of TR-PL traces", cmd_lifetime},
      {"saturation", "Saturation-curve fit I = I_sat P / (P + P_sat)", cmd_saturation},
      {"dose", "Fluence calibration and regime classification", cmd_dose},
      {"raster", "Assemble a raster scan into a map", cmd_raster},
      {"check-table1", "Consistency check of the bundled C_i ZPL table", cmd_check_table1},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("inputs", o.inputs, "Data files");
    subs.push_back(sub);
  }
  subs[2]->add_option("--cell", o.cell, "Structure file for direct mode");
  subs[2]->add_option("--initial", o.initial, "Initial-state grid");
  subs[2]->add_option("--final", o.final_state, "Final-state grid");
  subs[1]->add_option("--reference", o.reference, "Reference ZPL (meV)");
  subs[8]->add_option("--reference", o.reference, "Reference ZPL (meV)");
  subs[3]->add_option("--max-peaks", o.max_peaks, "Maximum peaks per spectrum")->capture_default_str();
  subs[6]->add_option("--fluence", o.fluences, "Fluences to classify (mJ/cm^2)")->delimiter(',');
  subs[6]->add_option("--emitter", o.emitter, "Emitter label (G, Ci, W)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  std::size_t which = 0;
  while (which < subs.size() && !subs[which]->parsed()) ++which;
  Session session(commands[which].name, o, out, err);
  try {
    const int code = commands[which].run(session);
    session.finish(code);
    return code;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    session.finish(kExitNonConvergence, e.what());
    return kExitNonConvergence;
  } catch (const ValidationError& e) {
    // ParseError messages already carry file:line.
    err << "error: " << e.what() << "\n";
    session.finish(kExitValidation, e.what());
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    session.finish(kExitValidation, e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    session.finish(1, e.what());
    return 1;
  }
}

}  // namespace defect_forge
