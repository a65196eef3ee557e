#include <doctest.h>

#include <random>

#include "defect_forge/defect_thermo.hpp"
#include "defect_forge/errors.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace defect_forge;

namespace {

HostReference simple_host(double gap = 1.12) {
  HostReference h;
  h.bulk_energy = -100.0;
  h.vbm = 0.0;
  h.gap = gap;
  h.chemical_potentials = {{"C", -9.0}, {"H", -3.5}, {"Si", -5.4}};
  return h;
}

DefectRun run_with(int q, double total, std::map<std::string, int> comp = {{"C", 1}}) {
  DefectRun r;
  r.label = "X";
  r.charge = q;
  r.total_energy = total;
  r.composition = std::move(comp);
  return r;
}

// Random diagram: intercepts drawn independently per charge.
std::vector<DefectRun> random_runs(std::mt19937_64& rng, const HostReference& host) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<DefectRun> runs;
  for (int q = kMinCharge; q <= kMaxCharge; ++q) {
    runs.push_back(run_with(q, host.bulk_energy - 9.0 + u(rng) - q * host.vbm));
  }
  return runs;
}

}  // namespace

TEST_SUITE("defect_thermo") {
  TEST_CASE("identity run has zero formation energy") {
    HostReference h = simple_host();
    DefectRun r = run_with(0, h.bulk_energy, {});
    for (double ef : {0.0, 0.3, 1.12}) CHECK(formation_energy(r, h, ef) == 0.0);
  }

  TEST_CASE("direct arithmetic") {
    HostReference h = simple_host();
    // E_tot - E_bulk - sum n mu = 1.2 eV, q = -1, corr = +0.1.
    const DefectRun r = run_with(-1, h.bulk_energy - 9.0 + 1.2);
    CorrectionResult c;
    c.total = 0.1;
    for (double ef : {0.0, 0.25, 0.9}) CHECK(formation_energy(r, h, ef, c) == doctest::Approx(1.3 - ef).epsilon(1e-13));
  }

  TEST_CASE("Fermi range and missing chemical potentials") {
    HostReference h = simple_host();
    const DefectRun r = run_with(1, -110.0);
    std::vector<std::string> warnings;
    formation_energy(r, h, -0.3, 0.0, &warnings);
    formation_energy(r, h, 1.5, 0.0, &warnings);
    CHECK(warnings.size() == 2);
    CHECK_THROWS_AS(formation_energy(r, h, -0.6), ValidationError);
    CHECK_THROWS_AS(formation_energy(r, h, h.gap + 0.51), ValidationError);
    CHECK_THROWS_AS(formation_energy(run_with(0, -100, {{"N", 1}}), h, 0.1), ValidationError);
  }

  TEST_CASE("slopes equal the charge by finite differences") {
    std::mt19937_64 rng(21);
    const HostReference h = simple_host();
    for (int trial = 0; trial < 20; ++trial) {
      for (const auto& r : random_runs(rng, h)) {
        for (int i = 0; i < 10; ++i) {
          const double a = h.gap * i / 10.0, b = h.gap * (i + 1) / 10.0;
          const double slope = (formation_energy(r, h, b) - formation_energy(r, h, a)) / (b - a);
          CHECK(std::abs(slope - r.charge) < 1e-9);
        }
      }
    }
  }

  TEST_CASE("gauge invariance and correction linearity") {
    const HostReference h = simple_host();
    HostReference shifted = h;
    shifted.bulk_energy += 123.456;
    DefectRun r = run_with(-2, -108.0);
    DefectRun rs = r;
    rs.total_energy += 123.456;
    CHECK(formation_energy(rs, shifted, 0.4) == doctest::Approx(formation_energy(r, h, 0.4)).epsilon(1e-12));
    CHECK(formation_energy(r, h, 0.4, 0.25) - formation_energy(r, h, 0.4, 0.0) == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("transition level: closed form, symmetry, grid scan") {
    const HostReference h = simple_host();
    // E_f(0) = 1.0, E_f(-1) = 1.5 - E_F  ->  eps(0/-1) = 0.5.
    const DefectRun neutral = run_with(0, h.bulk_energy - 9.0 + 1.0);
    const DefectRun minus = run_with(-1, h.bulk_energy - 9.0 + 1.5);
    CHECK(transition_level(neutral, minus, h) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(transition_level(neutral, minus, h) == transition_level(minus, neutral, h));
    CHECK_THROWS_AS(transition_level(neutral, neutral, h), ValidationError);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
      const int qa = 1 - static_cast<int>(trial % 3), qb = qa - 1 - static_cast<int>(trial % 2);
      const double level = 0.1 + 0.9 * u(rng);
      const DefectRun a = run_with(qa, h.bulk_energy - 9.0 + 2.0);
      // Place b so that the crossing falls at `level`.
      const DefectRun b = run_with(qb, h.bulk_energy - 9.0 + 2.0 + (qa - qb) * level);
      const double closed = transition_level(a, b, h);
      CHECK(closed == transition_level(b, a, h));
      const double scanned = oracle::scan_root(
          [&](double x) { return formation_energy(a, h, x) - formation_energy(b, h, x); }, 0.0, h.gap, 1e-6);
      CHECK(std::abs(closed - scanned) < 2e-6);
    }
  }

  TEST_CASE("single charge state covers the gap") {
    const HostReference h = simple_host();
    const std::vector<DefectRun> runs = {run_with(-1, -109.0)};
    const auto d = build_diagram(runs, h);
    REQUIRE(d.envelope.size() == 1);
    CHECK(d.envelope[0].charge == -1);
    CHECK(d.envelope[0].lower == 0.0);
    CHECK(d.envelope[0].upper == h.gap);
    CHECK(d.transitions.empty());
  }

  TEST_CASE("C_i topology fixture: neutral region then -1, -2, -3 toward the CBM") {
    const auto f = fixtures::ci_topology();
    const auto d = build_diagram(f.runs, f.host);
    REQUIRE(d.envelope.size() == 4);
    CHECK(d.envelope[0].charge == 0);
    CHECK(d.envelope[1].charge == -1);
    CHECK(d.envelope[2].charge == -2);
    CHECK(d.envelope[3].charge == -3);
    CHECK(d.envelope[0].upper == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.envelope[1].upper == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(d.envelope[2].upper == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.intrinsic_fermi == doctest::Approx(0.56));
    CHECK(d.intrinsic_charge == -1);
    CHECK(d.lines.size() == 7);
  }

  TEST_CASE("envelope equals the brute-force minimum on a 10^4 grid") {
    std::mt19937_64 rng(99);
    const HostReference h = simple_host();
    for (int trial = 0; trial < 25; ++trial) {
      const auto runs = random_runs(rng, h);
      const auto d = build_diagram(runs, h);
      std::vector<std::pair<int, double>> lines;
      for (const auto& r : runs) lines.emplace_back(r.charge, formation_energy(r, h, 0.0));
      for (int i = 0; i < 10000; ++i) {
        const double x = h.gap * i / 9999.0;
        const double brute = oracle::lower_envelope(lines, x);
        CHECK(d.envelope_value(x) == brute);
        const double stable = d.line(d.stable_charge(x))->value(x);
        CHECK(std::abs(stable - brute) < 1e-12);
      }
      // Breakpoints coincide with transition levels; stable q never rises.
      for (std::size_t k = 0; k < d.transitions.size(); ++k) {
        const auto& t = d.transitions[k];
        CHECK(t.charge_above < t.charge_below);
        CHECK(std::abs(t.fermi - transition_level(*d.line(t.charge_below), *d.line(t.charge_above))) < 1e-9);
        CHECK(d.envelope[k].upper == t.fermi);
      }
      for (std::size_t k = 1; k < d.envelope.size(); ++k) CHECK(d.envelope[k].charge < d.envelope[k - 1].charge);
    }
  }

  TEST_CASE("envelope is concave") {
    std::mt19937_64 rng(5);
    const HostReference h = simple_host();
    const auto d = build_diagram(random_runs(rng, h), h);
    for (int i = 1; i < 999; ++i) {
      const double a = h.gap * (i - 1) / 998.0, b = h.gap * i / 998.0, c = h.gap * (i + 1) / 998.0;
      CHECK(d.envelope_value(b) >= 0.5 * (d.envelope_value(a) + d.envelope_value(c)) - 1e-12);
    }
  }

  TEST_CASE("breakpoints go to the lower-|q| state") {
    const HostReference h = simple_host();
    // eps(0/-1) = 0.5 and eps(+1/0) = 0.2.
    const std::vector<DefectRun> runs = {run_with(1, h.bulk_energy - 9.0 + 0.8),
                                         run_with(0, h.bulk_energy - 9.0 + 1.0),
                                         run_with(-1, h.bulk_energy - 9.0 + 1.5)};
    const auto d = build_diagram(runs, h);
    REQUIRE(d.transitions.size() == 2);
    CHECK(d.stable_charge(d.transitions[0].fermi) == 0);
    CHECK(d.stable_charge(d.transitions[1].fermi) == 0);
    CHECK(d.stable_charge(0.1) == 1);
    CHECK(d.stable_charge(0.9) == -1);
  }

  TEST_CASE("duplicates keep the lowest energy; invalid inputs are rejected") {
    const HostReference h = simple_host();
    std::vector<DefectRun> runs = {run_with(0, -108.0), run_with(0, -108.5), run_with(-1, -108.0)};
    const auto d = build_diagram(runs, h);
    CHECK(d.warnings.size() == 1);
    CHECK(d.line(0)->intercept == doctest::Approx(-108.5 + 100 + 9));
    CHECK_THROWS_AS(build_diagram(std::vector<DefectRun>{}, h), ValidationError);
    CHECK_THROWS_AS(build_diagram(std::vector<DefectRun>{run_with(4, -100)}, h), ValidationError);
    CHECK_THROWS_AS(build_diagram(std::vector<DefectRun>{run_with(0, -100, {})}, h), ValidationError);
    HostReference bad = h;
    bad.gap = 0.0;
    CHECK_THROWS_AS(build_diagram(std::vector<DefectRun>{run_with(0, -100)}, bad), ValidationError);
  }

  TEST_CASE("tabulated diagram") {
    const auto f = fixtures::ci_topology();
    const auto d = build_diagram(f.runs, f.host);
    const auto t = tabulate(d, 2001);
    REQUIRE(t.rows.size() == 2001);
    CHECK(t.rows.front().fermi == 0.0);
    CHECK(t.rows.back().fermi == f.host.gap);
    for (const auto& row : t.rows) {
      CHECK(row.lines.size() == 7);
      CHECK(row.envelope == d.envelope_value(row.fermi));
    }
    CHECK_THROWS_AS(tabulate(d, 1), ValidationError);
  }

  TEST_CASE("delta KS") {
    DefectRun r = run_with(-1, -100);
    r.eigenvalues[Spin::down] = {{10, 0.100, 1.0}, {11, 1.068, 0.0}};
    CHECK(delta_ks(r, 10, 11, Spin::down) == doctest::Approx(0.968).epsilon(1e-12));
    CHECK_THROWS_AS(delta_ks(r, 10, 10, Spin::down), ValidationError);
    CHECK_THROWS_AS(delta_ks(r, 10, 11, Spin::up), ValidationError);
    CHECK_THROWS_AS(delta_ks(r, 10, 12, Spin::down), ValidationError);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5, 5);
    DefectRun rr = run_with(0, -100);
    for (int i = 0; i < 20; ++i) rr.eigenvalues[Spin::up].push_back({i, u(rng), i < 10 ? 1.0 : 0.0});
    for (int i = 0; i < 19; ++i) {
      const auto& lv = rr.eigenvalues[Spin::up];
      CHECK(delta_ks(rr, i, i + 1, Spin::up) == lv[i + 1].energy - lv[i].energy);
    }
  }
}
