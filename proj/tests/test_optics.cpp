#include <doctest.h>

#include <random>

#include "defect_forge/constants.hpp"
#include "defect_forge/errors.hpp"
#include "defect_forge/optics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace defect_forge;

namespace {

const OpticsTableRow& find_row(const std::vector<OpticsTableRow>& rows, const std::string& defect, int q, Spin s) {
  for (const auto& r : rows) {
    if (r.defect == defect && r.charge == q && r.spin == s) return r;
  }
  throw std::runtime_error("row not found");
}

GridFunction scaled(const GridFunction& g, std::complex<double> factor) {
  std::vector<std::complex<double>> v = g.values();
  for (auto& x : v) x *= factor;
  return GridFunction(g.cell(), g.dims(), std::move(v));
}

}  // namespace

TEST_SUITE("optics") {
  TEST_CASE("ZPL from total energies") {
    CHECK(display_mev(zpl(-5431.431, -5432.000)) == 569);
    CHECK(zpl(-5431.431, -5432.000) == doctest::Approx(569.0).epsilon(1e-9));
    CHECK_THROWS_AS(zpl(-10.0, -10.0), ValidationError);
    CHECK_THROWS_AS(zpl(-10.5, -10.0), ValidationError);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-6000, -5000), d(0.01, 2.0);
    for (int i = 0; i < 100; ++i) {
      const double g = u(rng), e = g + d(rng);
      CHECK(zpl(e, g) == 1000.0 * (e - g));
    }
  }

  TEST_CASE("relative shifts") {
    CHECK(relative_shift(571.0, 569.0) == 2.0);
    CHECK(relative_shift(655.0, 569.0) == 86.0);
    CHECK(relative_shift(569.0, 569.0) == 0.0);
    CHECK_THROWS_AS(relative_shift(569.0, 0.0), ValidationError);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(100, 1500);
    for (int i = 0; i < 100; ++i) {
      const double a = u(rng), b = u(rng);
      CHECK(relative_shift(a, b) == -relative_shift(b, a));
    }
    const OpticsRecord rec{"Ci", -1, Spin::down, 571.0, 0.169e-5, 0.0};
    CHECK(relative_shift(rec, 569.0) == 2.0);
    CHECK_THROWS_AS((OpticsRecord{"x", 0, Spin::none, 0.0, 0.0, 0.0}.validate()), ValidationError);
    CHECK_THROWS_AS((OpticsRecord{"x", 0, Spin::none, 10.0, -1.0, 0.0}.validate()), ValidationError);
  }

  TEST_CASE("bundled table: one mismatch, one reconstruction") {
    const auto rows = bundled_table1();
    CHECK(rows.size() == 13);
    const auto flagged = table_consistency_check(rows, kTable1Reference);
    REQUIRE(flagged.size() == 1);
    const auto& bad = rows[flagged[0].row];
    CHECK(bad.defect == "Ci+H Type 3");
    CHECK(bad.charge == 0);
    CHECK(bad.spin == Spin::down);
    CHECK(flagged[0].discrepancy == doctest::Approx(27.0));

    const auto audits = audit_table(rows, kTable1Reference);
    const auto& type2 = find_row(rows, "Ci+H Type 2", 0, Spin::down);
    CHECK(*type2.zpl - kTable1Reference == *type2.stated_shift);
    for (const auto& a : audits) {
      if (rows[a.row].defect == "Ci+H Type 1" && rows[a.row].spin == Spin::down) {
        CHECK(a.status == RowStatus::reconstructed);
        CHECK(a.zpl == 1032.0);
      }
      if (a.status == RowStatus::consistent) CHECK(display_mev(a.recomputed_shift) == *rows[a.row].stated_shift);
    }
  }

  TEST_CASE("wavelength and energy") {
    CHECK(std::abs(wavelength_to_energy(1448.0) - 856.0) < 1.0);
    const double ref = wavelength_to_energy(1448.0);
    const std::vector<std::pair<double, long>> peaks = {
        {1415.4, 20}, {1441.7, 4}, {1444.3, 2}, {1450.8, -2}, {1453.6, -3}};
    for (const auto& [nm, shift] : peaks) {
      CHECK(std::abs(wavelength_to_energy(nm) - ref - shift) <= 1.0);
    }
    for (double nm : {900.0, 1234.5, 1448.0, 1600.0}) {
      CHECK(std::abs(energy_to_wavelength(wavelength_to_energy(nm)) / nm - 1.0) < 1e-9);
    }
    CHECK_THROWS_AS(wavelength_to_energy(0.0), ValidationError);
    CHECK_THROWS_AS(wavelength_to_energy(-5.0), ValidationError);
    CHECK_THROWS_AS(energy_to_wavelength(0.0), ValidationError);
  }

  TEST_CASE("grid validation") {
    const CrystalCell cell(5.0 * Eigen::Matrix3d::Identity());
    CHECK_THROWS_AS(GridFunction(cell, {2, 2, 2}, std::vector<std::complex<double>>(7, 1.0)), ValidationError);
    CHECK_THROWS_AS(GridFunction(cell, {2, 2, 2}, std::vector<std::complex<double>>(8, 0.0)), ValidationError);
    CHECK_THROWS_AS(GridFunction(cell, {0, 2, 2}, {}), ValidationError);
    const GridFunction a(cell, {2, 2, 2}, std::vector<std::complex<double>>(8, 1.0));
    const GridFunction b(cell, {2, 2, 4}, std::vector<std::complex<double>>(16, 1.0));
    CHECK_THROWS_AS(transition_dipole(a, b), ValidationError);
  }

  TEST_CASE("diagonal element vanishes") {
    const auto m = fixtures::mirror_grids(32);
    const auto r = transition_dipole(m.final_state, m.final_state);
    CHECK(r.total < 1e-20);
    CHECK(r.overlap == doctest::Approx(1.0));
    CHECK_FALSE(r.orthogonal);
  }

  TEST_CASE("hydrogen 1s -> 2p_z against radial quadrature") {
    const double expected_bohr = oracle::hydrogen_1s_2pz_dipole_bohr();
    CHECK(expected_bohr == doctest::Approx(128.0 * std::sqrt(2.0) / 243.0).epsilon(1e-9));
    const double debye = expected_bohr * constants::kBohrAngstrom * constants::kDebyePerEAngstrom;
    const double expected = debye * debye;
    CHECK(expected == doctest::Approx(3.585).epsilon(1e-3));

    const auto h = fixtures::hydrogen_grids(30.0, 96);
    const auto r = transition_dipole(h.s1, h.p2z);
    CHECK(std::abs(r.total - expected) / expected < 0.02);
    CHECK(r.orthogonal);
    CHECK(r.components[2] / r.total > 1.0 - 1e-9);
  }

  TEST_CASE("mirror fixture: components outside the odd direction vanish") {
    const auto m = fixtures::mirror_grids(48);
    const auto r = transition_dipole(m.initial, m.final_state);
    REQUIRE(r.total > 0.0);
    CHECK(r.orthogonal);
    CHECK(r.components[2] < 1e-3 * r.total);
    CHECK(r.components[0] < 1e-3 * r.total);
    CHECK(r.components[1] > 0.99 * r.total);
  }

  TEST_CASE("phase and exchange invariance") {
    const auto m = fixtures::mirror_grids(32);
    const auto base = transition_dipole(m.initial, m.final_state);
    const auto swapped = transition_dipole(m.final_state, m.initial);
    CHECK(std::abs(swapped.total - base.total) <= 1e-12 * base.total);
    for (double theta : {0.3, 1.7, -2.9}) {
      const auto rotated = scaled(m.initial, std::polar(1.0, theta));
      const auto r = transition_dipole(rotated, scaled(m.final_state, std::polar(1.0, -0.5 * theta)));
      CHECK(std::abs(r.total - base.total) <= 1e-12 * base.total);
    }
  }

  TEST_CASE("grid refinement changes smooth results by < 0.5%") {
    const auto coarse = transition_dipole(fixtures::mirror_grids(32).initial, fixtures::mirror_grids(32).final_state);
    const auto m = fixtures::mirror_grids(64);
    const auto fine = transition_dipole(m.initial, m.final_state);
    CHECK(std::abs(fine.total - coarse.total) / fine.total < 0.005);
  }

  TEST_CASE("spin labels") {
    CHECK(spin_from_string("N/A") == Spin::none);
    CHECK(spin_from_string("Down") == Spin::down);
    CHECK(spin_from_string("up") == Spin::up);
    CHECK_THROWS_AS(spin_from_string("sideways"), ValidationError);
  }
}
