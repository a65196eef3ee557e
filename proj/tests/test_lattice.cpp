#include <doctest.h>

#include <random>

#include "defect_forge/errors.hpp"
#include "defect_forge/lattice.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace defect_forge;

namespace {

Eigen::Matrix3d random_lattice(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Eigen::Matrix3d m;
  do {
    m = 4.0 * Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) += u(rng);
  } while (m.determinant() < 5.0);
  return m;
}

}  // namespace

TEST_SUITE("lattice") {
  TEST_CASE("cubic reciprocal lattice") {
    const CrystalCell cell(5.43 * Eigen::Matrix3d::Identity());
    CHECK((reciprocal(cell) - (2 * M_PI / 5.43) * Eigen::Matrix3d::Identity()).norm() < 1e-14);
  }

  TEST_CASE("reciprocal against a cofactor-expansion inverse") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const CrystalCell cell(random_lattice(rng));
      const Eigen::Matrix3d b = reciprocal(cell);
      const Eigen::Matrix3d expected = 2 * M_PI * oracle::cofactor_inverse(cell.lattice().transpose());
      CHECK((b - expected).norm() / expected.norm() < 1e-12);
      const Eigen::Matrix3d dots = cell.lattice() * b.transpose();
      CHECK((dots - 2 * M_PI * Eigen::Matrix3d::Identity()).norm() < 1e-12 * 2 * M_PI);
    }
  }

  TEST_CASE("reciprocal of the reciprocal recovers the lattice") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::Matrix3d l = random_lattice(rng);
      CHECK((reciprocal(reciprocal(l)) - l).norm() < 1e-10 * l.norm());
    }
  }

  TEST_CASE("invalid cells are rejected") {
    Eigen::Matrix3d singular;
    singular << 1, 0, 0, 0, 1, 0, 1, 1, 0;
    CHECK_THROWS_AS(CrystalCell{singular}, ValidationError);
    Eigen::Matrix3d left = Eigen::Matrix3d::Identity();
    left(2, 2) = -1;
    CHECK_THROWS_AS(CrystalCell{left}, ValidationError);
    Eigen::Matrix3d eps = Eigen::Matrix3d::Identity();
    eps(0, 1) = 0.5;
    CHECK_THROWS_AS((CrystalCell{Eigen::Matrix3d::Identity(), {}, eps}), ValidationError);
    CHECK_THROWS_AS((CrystalCell{Eigen::Matrix3d::Identity(), {}, -Eigen::Matrix3d::Identity()}), ValidationError);
  }

  TEST_CASE("fractional coordinates are wrapped to [0,1)") {
    const CrystalCell cell(Eigen::Matrix3d::Identity(), {{"A", Eigen::Vector3d(1.0, -0.25, 2.5)}});
    CHECK(cell.sites()[0].frac.isApprox(Eigen::Vector3d(0.0, 0.75, 0.5)));
    const Eigen::Vector3d w = wrap_fractional(Eigen::Vector3d(-1e-18, 0.999999999999999999, 3.0));
    for (int i = 0; i < 3; ++i) {
      CHECK(w[i] >= 0.0);
      CHECK(w[i] < 1.0);
    }
  }

  TEST_CASE("frac_to_cart") {
    const CrystalCell cubic(5.43 * Eigen::Matrix3d::Identity());
    CHECK(frac_to_cart(cubic, Eigen::Vector3d::Zero()).norm() == 0.0);
    CHECK((frac_to_cart(cubic, Eigen::Vector3d::Constant(0.5)) - Eigen::Vector3d::Constant(2.715)).norm() < 1e-12);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 50; ++trial) {
      const CrystalCell cell(random_lattice(rng));
      const Eigen::Vector3d x(u(rng), u(rng), u(rng)), y(u(rng), u(rng), u(rng));
      CHECK((cart_to_frac(cell, frac_to_cart(cell, x)) - x).norm() < 1e-12);
      const double a = u(rng), b = u(rng);
      const Eigen::Vector3d lhs = frac_to_cart(cell, a * x + b * y);
      const Eigen::Vector3d rhs = a * frac_to_cart(cell, x) + b * frac_to_cart(cell, y);
      CHECK((lhs - rhs).norm() < 1e-12 * (1 + lhs.norm()));
    }
  }

  TEST_CASE("supercell counting and identity") {
    const CrystalCell si = fixtures::silicon_primitive();
    const CrystalCell big = supercell(si, 3, 3, 3);
    CHECK(big.sites().size() == 54);
    CHECK(std::abs(big.volume() - 27 * si.volume()) < 1e-12 * big.volume());
    CHECK(supercell(si, 1, 1, 1) == si);
    CHECK_THROWS_AS(supercell(si, 0, 1, 1), ValidationError);
    CHECK_THROWS_AS(supercell(si, 1, -2, 1), ValidationError);
  }

  TEST_CASE("supercell (2,1,1) holds every site at x/2 and x/2 + 1/2") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Site> sites;
    for (int i = 0; i < 5; ++i) sites.push_back({"S" + std::to_string(i), Eigen::Vector3d(u(rng), u(rng), u(rng))});
    const CrystalCell cell(random_lattice(rng), sites);
    const CrystalCell big = supercell(cell, 2, 1, 1);
    CHECK(std::abs(big.volume() - 2 * cell.volume()) < 1e-12 * big.volume());
    CHECK((big.lattice().row(0) - 2 * cell.lattice().row(0)).norm() < 1e-14);
    REQUIRE(big.sites().size() == 10);
    for (const auto& s : cell.sites()) {
      for (double shift : {0.0, 0.5}) {
        const Eigen::Vector3d want(s.frac.x() / 2 + shift, s.frac.y(), s.frac.z());
        const bool found = std::any_of(big.sites().begin(), big.sites().end(), [&](const Site& t) {
          return t.species == s.species && (t.frac - want).norm() < 1e-12;
        });
        CHECK(found);
      }
    }
  }

  TEST_CASE("minimum image and Wigner-Seitz radius") {
    const CrystalCell cubic(10.0 * Eigen::Matrix3d::Identity());
    CHECK((minimum_image(cubic, Eigen::Vector3d(0.9, -0.8, 0.3)) - Eigen::Vector3d(-1, 2, 3)).norm() < 1e-12);
    CHECK(std::abs(wigner_seitz_radius(cubic) - 5.0) < 1e-12);
    // fcc primitive: nearest lattice vector has length a/sqrt(2).
    CHECK(std::abs(wigner_seitz_radius(fixtures::silicon_primitive()) - 0.5 * 5.43 / std::sqrt(2.0)) < 1e-12);
  }
}
