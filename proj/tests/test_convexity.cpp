#include <random>

#include "doctest.h"
#include "pslab/convexity.hpp"
#include "pslab/fixtures.hpp"
#include "test_support.hpp"

using namespace pslab;
using namespace pslab::testing;

namespace {

CartanVector chamber(std::initializer_list<double> t) {
  Vector v(static_cast<int>(t.size()));
  int i = 0;
  for (double x : t) v[i++] = x;
  auto h = CartanVector::from_entries(std::move(v));
  h.chamber = true;
  return h;
}

// Independent oracle for the comparison slack: the telescoped form
// 1/2 sum_{i=2}^{min(p+1, d-p-1)} (t_i - t_{d+1-i}).
double slack_closed_form(const CartanVector& x, int p) {
  const int d = x.dim();
  double s = 0.0;
  for (int i = 2; i <= std::min(p + 1, d - p - 1); ++i)
    s += x.entries[i - 1] - x.entries[d - i];
  return 0.5 * s;
}

}  // namespace

TEST_CASE("hilbert functional: coefficients and the (2,0,-2) value") {
  for (int d = 3; d <= 6; ++d) {
    auto f = hilbert_functional(d);
    auto g = 0.5 * (Functional::omega(d, 1) + Functional::omega(d, d - 1));
    CHECK(f.weight_coeffs == g.weight_coeffs);
  }
  CHECK(hilbert_functional(3)(chamber({2, 0, -2})) == 2.0);
  CHECK_THROWS_AS(hilbert_functional(2), Error);
}

TEST_CASE("phi_p / phi_bar_p: d = 5, p = 2 worked examples") {
  auto x = chamber({2, 1, 0, -1, -2});
  CHECK(phi_p(5, 2)(x) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(phi_bar_p(5, 2)(x) == doctest::Approx(3.0).epsilon(1e-12));

  auto cmp = functional_comparison(x, 2);
  CHECK(cmp.lhs == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(cmp.rhs == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(cmp.slack == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(cmp.middle_equal);

  auto y = chamber({4, 0, 0, 0, -4});
  auto cmp_y = functional_comparison(y, 2);
  CHECK(std::abs(cmp_y.slack) <= 1e-12);
  CHECK(cmp_y.middle_equal);

  for (double c : {0.5, 1.0, 7.25}) {
    auto z = chamber({c, 0, 0, 0, -c});
    CHECK(std::abs(functional_comparison(z, 2).slack) <= 1e-12);
  }

  CHECK_THROWS_AS(phi_p(5, 0), Error);
  CHECK_THROWS_AS(phi_p(5, 4), Error);
  CHECK_THROWS_AS(phi_bar_p(4, 3), Error);
  Vector bad(5);
  bad << 0, 1, 0, 0, -1;
  CHECK_THROWS_AS(functional_comparison(CartanVector::from_entries(bad), 2), Error);
}

TEST_CASE("opposition involution swaps phi_p and phi_bar_p exactly") {
  for (int d = 3; d <= 7; ++d)
    for (int p = 1; p <= d - 2; ++p) {
      CHECK(istar(phi_p(d, p)).weight_coeffs == phi_bar_p(d, p).weight_coeffs);
      CHECK(istar(phi_bar_p(d, p)).weight_coeffs == phi_p(d, p).weight_coeffs);
    }
}

TEST_CASE("comparison slack matches the closed form on random chamber points") {
  std::mt19937_64 rng(29);
  for (int d = 3; d <= 7; ++d)
    for (int p = 1; p <= d - 2; ++p)
      for (int k = 0; k < 200; ++k) {
        auto x = random_chamber_point(rng, d);
        auto cmp = functional_comparison(x, p);
        CHECK(cmp.slack >= -1e-10);
        CHECK(std::abs(cmp.slack - slack_closed_form(x, p)) <= 1e-10);
      }
}

TEST_CASE("d = 4, p = 2: the slack vanishes identically") {
  // The telescoped sum is empty here, so equality holds even with t2 != t3.
  std::mt19937_64 rng(31);
  for (int k = 0; k < 500; ++k) {
    auto x = random_chamber_point(rng, 4);
    auto cmp = functional_comparison(x, 2);
    CHECK(std::abs(cmp.slack) <= 1e-12);
  }
  auto x = chamber({3, 1, -1, -3});
  CHECK_FALSE(functional_comparison(x, 2).middle_equal);
  CHECK(std::abs(functional_comparison(x, 2).slack) <= 1e-12);
}

TEST_CASE("self-dual Cartan spectra: phi_p equals phi_bar_p on SO(2,1) orbits") {
  auto orbit = enumerate(fixtures::schottky_so21(), 5);
  auto f = phi_p(3, 1);
  auto g = phi_bar_p(3, 1);
  for (const auto& e : orbit.elements) CHECK(std::abs(f(e.kappa) - g(e.kappa)) <= 1e-8);
}

TEST_CASE("convexity gap: degenerate split recovers a zero gap") {
  auto orbit = enumerate(fixtures::zariski_schottky(), 4);
  auto phi = Functional::omega(3, 1);
  auto rep = convexity_gap(orbit, phi, phi, phi, 0.5, 0.5);
  CHECK(rep.premise_ok);
  CHECK(std::abs(rep.premise_min) <= 1e-12);
  CHECK(rep.bound == doctest::Approx(rep.est_phi.delta_hat).epsilon(1e-12));
  CHECK(std::abs(rep.gap) <= rep.noise.estimator);
}

TEST_CASE("convexity gap: phi_H against its omega halves on the Zariski-dense fixture") {
  auto orbit = enumerate(fixtures::zariski_schottky(), 5);
  auto rep = convexity_gap(orbit, hilbert_functional(3), Functional::omega(3, 1),
                           Functional::omega(3, 2), 0.5, 0.5);
  // phi_H = (omega_1 + omega_2)/2 exactly, so the domination premise is tight.
  CHECK(rep.premise_ok);
  CHECK(std::abs(rep.premise_min) <= 1e-10);
  CHECK(rep.est_phi.delta_hat <= rep.bound + rep.noise.estimator);
  double stderr_combined = rep.est_phi.slope_stderr + rep.est_phi1.slope_stderr +
                           rep.est_phi2.slope_stderr;
  CHECK(rep.gap > 2.0 * stderr_combined);
}

TEST_CASE("holder bound: normalized ingredients and the skipped path") {
  auto orbit = enumerate(fixtures::zariski_schottky(), 4);
  auto w1 = Functional::omega(3, 1);
  auto w2 = Functional::omega(3, 2);
  double d1 = critical_exponent(orbit, w1, ExponentMethod::CountRegression).delta_hat;
  double d2 = critical_exponent(orbit, w2, ExponentMethod::CountRegression).delta_hat;
  // Rescale so both ingredient exponents are exactly 1 (delta^{c phi} = delta^phi / c).
  auto f1 = d1 * w1;
  auto f2 = d2 * w2;

  auto same = holder_bound_check(orbit, f1, f1, f2, 1.0);
  CHECK(same.premise_ok);
  CHECK(same.passed);
  CHECK(std::abs(same.margin) <= same.noise.estimator);
  CHECK(same.shift_c <= 1e-12);

  auto mixed = holder_bound_check(orbit, 0.5 * f1 + 0.5 * f2, f1, f2, 0.5);
  CHECK(mixed.premise_ok);
  CHECK(mixed.passed);
  CHECK(mixed.delta_hat <= 1.0 + mixed.noise.estimator);
  CHECK(mixed.shift_c <= 1e-10);

  auto skipped = holder_bound_check(orbit, w1, w1, w2, 0.5);
  CHECK_FALSE(skipped.premise_ok);
  CHECK_FALSE(skipped.passed);
  CHECK_FALSE(skipped.diagnostic.empty());
}

TEST_CASE("middle eigenvalue probe: rank-one locus versus the Zariski-dense fixture") {
  auto so21 = fixtures::schottky_so21();
  CHECK(middle_eigenvalue_probe(so21, enumerate(so21, 6)) <= 1e-6);
  auto zar = fixtures::zariski_schottky();
  CHECK(middle_eigenvalue_probe(zar, enumerate(zar, 4)) > 0.1);
  OrbitBall trivial;
  trivial.elements.push_back(element_from_word(so21, {}));
  CHECK(middle_eigenvalue_probe(so21, trivial) == 0.0);
}

TEST_CASE("level-set scan: scaling law, error cells, and midpoint convexity") {
  auto orbit = enumerate(fixtures::zariski_schottky(), 4);
  auto w1 = Functional::omega(3, 1);
  auto w2 = Functional::omega(3, 2);
  auto cells = q_levelset_scan(orbit, {w1, 2.0 * w1, w2, 0.5 * (w1 + w2), -1.0 * w1});
  REQUIRE(cells.size() == 5);

  REQUIRE(cells[0].ok);
  REQUIRE(cells[1].ok);
  CHECK(std::abs(cells[1].est.delta_hat - 0.5 * cells[0].est.delta_hat) <=
        kNoise.scaling);

  CHECK_FALSE(cells[4].ok);
  CHECK_FALSE(cells[4].error.empty());

  // Midpoint convexity of delta on the positive cone: the exponent of the
  // average does not exceed the larger of the two endpoint exponents.
  REQUIRE(cells[2].ok);
  REQUIRE(cells[3].ok);
  double worst = std::max(cells[0].est.delta_hat, cells[2].est.delta_hat);
  CHECK(cells[3].est.delta_hat <= worst + kNoise.estimator);
}
