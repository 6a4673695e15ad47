#include <random>

#include "doctest.h"
#include "pslab/fixtures.hpp"
#include "pslab/hilbert.hpp"
#include "test_support.hpp"

using namespace pslab;
using namespace pslab::testing;

namespace {

Vector vec2(double x, double y) {
  Vector v(2);
  v << x, y;
  return v;
}

ConvexDomain unit_square() {
  return ConvexDomain::polytope({vec2(-1, -1), vec2(1, -1), vec2(1, 1), vec2(-1, 1)});
}

GeneratorSet klein_schottky() { return fixtures::schottky_so21(); }

Vector random_disk_point(std::mt19937_64& rng, double rmax) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double r = rmax * std::sqrt(ud(rng));
  double a = 2.0 * M_PI * ud(rng);
  return vec2(r * std::cos(a), r * std::sin(a));
}

}  // namespace

TEST_CASE("chord on the unit ball and the square") {
  auto disk = klein_disk();
  auto [a, b] = chord(disk, vec2(0, 0), vec2(0.5, 0));
  CHECK((a - vec2(-1, 0)).norm() <= 1e-12);
  CHECK((b - vec2(1, 0)).norm() <= 1e-12);

  auto square = unit_square();
  auto [sa, sb] = chord(square, vec2(0, 0), vec2(0.5, 0.5));
  CHECK((sa - vec2(-1, -1)).norm() <= 1e-12);
  CHECK((sb - vec2(1, 1)).norm() <= 1e-12);

  CHECK_THROWS_AS(chord(disk, vec2(0.1, 0.2), vec2(0.1, 0.2)), CoincidentPoints);

  std::mt19937_64 rng(7);
  auto ball3 = ConvexDomain::ball((Vector(3) << 0.5, -1.0, 2.0).finished(), 1.7);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 100; ++k) {
    Vector p(3), q(3);
    for (int i = 0; i < 3; ++i) p[i] = nd(rng);
    for (int i = 0; i < 3; ++i) q[i] = nd(rng);
    p = ball3.center + 0.6 * ball3.radius * p / (1.0 + p.norm());
    q = ball3.center + 0.6 * ball3.radius * q / (1.0 + q.norm());
    if ((p - q).norm() < 1e-6) continue;
    auto [ra, rb] = chord(ball3, p, q);
    CHECK(std::abs((ra - ball3.center).norm() - ball3.radius) <= 1e-10);
    CHECK(std::abs((rb - ball3.center).norm() - ball3.radius) <= 1e-10);
  }
}

TEST_CASE("hilbert distance: radial artanh formula and coincident points") {
  auto disk = klein_disk();
  CHECK(hilbert_distance(disk, vec2(0.3, -0.2), vec2(0.3, -0.2)) == 0.0);
  for (double r : {0.1, 0.5, 0.9, 0.99}) {
    double d = hilbert_distance(disk, vec2(0, 0), vec2(r, 0));
    CHECK(std::abs(d - std::atanh(r)) <= 1e-10);
  }
}

TEST_CASE("triangle inequality on random triples") {
  std::mt19937_64 rng(11);
  auto disk = klein_disk();
  auto square = unit_square();
  for (const auto& dom : {disk, square}) {
    for (int k = 0; k < 1000; ++k) {
      Vector p = random_disk_point(rng, 0.98);
      Vector q = random_disk_point(rng, 0.98);
      Vector r = random_disk_point(rng, 0.98);
      double slack = hilbert_distance(dom, p, q) + hilbert_distance(dom, q, r) -
                     hilbert_distance(dom, p, r);
      CHECK(slack >= -1e-9);
    }
  }
}

TEST_CASE("straight segments are geodesics (collinear additivity)") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  auto disk = klein_disk();
  auto square = unit_square();
  for (const auto& dom : {disk, square}) {
    for (int k = 0; k < 200; ++k) {
      Vector p = random_disk_point(rng, 0.95);
      Vector r = random_disk_point(rng, 0.95);
      if ((p - r).norm() < 1e-3) continue;
      Vector q = p + ud(rng) * (r - p);
      double lhs = hilbert_distance(dom, p, q) + hilbert_distance(dom, q, r);
      CHECK(std::abs(lhs - hilbert_distance(dom, p, r)) <= 1e-9);
    }
  }
}

TEST_CASE("projective invariance of the metric") {
  std::mt19937_64 rng(17);

  // Square under a generic affine map: the image is the polytope of the
  // mapped vertices.
  Matrix a(2, 2);
  a << 1.3, 0.4, -0.2, 0.8;
  Vector shift = vec2(0.7, -1.1);
  auto square = unit_square();
  std::vector<Vector> mapped;
  for (const auto& v : square.vertices) mapped.push_back(a * v + shift);
  auto image = ConvexDomain::polytope(mapped);
  for (int k = 0; k < 200; ++k) {
    Vector p = random_disk_point(rng, 0.97);
    Vector q = random_disk_point(rng, 0.97);
    if ((p - q).norm() < 1e-6) continue;
    double d0 = hilbert_distance(square, p, q);
    double d1 = hilbert_distance(image, a * p + shift, a * q + shift);
    CHECK(std::abs(d0 - d1) <= 1e-8);
  }

  // Ball under a similarity.
  double c = std::cos(0.6), s = std::sin(0.6), scale = 2.3;
  Matrix rot(2, 2);
  rot << c, -s, s, c;
  auto disk = klein_disk();
  auto disk_image = ConvexDomain::ball(vec2(-2.0, 0.5), scale);
  for (int k = 0; k < 200; ++k) {
    Vector p = random_disk_point(rng, 0.97);
    Vector q = random_disk_point(rng, 0.97);
    if ((p - q).norm() < 1e-6) continue;
    double d0 = hilbert_distance(disk, p, q);
    double d1 = hilbert_distance(disk_image, scale * (rot * p) + disk_image.center,
                                 scale * (rot * q) + disk_image.center);
    CHECK(std::abs(d0 - d1) <= 1e-8);
  }
}

TEST_CASE("ball metric matches the hyperbolic (hyperboloid-model) metric") {
  std::mt19937_64 rng(19);
  auto dom = ConvexDomain::ball(vec2(0.4, -0.7), 1.9);
  for (int k = 0; k < 300; ++k) {
    Vector p = dom.center + 1.9 * random_disk_point(rng, 0.95);
    Vector q = dom.center + 1.9 * random_disk_point(rng, 0.95);
    if ((p - q).norm() < 1e-8) continue;
    double cross_ratio = hilbert_distance(dom, p, q);
    double hyperboloid = std::acosh(std::max(
        1.0, pslab::detail::mink(pslab::detail::klein_lift(dom, p),
                                 pslab::detail::klein_lift(dom, q))));
    CHECK(std::abs(cross_ratio - hyperboloid) <= 1e-8);
  }
}

TEST_CASE("hilbert critical exponent: cyclic, Schottky, and preservation") {
  auto disk = klein_disk();
  Vector o = vec2(0, 0);

  GeneratorSet cyc({{"a", fixtures::so21_embed(fixtures::sl2_hyperbolic(3.0))}});
  auto est = hilbert_critical_exponent(disk, cyc, o, 20);
  CHECK(est.delta_hat <= 0.1);

  auto schottky = klein_schottky();
  auto est2 = hilbert_critical_exponent(disk, schottky, o, 10);
  CHECK(est2.delta_hat > 0.0);
  CHECK(est2.delta_hat <= 1.05);  // Tholozan bound d - 2 for d = 3, plus margin

  CHECK_THROWS_AS(hilbert_critical_exponent(disk, fixtures::zariski_schottky(), o, 3),
                  DomainNotPreserved);
}

TEST_CASE("Klein-disk displacements equal the linear-pipeline phi_H values") {
  auto disk = klein_disk();
  auto gens = klein_schottky();
  Vector o = vec2(0, 0);
  auto orbit = hilbert_orbit(disk, gens, o, 6);
  Functional phi_h = 0.5 * (Functional::omega(3, 1) + Functional::omega(3, 2));

  size_t i = 0;
  enumerate_visit(gens, 6, [&](const OrbitElement& e) {
    REQUIRE(orbit.words[i] == e.word);
    double hilbert = orbit_distance(disk, orbit, i, o);
    CHECK(std::abs(hilbert - phi_h(e.kappa)) <= 1e-6);
    ++i;
  });
  CHECK(i == orbit.words.size());
}

TEST_CASE("kaimanovich nu: normalization and total-variation bound") {
  auto disk = klein_disk();
  auto gens = klein_schottky();
  Vector o = vec2(0, 0);
  auto orbit = hilbert_orbit(disk, gens, o, 6);
  double delta_hat = hilbert_critical_exponent(disk, gens, o, 8).delta_hat;
  double delta = delta_hat + 0.1;

  auto nu_o = kaimanovich_nu(disk, orbit, delta, o);
  double total = 0.0;
  for (double w : nu_o.weights) total += w;
  CHECK(std::abs(total - 1.0) <= 1e-12);
  CHECK(measure_distance(nu_o, kaimanovich_nu(disk, orbit, delta, o)) == 0.0);

  std::mt19937_64 rng(23);
  int tested = 0;
  while (tested < 100) {
    Vector p = random_disk_point(rng, 0.5);
    Vector q = random_disk_point(rng, 0.5);
    double d = hilbert_distance(disk, p, q);
    if (d > 1.0 || d < 1e-6) continue;
    double tv = measure_distance(kaimanovich_nu(disk, orbit, delta, p),
                                 kaimanovich_nu(disk, orbit, delta, q));
    CHECK(tv <= 2.0 * delta * std::exp(2.0 * delta) * d);
    ++tested;
  }
}

TEST_CASE("lambda_n: reduction, normalization, and basepoint decay") {
  auto disk = klein_disk();
  auto gens = klein_schottky();
  Vector o = vec2(0, 0);
  auto orbit = hilbert_orbit(disk, gens, o, 6);
  double delta = hilbert_critical_exponent(disk, gens, o, 8).delta_hat + 0.1;

  Vector p = vec2(0.1, 0.05);
  Vector q = vec2(-0.2, 0.15);
  Vector x = vec2(1.0, 0.0);  // boundary fixed point of the first generator

  auto nu_p = kaimanovich_nu(disk, orbit, delta, p);
  auto lam0 = lambda_n(disk, orbit, delta, p, x, 0);
  CHECK(measure_distance(nu_p, lam0) <= 1e-14);

  auto lam10_p = lambda_n(disk, orbit, delta, p, x, 10);
  double total = 0.0;
  for (double w : lam10_p.weights) total += w;
  CHECK(std::abs(total - 1.0) <= 1e-12);

  auto lam10_q = lambda_n(disk, orbit, delta, q, x, 10);
  auto lam40_p = lambda_n(disk, orbit, delta, p, x, 40);
  auto lam40_q = lambda_n(disk, orbit, delta, q, x, 40);
  double d10 = measure_distance(lam10_p, lam10_q);
  double d40 = measure_distance(lam40_p, lam40_q);
  CHECK(d40 <= 0.5 * d10);
}
