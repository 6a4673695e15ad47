#include <unsupported/Eigen/Polynomials>

#include "doctest.h"
#include "pslab/cartan.hpp"
#include "pslab/fixtures.hpp"
#include "test_support.hpp"

using namespace pslab;
using testing::random_chamber_point;
using testing::random_rotation;
using testing::random_sl;

namespace {

Matrix diag3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v.asDiagonal();
}

// Independent oracle: entries of kappa(g) are half the logs of the roots of
// the characteristic polynomial of g^T g.
Vector char_poly_log_roots(const Matrix& g) {
  Matrix m = g.transpose() * g;
  const int d = static_cast<int>(m.rows());
  // Characteristic polynomial coefficients via Faddeev-LeVerrier.
  Vector coeffs(d + 1);  // c[k] multiplies x^k
  coeffs[d] = 1.0;
  Matrix mk = Matrix::Identity(d, d);
  for (int k = 1; k <= d; ++k) {
    mk = m * mk;
    double c = -mk.trace() / k;
    coeffs[d - k] = c;
    mk += c * Matrix::Identity(d, d);
  }
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
  Vector out(d);
  int i = 0;
  for (const auto& r : solver.roots()) out[i++] = 0.5 * std::log(std::abs(r.real()));
  std::sort(out.data(), out.data() + d, std::greater<double>());
  return out;
}

}  // namespace

TEST_CASE("cartan_projection basics") {
  CHECK(cartan_projection(Matrix::Identity(3, 3)).entries.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));

  auto k = cartan_projection(diag3(std::exp(2.0), 1.0, std::exp(-2.0)));
  CHECK(k.entries[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(k.entries[1] == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(k.entries[2] == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(k.chamber);
}

TEST_CASE("cartan_projection matches characteristic-polynomial oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix g = random_sl(rng, 3);
    auto k = cartan_projection(g);
    Vector oracle = char_poly_log_roots(g);
    CHECK((k.entries - oracle).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("cartan_projection rejects non-unimodular input") {
  CHECK_THROWS_AS(cartan_projection(2.0 * Matrix::Identity(3, 3)), Error);
}

TEST_CASE("jordan_projection basics") {
  double th = 0.7;
  Matrix rot(3, 3);
  rot << std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1;
  CHECK(jordan_projection(rot).sup_norm() < 1e-10);

  auto l = jordan_projection(diag3(std::exp(2.0), 1.0, std::exp(-2.0)));
  CHECK(l.entries[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(l.entries[2] == doctest::Approx(-2.0).epsilon(1e-10));
}

namespace {

// Top log singular value of g^64 via repeated squaring with renormalization;
// the large singular value survives the squaring, the small ones do not.
double log_sigma1_pow64(const Matrix& g) {
  Matrix p = g;
  double log_scale = 0.0;
  for (int s = 0; s < 6; ++s) {
    p = p * p;
    double nrm = p.norm();
    p /= nrm;
    log_scale = 2.0 * log_scale + std::log(nrm);
  }
  Eigen::JacobiSVD<Matrix> svd(p);
  return std::log(svd.singularValues()[0]) + log_scale;
}

}  // namespace

TEST_CASE("jordan_projection agrees with repeated-squaring power oracle") {
  std::mt19937_64 rng(11);
  int accepted = 0;
  while (accepted < 20) {
    Matrix g = random_sl(rng, 3);
    // Skip samples with nearly tied eigenvalue moduli or wild eigenbases,
    // where kappa(g^n)/n has not settled by n = 64.
    Eigen::EigenSolver<Matrix> es(g);
    Vector mods = es.eigenvalues().array().abs().log();
    std::sort(mods.data(), mods.data() + 3, std::greater<double>());
    if (mods[0] - mods[1] < 0.2 || mods[1] - mods[2] < 0.2) continue;
    Eigen::JacobiSVD<Matrix> vsvd(Matrix(es.eigenvectors().real()));
    if (vsvd.singularValues()[0] / vsvd.singularValues()[2] > 10.0) continue;
    ++accepted;

    // kappa(g^64)/64, entries read off g and g^{-1} where each is reliable.
    double top = log_sigma1_pow64(g) / 64.0;
    double bottom = -log_sigma1_pow64(g.inverse()) / 64.0;
    Vector power(3);
    power << top, -(top + bottom), bottom;
    auto l = jordan_projection(g);
    CHECK((power - l.entries).cwiseAbs().maxCoeff() <= 0.05);
  }
}

TEST_CASE("opposition") {
  Vector v(3);
  v << 3, -1, -2;
  auto h = CartanVector::from_entries(v);
  auto ih = opposition(h);
  CHECK(ih.entries[0] == doctest::Approx(2.0));
  CHECK(ih.entries[1] == doctest::Approx(1.0));
  CHECK(ih.entries[2] == doctest::Approx(-3.0));
  CHECK((opposition(ih).entries - h.entries).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kappa(g^-1) = i kappa(g)") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix g = random_sl(rng, 4);
    auto lhs = cartan_projection(g.inverse());
    auto rhs = opposition(cartan_projection(g));
    CHECK((lhs.entries - rhs.entries).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("istar") {
  const int d = 5;
  Functional phi_h = 0.5 * (Functional::omega(d, 1) + Functional::omega(d, d - 1));
  CHECK((istar(phi_h).weight_coeffs - phi_h.weight_coeffs).cwiseAbs().maxCoeff() == 0.0);
  Functional o1 = Functional::omega(d, 1);
  CHECK(istar(o1).weight_coeffs[d - 2] == 1.0);
  CHECK(istar(o1).weight_coeffs.head(d - 2).cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix g = random_sl(rng, d);
    Functional phi{d, Vector::Random(d - 1)};
    double lhs = istar(phi)(cartan_projection(g));
    double rhs = phi(cartan_projection(g.inverse()));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
  }
}

TEST_CASE("pi_theta") {
  std::mt19937_64 rng(19);
  const int d = 4;
  RootSubset full = RootSubset::full(d);
  for (int trial = 0; trial < 10; ++trial) {
    auto h = random_chamber_point(rng, d);
    auto p = pi_theta(h, full);
    CHECK((p.entries - h.entries).cwiseAbs().maxCoeff() < 1e-10);
  }

  // d=3, theta={alpha_1}: diag(t1,t2,t3) -> diag(t1, -t1/2, -t1/2).
  Vector v(3);
  v << 1.5, 0.3, -1.8;
  auto p = pi_theta(CartanVector::from_entries(v), RootSubset(3, {1}));
  CHECK(p.entries[0] == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(p.entries[1] == doctest::Approx(-0.75).epsilon(1e-10));
  CHECK(p.entries[2] == doctest::Approx(-0.75).epsilon(1e-10));

  // Idempotence and range/constraint conditions for a proper subset.
  RootSubset theta(5, {1, 3});
  for (int trial = 0; trial < 10; ++trial) {
    auto h = random_chamber_point(rng, 5);
    auto q = pi_theta(h, theta);
    for (int j = 1; j <= 4; ++j) {
      if (theta.contains(j))
        CHECK(weight_eval(j, q) == doctest::Approx(weight_eval(j, h)).epsilon(1e-10));
      else
        CHECK(std::abs(root_eval(j, q)) < 1e-9);
    }
    auto qq = pi_theta(q, theta);
    CHECK((qq.entries - q.entries).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("root and weight evaluation") {
  Vector v(3);
  v << 2, 0, -2;
  auto h = CartanVector::from_entries(v);
  CHECK(root_eval(2, h) == doctest::Approx(2.0));
  CHECK(weight_eval(2, h) == doctest::Approx(2.0));
  CHECK_THROWS_AS(root_eval(3, h), Error);

  std::mt19937_64 rng(23);
  for (int d : {3, 5}) {
    Functional phi_h = 0.5 * (Functional::omega(d, 1) + Functional::omega(d, d - 1));
    for (int trial = 0; trial < 10; ++trial) {
      auto x = random_chamber_point(rng, d);
      CHECK(phi_h(x) == doctest::Approx(0.5 * (x.entries[0] - x.entries[d - 1])).epsilon(1e-12));
    }
  }
}

TEST_CASE("functional evaluation is linear") {
  std::mt19937_64 rng(29);
  Functional phi{4, Vector::Random(3)};
  for (int trial = 0; trial < 10; ++trial) {
    auto h1 = random_chamber_point(rng, 4);
    auto h2 = random_chamber_point(rng, 4);
    double a = 1.7, b = -0.4;
    double lhs = phi(CartanVector::from_entries((a * h1.entries + b * h2.entries).eval()));
    double rhs = a * phi(h1) + b * phi(h2);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("top-weight subadditivity and K-bi-invariance") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix g = random_sl(rng, 4), h = random_sl(rng, 4);
    double s = weight_eval(1, cartan_projection(g * h));
    CHECK(s <= weight_eval(1, cartan_projection(g)) + weight_eval(1, cartan_projection(h)) + 1e-9);

    Matrix k = random_rotation(rng, 4), l = random_rotation(rng, 4);
    auto a = cartan_projection(k * g * l);
    auto b = cartan_projection(g);
    CHECK((a.entries - b.entries).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("jordan projection is conjugation invariant") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix g = random_sl(rng, 3), h = random_sl(rng, 3);
    Eigen::JacobiSVD<Matrix> hs(h);
    if (hs.singularValues()[0] / hs.singularValues()[2] > 100.0) continue;
    Matrix conj = h * g * h.inverse();
    conj /= std::cbrt(conj.determinant());  // undo determinant drift
    auto a = jordan_projection(conj);
    auto b = jordan_projection(g);
    CHECK((a.entries - b.entries).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("opposition is linear and a sup-norm isometry") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    auto h1 = random_chamber_point(rng, 5);
    auto h2 = random_chamber_point(rng, 5);
    auto sum = opposition(CartanVector::from_entries((h1.entries + h2.entries).eval()));
    auto parts = opposition(h1) + opposition(h2);
    CHECK((sum.entries - parts.entries).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(opposition(h1).sup_norm() == doctest::Approx(h1.sup_norm()));
  }
}

TEST_CASE("SO(2,1) image has vanishing middle kappa entry") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix g2 = random_sl(rng, 2);
    Matrix g3 = fixtures::so21_embed(g2);
    CHECK(std::abs(g3.determinant() - 1.0) < 1e-8);
    auto k = cartan_projection(g3);
    CHECK(std::abs(k.entries[1]) < 1e-8);
    CHECK(k.entries[0] == doctest::Approx(-k.entries[2]).epsilon(1e-8));
  }
}
