#pragma once

// Built-in fixture groups:
//   F1  cyclic diagonal in SL(3,R)
//   F2  Fuchsian Schottky pair in SL(2,R) and its SO(2,1) < SL(3,R) image
//   F3  Zariski-dense ping-pong pair in SL(3,R)

#include <cmath>

#include "pslab/errors.hpp"
#include "pslab/orbit.hpp"

namespace pslab::fixtures {

// Adjoint representation SL(2,R) -> SL(3,R) in an orthonormal basis of
// sl(2,R), conjugated so that the preserved signature-(2,1) form is
// x^2 + y^2 - z^2.  Rotations map to rotations and diag(e^s, e^-s) to the
// standard x-axis boost with kappa = (2s, 0, -2s).
inline Matrix so21_embed(const Matrix& g) {
  auto adj = [&](double x00, double x01, double x10) {
    // X = [[x00, x01], [x10, -x00]] -> g X g^{-1}
    Matrix x(2, 2);
    x << x00, x01, x10, -x00;
    return (g * x * g.inverse()).eval();
  };
  const double s2 = std::sqrt(2.0);
  // Basis (E, H/sqrt2, F); coordinates a = X(0,1), b = sqrt2 X(0,0), c = X(1,0).
  Matrix ad(3, 3);
  Matrix imgs[3] = {adj(0, 1, 0), adj(1.0 / s2, 0, 0), adj(0, 0, 1)};
  for (int j = 0; j < 3; ++j) {
    ad(0, j) = imgs[j](0, 1);
    ad(1, j) = s2 * imgs[j](0, 0);
    ad(2, j) = imgs[j](1, 0);
  }
  Matrix t(3, 3);
  t << 1.0 / s2, 0, 1.0 / s2, 0, 1, 0, 1.0 / s2, 0, -1.0 / s2;
  return t * ad * t;
}

inline Matrix sl2_rotation(double phi) {
  Matrix r(2, 2);
  r << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
  return r;
}

inline Matrix sl2_hyperbolic(double translation_length) {
  Matrix a(2, 2);
  double s = translation_length / 2.0;
  a << std::exp(s), 0, 0, std::exp(-s);
  return a;
}

// F1: cyclic <diag(e, 1, e^{-1})>.
inline GeneratorSet cyclic(double top = 1.0) {
  Vector v(3);
  v << std::exp(top), 1.0, std::exp(-top);
  return GeneratorSet({{"a", Matrix(v.asDiagonal())}});
}

// F2: hyperbolic translation lengths 3 and 3.5 along axes crossing at the
// SO(2) fixed point.
inline GeneratorSet schottky_sl2(DedupPolicy policy = DedupPolicy::FreeReduced) {
  Matrix a = sl2_hyperbolic(3.0);
  Matrix r = sl2_rotation(M_PI / 4.0);
  Matrix b = r * sl2_hyperbolic(3.5) * r.transpose();
  return GeneratorSet({{"a", a}, {"b", b}}, policy);
}

inline GeneratorSet schottky_so21(DedupPolicy policy = DedupPolicy::FreeReduced) {
  GeneratorSet sl2 = schottky_sl2();
  return GeneratorSet({{"a", so21_embed(sl2.mats[0])}, {"b", so21_embed(sl2.mats[2])}},
                      policy);
}

inline Matrix so3_rotation(double yaw, double pitch, double roll) {
  Matrix rz(3, 3), ry(3, 3), rx(3, 3);
  rz << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
  ry << std::cos(pitch), 0, std::sin(pitch), 0, 1, 0, -std::sin(pitch), 0, std::cos(pitch);
  rx << 1, 0, 0, 0, std::cos(roll), -std::sin(roll), 0, std::sin(roll), std::cos(roll);
  return rz * ry * rx;
}

// F3: strong asymmetric diagonals conjugated by fixed generic rotations.
// Gaps are verified at load.
inline GeneratorSet zariski_schottky(DedupPolicy policy = DedupPolicy::FreeReduced) {
  Vector d1(3), d2(3);
  d1 << 4.0, 0.5, -4.5;
  d2 << 4.2, -0.3, -3.9;
  Matrix r1 = so3_rotation(0.4, 1.1, 2.3);
  Matrix r2 = so3_rotation(0.9, 1.9, 0.6);
  Matrix g1 = r1 * Matrix(d1.array().exp().matrix().asDiagonal()) * r1.transpose();
  Matrix g2 = r2 * Matrix(d2.array().exp().matrix().asDiagonal()) * r2.transpose();
  GeneratorSet gens({{"a", g1}, {"b", g2}}, policy);
  for (const auto& m : gens.mats) {
    auto k = cartan_projection(m);
    if (root_eval(1, k) < 1.0 || root_eval(2, k) < 1.0)
      throw Error("zariski_schottky: generator gaps degenerate");
  }
  return gens;
}

}  // namespace pslab::fixtures
