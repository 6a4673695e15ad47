#pragma once

// Flag manifolds F_theta for SL(d,R), the projection U_theta, transversality,
// the (partial) Iwasawa cocycle via orthogonal-triangular factorization, the
// a-valued Gromov product, and Hopf coordinates.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>

#include "pslab/cartan.hpp"
#include "pslab/errors.hpp"

namespace pslab {

constexpr double kDefaultGapFloor = 1e-6;
constexpr double kTransversalityFloor = 1e-10;

// Sign canonicalization: make each column's first entry of largest magnitude
// positive. Quotients by the diagonal +-1 subgroup M.
inline Matrix canonicalize_frame(Matrix f) {
  for (int c = 0; c < f.cols(); ++c) {
    int imax = 0;
    f.col(c).cwiseAbs().maxCoeff(&imax);
    if (f(imax, c) < 0) f.col(c) = -f.col(c);
  }
  return f;
}

// Orthonormalize an invertible matrix preserving its nested column spans
// (QR with positive diagonal).
inline Matrix orthonormalize(const Matrix& g) {
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < g.cols(); ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

// A point of F_theta, represented by a canonicalized orthonormal frame.
// Only the nested column spans of dimensions in theta are meaningful.
struct PartialFlag {
  RootSubset theta;
  Matrix frame;

  int dim() const { return theta.d; }

  // Orthogonal projector onto the span of the first j columns.
  Matrix projector(int j) const {
    return frame.leftCols(j) * frame.leftCols(j).transpose();
  }
};

inline PartialFlag standard_flag(const RootSubset& theta) {
  return {theta, Matrix::Identity(theta.d, theta.d)};
}

inline PartialFlag full_flag_from_frame(const RootSubset& theta, const Matrix& frame) {
  return {theta, canonicalize_frame(frame)};
}

// Flag from the nested column spans of an invertible matrix.
// pi_theta on flags: forget the subspaces whose dimension is not in sub.
inline PartialFlag restrict_flag(const PartialFlag& x, const RootSubset& sub) {
  if (sub.d != x.theta.d) throw Error("restrict_flag: dimension mismatch");
  for (int j : sub.indices)
    if (!x.theta.contains(j)) throw Error("restrict_flag: not a subset");
  return {sub, x.frame};
}

inline PartialFlag flag_from_matrix(const RootSubset& theta, const Matrix& g) {
  return {theta, canonicalize_frame(orthonormalize(g))};
}

inline PartialFlag act(const Matrix& g, const PartialFlag& x) {
  return flag_from_matrix(x.theta, g * x.frame);
}

// max over j in theta of Frobenius distance between rank-j span projectors.
inline double flag_distance(const PartialFlag& x, const PartialFlag& y) {
  if (!(x.theta == y.theta)) throw Error("flag_distance: mismatched theta");
  double m = 0.0;
  for (int j : x.theta.indices)
    m = std::max(m, (x.projector(j) - y.projector(j)).norm());
  return m;
}

inline bool flags_equal(const PartialFlag& x, const PartialFlag& y, double tol = 1e-7) {
  return flag_distance(x, y) <= tol;
}

// Representative of the longest Weyl element: antidiagonal +-1 with det 1,
// squaring into {1, M}.
inline Matrix w0_matrix(int d) {
  Matrix w = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) w(i, d - 1 - i) = 1.0;
  // Reversal permutation sign is (-1)^{d(d-1)/2}; fix det = 1.
  if (((d * (d - 1) / 2) % 2) != 0) {
    if (d % 2 == 1)
      w((d - 1) / 2, (d - 1) / 2) = -1.0;
    else
      w(0, d - 1) = -1.0;
  }
  return w;
}

// U_theta(g) = k P_theta where g = k exp(kappa(g)) l; requires the
// singular-value gaps alpha_j(kappa(g)) > gap_floor for j in theta.
inline PartialFlag u_theta(const Matrix& g, const RootSubset& theta,
                           double gap_floor = kDefaultGapFloor) {
  Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullU);
  if (svd.info() != Eigen::Success)
    throw SingularDecompositionFailure("SVD did not converge");
  const Vector& sv = svd.singularValues();  // already descending
  for (int j : theta.indices) {
    double gap = std::log(sv[j - 1]) - std::log(sv[j]);
    if (!(gap > gap_floor)) throw DegenerateGap(j);
  }
  return {theta, canonicalize_frame(svd.matrixU())};
}

inline double min_theta_gap(const CartanVector& kappa, const RootSubset& theta) {
  double m = std::numeric_limits<double>::infinity();
  for (int j : theta.indices) m = std::min(m, root_eval(j, kappa));
  return m;
}

// x in F_theta and y in F_{i*theta} are transverse iff for every j in theta
// the j-span of x and the (d-j)-span of y are complementary.
inline bool transverse(const PartialFlag& x, const PartialFlag& y,
                       double floor = kTransversalityFloor) {
  if (!(y.theta == x.theta.istar())) throw Error("transverse: incompatible theta");
  const int d = x.dim();
  for (int j : x.theta.indices) {
    Matrix s(d, d);
    s.leftCols(j) = x.frame.leftCols(j);
    s.rightCols(d - j) = y.frame.leftCols(d - j);
    if (std::abs(s.determinant()) <= floor) return false;
  }
  return true;
}

struct TransversePair {
  PartialFlag xi;   // in F_theta
  PartialFlag eta;  // in F_{i*theta}
  std::optional<Matrix> witness;  // g with g P_theta = xi, g w0 P_{i*theta} = eta
};

// Iwasawa cocycle B(g,x): the a-part of g k in the KAN decomposition,
// k the frame of the full flag x.
inline CartanVector iwasawa_cocycle(const Matrix& g, const PartialFlag& x) {
  const int d = x.dim();
  Eigen::HouseholderQR<Matrix> qr(Matrix(g * x.frame));
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  Vector t(d);
  for (int i = 0; i < d; ++i) t[i] = std::log(std::abs(r(i, i)));
  return CartanVector::from_entries(std::move(t));
}

// B_theta(g,x) = pi_theta B(g, lift of x); the frame already provides a
// deterministic lift (orthonormal complement columns in index order).
inline CartanVector partial_iwasawa(const Matrix& g, const PartialFlag& x,
                                    const RootSubset& theta) {
  PartialFlag lift{RootSubset::full(theta.d), x.frame};
  return pi_theta(iwasawa_cocycle(g, lift), theta);
}

// Intersection line of span(a) (dim p) and span(b) (dim q), p + q = d + 1.
inline Vector span_intersection_line(const Matrix& a, const Matrix& b) {
  const int d = static_cast<int>(a.rows());
  Matrix stacked(d, a.cols() + b.cols());
  stacked << a, -b;
  Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeFullV);
  Vector z = svd.matrixV().col(stacked.cols() - 1);
  Vector v = a * z.head(a.cols());
  double n = v.norm();
  if (n < 1e-12) throw NoWitness("degenerate span intersection");
  return v / n;
}

// Witness g with g P_Delta = xi and g w0 P_Delta = eta, built from the
// intersection lines V_i(xi) cap W_{d-i+1}(eta), det normalized to 1.
inline Matrix build_witness(const PartialFlag& xi, const PartialFlag& eta) {
  const int d = xi.dim();
  Matrix g(d, d);
  for (int i = 1; i <= d; ++i)
    g.col(i - 1) = span_intersection_line(xi.frame.leftCols(i),
                                          eta.frame.leftCols(d - i + 1));
  double det = g.determinant();
  if (std::abs(det) < 1e-12) throw NoWitness("witness construction degenerate");
  if (det < 0) {
    g.col(d - 1) = -g.col(d - 1);
    det = -det;
  }
  g /= std::pow(det, 1.0 / d);
  return g;
}

// a-valued Gromov product of a transverse pair of full flags:
//   G(xi,eta) = -( B(g^{-1}, xi) + i B(g^{-1}, eta) )
// for any g carrying the standard pair to (xi, eta).
inline CartanVector gromov_product(const TransversePair& pair) {
  const Matrix g = pair.witness ? *pair.witness : build_witness(pair.xi, pair.eta);
  const Matrix ginv = g.inverse();
  CartanVector b_xi = iwasawa_cocycle(ginv, pair.xi);
  CartanVector b_eta = iwasawa_cocycle(ginv, pair.eta);
  return CartanVector::from_entries(-(b_xi.entries + opposition(b_eta).entries));
}

// Hopf coordinates gM = (g P, g w0 P, B(g, P)).
struct HopfCoordinates {
  PartialFlag forward;
  PartialFlag backward;
  CartanVector cocycle;
};

inline HopfCoordinates hopf(const Matrix& g) {
  const int d = static_cast<int>(g.rows());
  RootSubset full = RootSubset::full(d);
  PartialFlag std_flag = standard_flag(full);
  return {flag_from_matrix(full, g), flag_from_matrix(full, g * w0_matrix(d)),
          iwasawa_cocycle(g, std_flag)};
}

}  // namespace pslab
