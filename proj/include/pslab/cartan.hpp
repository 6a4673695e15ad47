#pragma once

// Lie-theoretic coordinates for SL(d,R): Cartan and Jordan projections,
// simple roots and fundamental weights of the A_{d-1} system, the opposition
// involution, and the projection pi_theta onto the partial Cartan subspace.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "pslab/errors.hpp"

namespace pslab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A point of the Cartan subspace a = {diag(t_1,...,t_d) : sum t_i = 0}.
// Entries are on the log singular-value / log eigenvalue-modulus scale.
// When `chamber` is set, entries are non-increasing.
struct CartanVector {
  Vector entries;
  bool chamber = false;

  int dim() const { return static_cast<int>(entries.size()); }

  double sup_norm() const { return entries.cwiseAbs().maxCoeff(); }

  static CartanVector zero(int d) { return {Vector::Zero(d), true}; }

  static CartanVector from_entries(Vector t, bool chamber_tag = false) {
    // Recentre so the trace-zero invariant holds exactly.
    t.array() -= t.mean();
    return {std::move(t), chamber_tag};
  }
};

inline CartanVector operator+(const CartanVector& a, const CartanVector& b) {
  return {a.entries + b.entries, false};
}
inline CartanVector operator-(const CartanVector& a, const CartanVector& b) {
  return {a.entries - b.entries, false};
}
inline CartanVector operator*(double c, const CartanVector& a) {
  return {c * a.entries, false};
}

// Simple root alpha_j(diag(t)) = t_j - t_{j+1}, 1 <= j <= d-1.
inline double root_eval(int j, const CartanVector& h) {
  if (j < 1 || j >= h.dim()) throw Error("root index out of range");
  return h.entries[j - 1] - h.entries[j];
}

// Fundamental weight omega_j(diag(t)) = t_1 + ... + t_j.
inline double weight_eval(int j, const CartanVector& h) {
  if (j < 1 || j >= h.dim()) throw Error("weight index out of range");
  return h.entries.head(j).sum();
}

// A linear functional on a, stored in the fundamental-weight basis:
// phi = sum_j c_j omega_j.
struct Functional {
  int d = 0;
  Vector weight_coeffs;  // d-1 coefficients

  static Functional zero(int d) { return {d, Vector::Zero(d - 1)}; }

  static Functional omega(int d, int j) {
    Functional f = zero(d);
    f.weight_coeffs[j - 1] = 1.0;
    return f;
  }

  double operator()(const CartanVector& h) const {
    double s = 0.0;
    for (int j = 1; j < d; ++j)
      if (weight_coeffs[j - 1] != 0.0) s += weight_coeffs[j - 1] * weight_eval(j, h);
    return s;
  }
};

inline Functional operator*(double c, const Functional& f) {
  return {f.d, c * f.weight_coeffs};
}
inline Functional operator+(const Functional& f, const Functional& g) {
  return {f.d, f.weight_coeffs + g.weight_coeffs};
}

// theta subset of the simple roots {alpha_1,...,alpha_{d-1}}, by index.
struct RootSubset {
  int d = 0;
  std::vector<int> indices;  // sorted, within [1, d-1], nonempty

  RootSubset() = default;
  RootSubset(int dim, std::vector<int> idx) : d(dim), indices(std::move(idx)) {
    if (indices.empty()) throw Error("empty root subset");
    std::sort(indices.begin(), indices.end());
    for (int j : indices)
      if (j < 1 || j >= d) throw Error("root index out of bounds");
  }

  static RootSubset full(int d) {
    std::vector<int> idx(d - 1);
    for (int j = 1; j < d; ++j) idx[j - 1] = j;
    return RootSubset(d, idx);
  }

  bool contains(int j) const {
    return std::find(indices.begin(), indices.end(), j) != indices.end();
  }

  // i* theta: j -> d - j.
  RootSubset istar() const {
    std::vector<int> idx;
    idx.reserve(indices.size());
    for (int j : indices) idx.push_back(d - j);
    return RootSubset(d, idx);
  }

  bool operator==(const RootSubset& o) const { return d == o.d && indices == o.indices; }
};

inline void check_unimodular(const Matrix& g, double tol = 1e-8) {
  // The floating-point determinant of an ill-conditioned product carries an
  // absolute error on the order of eps * ||g||^d, so the tolerance scales.
  double allow = std::max(tol, std::pow(g.norm(), g.rows()) * 1e-12);
  if (std::abs(g.determinant() - 1.0) > allow)
    throw Error("matrix is not unimodular");
}

// kappa(g): descending log singular values, recentred to trace zero.
//
// For badly conditioned input the small singular values sit at the rounding
// noise floor eps*sigma_1 (or underflow outright), while log sigma_1 stays
// accurate to machine precision.  The trace-zero closure is therefore
// distributed with weights ~ 1/sigma_j^2, so the correction lands on the
// unreliable bottom entries instead of contaminating the top ones.  For
// well-conditioned input this coincides with plain mean recentring.
inline CartanVector cartan_projection(const Matrix& g) {
  check_unimodular(g);
  Eigen::JacobiSVD<Matrix> svd(g);
  if (svd.info() != Eigen::Success)
    throw SingularDecompositionFailure("SVD did not converge");
  Vector s = svd.singularValues();
  const double noise_floor = s[0] * std::numeric_limits<double>::epsilon();
  Vector t = s.array().max(noise_floor).log();
  std::sort(t.data(), t.data() + t.size(), std::greater<double>());
  const double excess = t.sum();
  Vector w = (2.0 * (t.array()[t.size() - 1] - t.array())).exp();
  t -= (excess / w.sum()) * w;
  return {std::move(t), true};
}

// lambda(g): descending log eigenvalue moduli.
//
// The extreme eigenvalues of g and of g^{-1} are the numerically reliable
// ones when g is badly conditioned, so the lower half of the spectrum is
// read off g^{-1} and, for odd d, the middle entry from the trace-zero
// constraint.
inline CartanVector jordan_projection(const Matrix& g) {
  check_unimodular(g);
  const int d = static_cast<int>(g.rows());
  Eigen::EigenSolver<Matrix> es(g, /*computeEigenvectors=*/false);
  Eigen::EigenSolver<Matrix> es_inv(g.inverse(), false);
  if (es.info() != Eigen::Success || es_inv.info() != Eigen::Success)
    throw SingularDecompositionFailure("eigenvalue computation failed");
  Vector a = es.eigenvalues().array().abs().log();
  Vector b = es_inv.eigenvalues().array().abs().log();
  std::sort(a.data(), a.data() + d, std::greater<double>());
  std::sort(b.data(), b.data() + d, std::greater<double>());
  Vector t(d);
  const int half = d / 2;
  for (int i = 0; i < half; ++i) {
    t[i] = a[i];
    t[d - 1 - i] = -b[i];
  }
  if (d % 2 == 1) {
    double s = 0.0;
    for (int i = 0; i < half; ++i) s += t[i] + t[d - 1 - i];
    t[half] = -s;
  }
  std::sort(t.data(), t.data() + d, std::greater<double>());
  return CartanVector::from_entries(std::move(t), true);
}

// Opposition involution i(diag(t_1,...,t_d)) = diag(-t_d,...,-t_1).
inline CartanVector opposition(const CartanVector& h) {
  return {-h.entries.reverse(), h.chamber};
}

// (i* phi)(H) = phi(iH); in weight coordinates c_j -> c_{d-j}.
inline Functional istar(const Functional& f) {
  return {f.d, f.weight_coeffs.reverse()};
}

// Fundamental coweight H_j with alpha_i(H_j) = delta_ij: first j entries
// equal (d-j)/d, the rest -j/d.
inline Vector fundamental_coweight(int d, int j) {
  Vector h(d);
  h.head(j).setConstant(double(d - j) / d);
  h.tail(d - j).setConstant(-double(j) / d);
  return h;
}

// Projection pi_theta : a -> a_theta determined by
// omega_j(pi_theta H) = omega_j(H) for j in theta.
inline CartanVector pi_theta(const CartanVector& h, const RootSubset& theta) {
  const int d = theta.d;
  const int k = static_cast<int>(theta.indices.size());
  Matrix m(k, k);
  Vector rhs(k);
  std::vector<Vector> basis;
  basis.reserve(k);
  for (int b = 0; b < k; ++b) basis.push_back(fundamental_coweight(d, theta.indices[b]));
  for (int a = 0; a < k; ++a) {
    const int j = theta.indices[a];
    rhs[a] = weight_eval(j, h);
    for (int b = 0; b < k; ++b) m(a, b) = basis[b].head(j).sum();
  }
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible())
    throw SingularSystem("pi_theta weight-matching system is singular");
  Vector x = lu.solve(rhs);
  Vector out = Vector::Zero(d);
  for (int b = 0; b < k; ++b) out += x[b] * basis[b];
  return CartanVector::from_entries(std::move(out));
}

inline double functional_eval(const Functional& f, const CartanVector& h) {
  return f(h);
}

}  // namespace pslab
