#pragma once

// Properly convex domains (balls and planar polytopes), the Hilbert
// cross-ratio metric, Hilbert critical exponents, and the Kaimanovich
// measures nu_p / lambda_n with their quantitative bounds.

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "pslab/orbit.hpp"

namespace pslab {

constexpr double kInteriorMargin = 1e-9;

// A bounded convex body in an affine chart: a round ball in any dimension, or
// a convex polygon in a 2-dimensional chart (the only polytope chart
// dimension supported; higher-dimensional facet enumeration is out of scope).
struct ConvexDomain {
  enum class Kind { Ball, Polytope };

  Kind kind = Kind::Ball;
  int m = 0;  // affine chart dimension
  Vector center;
  double radius = 0.0;
  std::vector<Vector> vertices;
  // Derived polygon facets: outward normal n and offset b with interior
  // n . x < b.
  std::vector<Vector> facet_normals;
  std::vector<double> facet_offsets;

  static ConvexDomain ball(Vector c, double r) {
    if (r <= 0.0) throw Error("ball radius must be positive");
    ConvexDomain d;
    d.kind = Kind::Ball;
    d.m = static_cast<int>(c.size());
    d.center = std::move(c);
    d.radius = r;
    return d;
  }

  static ConvexDomain polytope(std::vector<Vector> verts) {
    ConvexDomain d;
    d.kind = Kind::Polytope;
    if (verts.size() < 3) throw Error("polytope needs at least 3 vertices");
    d.m = static_cast<int>(verts.front().size());
    if (d.m != 2) throw Error("polytope domains are supported in chart dimension 2");
    Vector centroid = Vector::Zero(2);
    for (const auto& v : verts) {
      if (v.size() != 2) throw Error("polytope vertex dimension mismatch");
      centroid += v;
    }
    centroid /= static_cast<double>(verts.size());
    std::sort(verts.begin(), verts.end(), [&](const Vector& a, const Vector& b) {
      return std::atan2(a[1] - centroid[1], a[0] - centroid[0]) <
             std::atan2(b[1] - centroid[1], b[0] - centroid[0]);
    });
    d.vertices = std::move(verts);
    const size_t n = d.vertices.size();
    for (size_t i = 0; i < n; ++i) {
      Vector e = d.vertices[(i + 1) % n] - d.vertices[i];
      if (e.norm() < 1e-12) throw Error("polytope has coincident vertices");
      Vector normal(2);
      normal << e[1], -e[0];  // outward for counterclockwise order
      normal.normalize();
      if (normal.dot(centroid - d.vertices[i]) > 0) normal = -normal;
      d.facet_normals.push_back(normal);
      d.facet_offsets.push_back(normal.dot(d.vertices[i]));
    }
    for (const auto& v : d.vertices)
      for (size_t f = 0; f < d.facet_normals.size(); ++f)
        if (d.facet_normals[f].dot(v) > d.facet_offsets[f] + 1e-9)
          throw Error("polytope vertices are not in convex position");
    d.center = centroid;
    return d;
  }

  bool contains(const Vector& p, double margin = 0.0) const {
    if (p.size() != m) throw Error("domain point dimension mismatch");
    if (kind == Kind::Ball) return (p - center).norm() <= radius - margin;
    for (size_t f = 0; f < facet_normals.size(); ++f)
      if (facet_normals[f].dot(p) > facet_offsets[f] - margin) return false;
    return true;
  }
};

inline ConvexDomain klein_disk() { return ConvexDomain::ball(Vector::Zero(2), 1.0); }

// Projective action of an (m+1)-square matrix on the affine chart.
inline Vector projective_apply(const Matrix& g, const Vector& x) {
  const int m = static_cast<int>(x.size());
  if (g.rows() != m + 1) throw Error("projective matrix dimension mismatch");
  Vector h(m + 1);
  h << x, 1.0;
  Vector y = g * h;
  if (std::abs(y[m]) < 1e-14 * y.norm()) throw Error("projective image at infinity");
  return y.head(m) / y[m];
}

// Boundary exits of the line through p and q: a behind p, b beyond q.
inline std::pair<Vector, Vector> chord(const ConvexDomain& dom, const Vector& p,
                                       const Vector& q) {
  if (!dom.contains(p, kInteriorMargin) || !dom.contains(q, kInteriorMargin))
    throw Error("chord endpoints must be interior");
  Vector u = q - p;
  double len = u.norm();
  if (len < 1e-12) throw CoincidentPoints("chord endpoints coincide");
  u /= len;

  double t_forward = 0.0, t_backward = 0.0;
  if (dom.kind == ConvexDomain::Kind::Ball) {
    Vector w = p - dom.center;
    double b = w.dot(u);
    double c = w.squaredNorm() - dom.radius * dom.radius;
    double disc = std::sqrt(std::max(0.0, b * b - c));
    t_forward = -b + disc;
    t_backward = -b - disc;
  } else {
    t_forward = std::numeric_limits<double>::infinity();
    t_backward = -std::numeric_limits<double>::infinity();
    for (size_t f = 0; f < dom.facet_normals.size(); ++f) {
      double du = dom.facet_normals[f].dot(u);
      if (std::abs(du) < 1e-14) continue;
      double t = (dom.facet_offsets[f] - dom.facet_normals[f].dot(p)) / du;
      if (du > 0)
        t_forward = std::min(t_forward, t);  // min positive ray-facet parameter
      else
        t_backward = std::max(t_backward, t);
    }
  }
  return {p + t_backward * u, p + t_forward * u};
}

// dist(p,q) = 1/2 log ( |a-q| |b-p| / ( |a-p| |b-q| ) ) with (a,b) the chord.
inline double hilbert_distance(const ConvexDomain& dom, const Vector& p, const Vector& q) {
  if ((p - q).norm() < 1e-14) return 0.0;
  auto [a, b] = chord(dom, p, q);
  return 0.5 * std::log(((a - q).norm() * (b - p).norm()) /
                        ((a - p).norm() * (b - q).norm()));
}

namespace detail {

// Hyperboloid lift of an interior ball point in unit-chart coordinates:
// Q(v) = v_m^2 - |v_head|^2 = 1.
inline Vector klein_lift(const ConvexDomain& dom, const Vector& p) {
  Vector x = (p - dom.center) / dom.radius;
  double s = 1.0 - x.squaredNorm();
  if (s <= 0.0) throw Error("klein_lift: point not interior");
  double f = 1.0 / std::sqrt(s);
  Vector v(dom.m + 1);
  v << x * f, f;
  return v;
}

inline double mink(const Vector& a, const Vector& b) {
  const int m = static_cast<int>(a.size()) - 1;
  return a[m] * b[m] - a.head(m).dot(b.head(m));
}

// Homogeneous chart-to-unit-ball change of coordinates and its inverse.
inline Matrix chart_to_unit(const ConvexDomain& dom) {
  Matrix s = Matrix::Identity(dom.m + 1, dom.m + 1);
  s.topLeftCorner(dom.m, dom.m) /= dom.radius;
  s.topRightCorner(dom.m, 1) = -dom.center / dom.radius;
  return s;
}

inline Matrix unit_to_chart(const ConvexDomain& dom) {
  Matrix s = Matrix::Identity(dom.m + 1, dom.m + 1);
  s.topLeftCorner(dom.m, dom.m) *= dom.radius;
  s.topRightCorner(dom.m, 1) = dom.center;
  return s;
}

// Deterministic interior sample points for the preservation check.
inline std::vector<Vector> preservation_samples(const ConvexDomain& dom) {
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<Vector> pts;
  if (dom.kind == ConvexDomain::Kind::Ball) {
    for (int k = 0; k < 64; ++k) {
      Vector dir(dom.m);
      for (int i = 0; i < dom.m; ++i) dir[i] = nd(rng);
      dir.normalize();
      pts.push_back(dom.center + dom.radius * (0.2 + 0.78 * ud(rng)) * dir);
    }
  } else {
    for (int k = 0; k < 64; ++k) {
      double total = 0.0;
      Vector p = Vector::Zero(dom.m);
      for (const auto& v : dom.vertices) {
        double w = -std::log(ud(rng));
        p += w * v;
        total += w;
      }
      pts.push_back(dom.center + 0.98 * (p / total - dom.center));
    }
  }
  return pts;
}

}  // namespace detail

// Throws DomainNotPreserved unless every generator (and inverse) maps the
// deterministic interior sample set back into the closed domain.
inline void check_domain_preserved(const ConvexDomain& dom, const GeneratorSet& gens) {
  auto pts = detail::preservation_samples(dom);
  for (int i = 0; i < gens.count(); ++i)
    for (const auto& p : pts) {
      Vector image;
      try {
        image = projective_apply(gens.mats[i], p);
      } catch (const Error&) {
        throw DomainNotPreserved("generator " + gens.labels[i] +
                                 " sends an interior point to infinity");
      }
      if (!dom.contains(image, -kInteriorMargin))
        throw DomainNotPreserved("generator " + gens.labels[i] +
                                 " maps an interior sample outside the domain");
    }
}

// Orbit positions gamma o.  For balls the hyperboloid lifts are kept as well:
// chart coordinates saturate at distance ~18 from the centre (1 - |x| falls
// below machine epsilon) while Minkowski products of lifts stay accurate at
// any distance reachable in doubles.
struct HilbertOrbit {
  std::vector<std::vector<int>> words;
  std::vector<Vector> points;
  std::vector<Vector> lifts;  // ball domains only
};

inline HilbertOrbit hilbert_orbit(const ConvexDomain& dom, const GeneratorSet& gens,
                                  const Vector& o, int max_len) {
  if (!dom.contains(o, kInteriorMargin)) throw Error("basepoint must be interior");
  check_domain_preserved(dom, gens);
  HilbertOrbit orbit;
  const bool ball = dom.kind == ConvexDomain::Kind::Ball;
  Matrix to_unit, to_chart;
  Vector o_lift;
  if (ball) {
    to_unit = detail::chart_to_unit(dom);
    to_chart = detail::unit_to_chart(dom);
    o_lift = to_chart * detail::klein_lift(dom, o);  // chart-homogeneous lift
  }
  enumerate_visit(gens, max_len, [&](const OrbitElement& e) {
    orbit.words.push_back(e.word);
    orbit.points.push_back(projective_apply(e.m, o));
    if (ball) orbit.lifts.push_back(to_unit * (e.m * o_lift));
  });
  return orbit;
}

// dist(p, gamma o), through lifts for balls and coordinates otherwise.
inline double orbit_distance(const ConvexDomain& dom, const HilbertOrbit& orbit,
                             size_t i, const Vector& p) {
  if (dom.kind == ConvexDomain::Kind::Ball)
    return std::acosh(std::max(1.0, detail::mink(detail::klein_lift(dom, p), orbit.lifts[i])));
  return hilbert_distance(dom, p, orbit.points[i]);
}

// delta_Omega estimate: the orbit module's count regression over the
// magnitudes dist_Omega(o, gamma o).
inline ExponentEstimate hilbert_critical_exponent(const ConvexDomain& dom,
                                                  const GeneratorSet& gens,
                                                  const Vector& o, int max_len) {
  auto orbit = hilbert_orbit(dom, gens, o, max_len);
  std::vector<double> mags;
  mags.reserve(orbit.points.size());
  for (size_t i = 0; i < orbit.points.size(); ++i)
    mags.push_back(orbit_distance(dom, orbit, i, o));
  return exponent_from_magnitudes(std::move(mags));
}

// Probability measure on group-element labels.
struct GammaMeasure {
  std::vector<std::vector<int>> words;
  std::vector<double> weights;
};

// l^1 distance between measures over the same label set.
inline double measure_distance(const GammaMeasure& a, const GammaMeasure& b) {
  if (a.words != b.words) throw Error("measure_distance: label sets differ");
  double s = 0.0;
  for (size_t i = 0; i < a.weights.size(); ++i) s += std::abs(a.weights[i] - b.weights[i]);
  return s;
}

namespace detail {

inline GammaMeasure normalize_measure(const HilbertOrbit& orbit, std::vector<double> w) {
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) throw Error("measure normalization degenerate");
  for (double& x : w) x /= total;
  return {orbit.words, std::move(w)};
}

}  // namespace detail

// nu_p = (1/Z) sum_gamma e^{-delta dist(p, gamma o)} D_gamma.
inline GammaMeasure kaimanovich_nu(const ConvexDomain& dom, const HilbertOrbit& orbit,
                                   double delta, const Vector& p) {
  std::vector<double> w(orbit.words.size());
  for (size_t i = 0; i < w.size(); ++i)
    w[i] = std::exp(-delta * orbit_distance(dom, orbit, i, p));
  return detail::normalize_measure(orbit, std::move(w));
}

// lambda_n(p, x) = (1/n) int_0^n nu_{l(t)} dt along the unit-speed Hilbert
// geodesic from p toward the boundary point x, trapezoid step 0.1.  For balls
// the ray is followed in the hyperboloid model, which reaches any t
// representable in the weights; in the chart the ray exits numerically near
// t ~ 18 and the evaluation throws.
inline GammaMeasure lambda_n(const ConvexDomain& dom, const HilbertOrbit& orbit,
                             double delta, const Vector& p, const Vector& x, int n) {
  if (n <= 0) return kaimanovich_nu(dom, orbit, delta, p);
  const double step = 0.1;
  const int nodes = static_cast<int>(std::lround(n / step));

  std::vector<double> acc(orbit.words.size(), 0.0);
  auto accumulate = [&](const std::vector<double>& dists, double coeff) {
    double total = 0.0;
    std::vector<double> w(dists.size());
    for (size_t i = 0; i < w.size(); ++i) total += (w[i] = std::exp(-delta * dists[i]));
    for (size_t i = 0; i < w.size(); ++i) acc[i] += coeff * w[i] / total;
  };

  if (dom.kind == ConvexDomain::Kind::Ball) {
    Vector xu = (x - dom.center) / dom.radius;
    if (std::abs(xu.norm() - 1.0) > 1e-9)
      throw Error("lambda_n: x must lie on the boundary sphere");
    Vector pl = detail::klein_lift(dom, p);
    Vector nl(dom.m + 1);
    nl << xu, 1.0;  // null lift of the ideal endpoint
    double pn = detail::mink(pl, nl);
    Vector v = nl / pn - pl;  // unit spacelike tangent toward x
    std::vector<double> dists(orbit.words.size());
    for (int k = 0; k <= nodes; ++k) {
      double t = k * step;
      Vector l = std::cosh(t) * pl + std::sinh(t) * v;
      for (size_t i = 0; i < dists.size(); ++i)
        dists[i] = std::acosh(std::max(1.0, detail::mink(l, orbit.lifts[i])));
      accumulate(dists, (k == 0 || k == nodes) ? 0.5 : 1.0);
    }
  } else {
    if (dom.contains(x, kInteriorMargin) || !dom.contains(x, -kInteriorMargin))
      throw Error("lambda_n: x must lie on the domain boundary");
    std::vector<double> dists(orbit.words.size());
    for (int k = 0; k <= nodes; ++k) {
      double t = k * step;
      // Invert dist(p, p + u (x - p)) = t by bisection in u.
      double lo = 0.0, hi = 1.0 - 1e-14;
      if (hilbert_distance(dom, p, p + hi * (x - p)) < t)
        throw Error("lambda_n: ray exits numerically before n");
      for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        double mid = 0.5 * (lo + hi);
        (hilbert_distance(dom, p, p + mid * (x - p)) < t ? lo : hi) = mid;
      }
      Vector y = p + 0.5 * (lo + hi) * (x - p);
      for (size_t i = 0; i < dists.size(); ++i)
        dists[i] = hilbert_distance(dom, y, orbit.points[i]);
      accumulate(dists, (k == 0 || k == nodes) ? 0.5 : 1.0);
    }
  }

  for (double& a : acc) a *= step / static_cast<double>(n);
  double total = 0.0;
  for (double a : acc) total += a;
  for (double& a : acc) a /= total;
  return {orbit.words, std::move(acc)};
}

}  // namespace pslab
