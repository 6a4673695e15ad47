#pragma once

// Shadows at flag points, atomic Patterson-Sullivan measures, Shadow-Lemma
// and conformality reports, and conical tracking of word geodesics.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "pslab/flags.hpp"
#include "pslab/orbit.hpp"

namespace pslab {

namespace detail {

// Full-flag frame of a 3x3 product that stays accurate at any word length:
// the top singular directions of m and of its (compound-tracked) inverse
// transpose give the first and last columns, the middle one is their cross
// product.
inline Matrix accurate_frame3(const Matrix& m, const Matrix& m_inv) {
  Eigen::JacobiSVD<Matrix> top(m, Eigen::ComputeFullU);
  Eigen::JacobiSVD<Matrix> bottom(m_inv.transpose(), Eigen::ComputeFullU);
  Eigen::Vector3d u1 = top.matrixU().col(0);
  Eigen::Vector3d u3 = bottom.matrixU().col(0);
  u3 -= u3.dot(u1) * u1;
  u3.normalize();
  Eigen::Vector3d u2 = u3.cross(u1);
  Matrix f(3, 3);
  f << u1, u2, u3;
  return canonicalize_frame(f);
}

}  // namespace detail

// The shadow O_R^theta(g): flags xi = g xi' with
// omega_j(B_theta^IW(g, xi')) > omega_j(kappa(g)) - R for every j in theta.
// The membership cocycle is evaluated from the singular data (kappa, U-frame)
// of g rather than through g^{-1} xi: the direct matrix-vector product loses
// the tiny norms that decide membership once kappa_1 - kappa_d passes
// -log eps, while kappa is compound-accurate and the frame columns are unit
// vectors, so the structured sum below has no cancellation blow-up.
struct ShadowSpec {
  Matrix g;
  Matrix uframe;  // left singular frame of g
  CartanVector kappa;
  double r = 0.0;
  RootSubset theta;

  ShadowSpec(Matrix g_, double r_, RootSubset theta_)
      : g(std::move(g_)), r(r_), theta(std::move(theta_)) {
    if (r <= 0.0) throw Error("shadow radius must be positive");
    kappa = cartan_projection(g);
    Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullU);
    uframe = svd.matrixU();
  }

  ShadowSpec(const OrbitElement& e, double r_, RootSubset theta_)
      : g(e.m), kappa(e.kappa), r(r_), theta(std::move(theta_)) {
    if (r <= 0.0) throw Error("shadow radius must be positive");
    if (g.rows() == 3) {
      uframe = detail::accurate_frame3(e.m, inverse_from_compounds(e));
    } else {
      Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullU);
      uframe = svd.matrixU();
    }
  }
};

// omega_j(B^IW(g, g^{-1} xi)) = -log ||Lambda^j(g^{-1}) (xi_1 ^ ... ^ xi_j)||,
// expanded over the singular basis:
//   ||...||^2 = sum_K e^{-2 omega_K(kappa)} det(U_K^T Xi_j)^2
// over j-element index sets K, evaluated as a shifted log-sum-exp.
inline double shadow_cocycle_weight(const CartanVector& kappa, const Matrix& uframe,
                                    const PartialFlag& xi, int j) {
  const int d = kappa.dim();
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (j == 1) {
    // Hot path for line shadows: no minors, no allocation.
    double best = neg_inf;
    for (int k = 0; k < d; ++k) {
      double c = uframe.col(k).dot(xi.frame.col(0));
      if (c != 0.0)
        best = std::max(best, -2.0 * kappa.entries[k] + 2.0 * std::log(std::abs(c)));
    }
    if (best == neg_inf) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      double c = uframe.col(k).dot(xi.frame.col(0));
      if (c != 0.0)
        s += std::exp(-2.0 * kappa.entries[k] + 2.0 * std::log(std::abs(c)) - best);
    }
    return -0.5 * (best + std::log(s));
  }

  static thread_local std::vector<std::vector<std::vector<int>>> subset_cache[16];
  auto& cache = subset_cache[d];
  if (cache.size() <= static_cast<size_t>(j)) cache.resize(j + 1);
  if (cache[j].empty()) cache[j] = detail::subsets_lex(d, j);

  Matrix dots = uframe.transpose() * xi.frame.leftCols(j);
  double best = neg_inf;
  std::vector<double> terms;
  terms.reserve(cache[j].size());
  Matrix sub(j, j);
  for (const auto& k_set : cache[j]) {
    double omega_k = 0.0;
    for (int i = 0; i < j; ++i) {
      omega_k += kappa.entries[k_set[i]];
      sub.row(i) = dots.row(k_set[i]);
    }
    double det = sub.determinant();
    if (det == 0.0) continue;
    double t = -2.0 * omega_k + 2.0 * std::log(std::abs(det));
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (terms.empty()) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double t : terms) s += std::exp(t - best);
  return -0.5 * (best + std::log(s));
}

inline bool shadow_contains(const ShadowSpec& spec, const PartialFlag& xi) {
  if (!(xi.theta == spec.theta)) throw Error("shadow_contains: theta mismatch");
  for (int j : spec.theta.indices) {
    double b = shadow_cocycle_weight(spec.kappa, spec.uframe, xi, j);
    if (!(b > weight_eval(j, spec.kappa) - spec.r)) return false;
  }
  return true;
}

// Lemma "g O_R(h) c O_R'(gh)" translate bound.
inline double translated_radius(double r, const Matrix& g) {
  auto k = cartan_projection(g);
  double m = 0.0;
  for (int j = 1; j < k.dim(); ++j) m = std::max(m, weight_eval(j, k));
  return r + 2.0 * m;
}

struct Atom {
  std::vector<int> word;
  PartialFlag flag;
  double weight = 0.0;
};

struct AtomicMeasure {
  RootSubset theta;
  Functional phi;
  double s = 0.0;
  int max_len = 0;
  std::size_t degenerate_skipped = 0;
  std::vector<Atom> atoms;

  double mass_near(const PartialFlag& x, double radius) const {
    double m = 0.0;
    for (const auto& a : atoms)
      if (flag_distance(a.flag, x) < radius) m += a.weight;
    return m;
  }
};

// Atoms U_theta(gamma) with weights proportional to e^{-s phi(kappa(gamma))},
// normalized.  Elements without a theta-gap (the identity, at least) are
// skipped and counted.
inline AtomicMeasure patterson_construct(const OrbitBall& orbit, const Functional& phi,
                                         double s, const RootSubset& theta) {
  AtomicMeasure mu;
  mu.theta = theta;
  mu.phi = phi;
  mu.s = s;
  mu.max_len = orbit.max_word_length;
  double total = 0.0;
  for (const auto& e : orbit.elements) {
    PartialFlag f;
    try {
      f = u_theta(e.m, theta);
    } catch (const DegenerateGap&) {
      ++mu.degenerate_skipped;
      continue;
    }
    double w = std::exp(-s * phi(e.kappa));
    total += w;
    mu.atoms.push_back({e.word, std::move(f), w});
  }
  if (mu.atoms.empty()) throw AllDegenerate("no orbit element admits U_theta");
  for (auto& a : mu.atoms) a.weight /= total;
  return mu;
}

inline double shadow_mass(const AtomicMeasure& mu, const ShadowSpec& spec) {
  double m = 0.0;
  for (const auto& a : mu.atoms)
    if (shadow_contains(spec, a.flag)) m += a.weight;
  return m;
}

struct ShadowRatioRow {
  std::vector<int> word;
  double mass = 0.0;
  double ratio = 0.0;
};

struct LengthProfileRow {
  int length = 0;
  int count = 0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};

struct ShadowLemmaReport {
  double r = 0.0;
  double delta = 0.0;
  double c_hat = 0.0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  std::size_t empty_shadows = 0;
  std::vector<ShadowRatioRow> rows;
  std::vector<LengthProfileRow> length_profile;
};

namespace detail {

inline ShadowLemmaReport finish_shadow_report(
    double r, double delta, std::vector<ShadowRatioRow> rows,
    const std::vector<int>& lengths, std::size_t empty_count) {
  ShadowLemmaReport rep;
  rep.r = r;
  rep.delta = delta;
  rep.empty_shadows = empty_count;
  rep.rows = std::move(rows);
  if (rep.rows.empty()) throw Error("shadow lemma: every tested shadow is empty");
  rep.min_ratio = rep.max_ratio = rep.rows.front().ratio;
  for (const auto& row : rep.rows) {
    rep.min_ratio = std::min(rep.min_ratio, row.ratio);
    rep.max_ratio = std::max(rep.max_ratio, row.ratio);
  }
  rep.c_hat = rep.max_ratio / rep.min_ratio;
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    int len = lengths[i];
    auto it = std::find_if(rep.length_profile.begin(), rep.length_profile.end(),
                           [&](const LengthProfileRow& p) { return p.length == len; });
    if (it == rep.length_profile.end()) {
      rep.length_profile.push_back({len, 1, rep.rows[i].ratio, rep.rows[i].ratio});
    } else {
      ++it->count;
      it->min_ratio = std::min(it->min_ratio, rep.rows[i].ratio);
      it->max_ratio = std::max(it->max_ratio, rep.rows[i].ratio);
    }
  }
  std::sort(rep.length_profile.begin(), rep.length_profile.end(),
            [](const LengthProfileRow& a, const LengthProfileRow& b) {
              return a.length < b.length;
            });
  return rep;
}

}  // namespace detail

// ratio(gamma) = mu(O_R(gamma)) e^{delta phi(kappa(gamma))}; C_hat is the
// spread of the ratios.  Empty shadows are recorded, not fatal.
inline ShadowLemmaReport shadow_lemma_report(const AtomicMeasure& mu,
                                             const OrbitBall& tested, double r,
                                             double delta, const Functional& phi) {
  std::vector<ShadowRatioRow> rows;
  std::vector<int> lengths;
  std::size_t empty_count = 0;
  for (const auto& e : tested.elements) {
    ShadowSpec spec(e, r, mu.theta);
    double m = shadow_mass(mu, spec);
    if (m <= 0.0) {
      ++empty_count;
      continue;
    }
    rows.push_back({e.word, m, m * std::exp(delta * phi(e.kappa))});
    lengths.push_back(static_cast<int>(e.word.size()));
  }
  return detail::finish_shadow_report(r, delta, std::move(rows), lengths, empty_count);
}

// Same report without materializing the measure: one streaming pass over the
// enumeration accumulates every tested shadow's mass in O(#shadows) memory.
inline ShadowLemmaReport shadow_lemma_stream(const GeneratorSet& gens, int measure_len,
                                             const Functional& phi, double s,
                                             const RootSubset& theta,
                                             const std::vector<ShadowSpec>& specs,
                                             double r, double delta) {
  std::vector<double> masses(specs.size(), 0.0);
  double total = 0.0;
  enumerate_visit(gens, measure_len, [&](const OrbitElement& e) {
    PartialFlag f;
    try {
      f = u_theta(e.m, theta);
    } catch (const DegenerateGap&) {
      return;
    }
    double w = std::exp(-s * phi(e.kappa));
    total += w;
    for (size_t i = 0; i < specs.size(); ++i)
      if (shadow_contains(specs[i], f)) masses[i] += w;
  });
  if (total <= 0.0) throw AllDegenerate("no orbit element admits U_theta");
  std::vector<ShadowRatioRow> rows;
  std::vector<int> lengths;
  std::size_t empty_count = 0;
  for (size_t i = 0; i < specs.size(); ++i) {
    if (masses[i] <= 0.0) {
      ++empty_count;
      continue;
    }
    double m = masses[i] / total;
    rows.push_back({{}, m, m * std::exp(delta * phi(specs[i].kappa))});
    lengths.push_back(0);
  }
  return detail::finish_shadow_report(r, delta, std::move(rows), lengths, empty_count);
}

struct ConformalityReport {
  std::vector<double> residuals;
  double median = 0.0;
  double iqr = 0.0;
  std::size_t skipped = 0;
};

namespace detail {

inline ConformalityReport summarize_residuals(std::vector<double> residuals,
                                              std::size_t skipped) {
  if (residuals.size() < 3)
    throw Error("conformality: insufficient matched mass across sampled shadows");
  std::sort(residuals.begin(), residuals.end());
  ConformalityReport rep;
  rep.skipped = skipped;
  auto q = [&](double p) {
    double idx = p * static_cast<double>(residuals.size() - 1);
    auto lo = static_cast<size_t>(idx);
    double frac = idx - static_cast<double>(lo);
    size_t hi = std::min(lo + 1, residuals.size() - 1);
    return residuals[lo] * (1.0 - frac) + residuals[hi] * frac;
  };
  rep.median = q(0.5);
  rep.iqr = q(0.75) - q(0.25);
  rep.residuals = std::move(residuals);
  return rep;
}

}  // namespace detail

// residual = log(mu(gamma O)/mu(O)) + delta phi(B_theta^IW(gamma^{-1}, x_O))
// over matched shadows O = O_r(h) centred at sampled atoms (h the atom's
// word element).  mu(gamma O) is the gamma-translate mass, accumulated as the
// weight of atoms a with gamma a in O; pairing it with the B(gamma^{-1}, x_O)
// correction is what makes the residual vanish for a conformal density.  The
// translated flag is evaluated as U_theta(gamma a) from the concatenated word
// rather than by pushing the stored frame through the action: the two agree
// up to e^{-2 min_alpha(kappa(a))}, and the word product keeps deep atoms
// compound-accurate where translating the stored frame would re-decide their
// membership from rounding noise.
inline ConformalityReport conformality_residual(const AtomicMeasure& mu,
                                                const OrbitBall& orbit,
                                                const GeneratorSet& gens,
                                                const std::vector<int>& gamma_word,
                                                double r, double delta,
                                                int max_samples = 60) {
  auto find_element = [&](const std::vector<int>& word) -> const OrbitElement* {
    auto cmp = [](const OrbitElement& e, const std::vector<int>& w) {
      if (e.word.size() != w.size()) return e.word.size() < w.size();
      return e.word < w;
    };
    auto it = std::lower_bound(orbit.elements.begin(), orbit.elements.end(), word, cmp);
    if (it == orbit.elements.end() || it->word != word) return nullptr;
    return &*it;
  };

  const Matrix gamma_inv = element_from_word(gens, inverse_word(gamma_word)).m;
  // Flags of gamma a for every atom, shared by all sampled shadows.
  std::vector<std::optional<PartialFlag>> pulled;
  pulled.reserve(mu.atoms.size());
  for (const auto& a : mu.atoms) {
    std::vector<int> w = gamma_word;
    w.insert(w.end(), a.word.begin(), a.word.end());
    try {
      pulled.emplace_back(u_theta(element_from_word(gens, std::move(w)).m, mu.theta));
    } catch (const DegenerateGap&) {
      pulled.emplace_back(std::nullopt);
    }
  }

  std::vector<double> residuals;
  std::size_t skipped = 0;
  size_t stride = std::max<size_t>(1, mu.atoms.size() / static_cast<size_t>(max_samples));
  for (size_t i = 0; i < mu.atoms.size(); i += stride) {
    const Atom& atom = mu.atoms[i];
    if (atom.word.empty()) continue;
    const OrbitElement* e = find_element(atom.word);
    if (!e) continue;
    ShadowSpec spec(*e, r, mu.theta);
    double m0 = 0.0, m1 = 0.0;
    for (size_t ai = 0; ai < mu.atoms.size(); ++ai) {
      const Atom& a = mu.atoms[ai];
      if (shadow_contains(spec, a.flag)) m0 += a.weight;
      if (pulled[ai] && shadow_contains(spec, *pulled[ai])) m1 += a.weight;
    }
    if (m0 <= 0.0 || m1 <= 0.0) {
      ++skipped;
      continue;
    }
    auto b = partial_iwasawa(gamma_inv, atom.flag, mu.theta);
    residuals.push_back(std::log(m1 / m0) + delta * mu.phi(b));
  }
  return detail::summarize_residuals(std::move(residuals), skipped);
}

// Streaming counterpart: sampled shadows (with their centre atoms) are fixed
// up front, then one enumeration pass accumulates mu(O) and mu(gamma O) for
// all of them at once.  Ratios need no normalization pass.
inline ConformalityReport conformality_stream(
    const GeneratorSet& gens, int measure_len, const Functional& phi, double s,
    const RootSubset& theta, const std::vector<std::pair<ShadowSpec, PartialFlag>>& samples,
    const std::vector<int>& gamma_word, double delta) {
  const Matrix gamma = element_from_word(gens, gamma_word).m;
  const Matrix gamma_inv = element_from_word(gens, inverse_word(gamma_word)).m;
  std::vector<double> m0(samples.size(), 0.0), m1(samples.size(), 0.0);
  enumerate_visit(gens, measure_len, [&](const OrbitElement& e) {
    double w = std::exp(-s * phi(e.kappa));
    std::optional<PartialFlag> f, pulled;
    try {
      f.emplace(u_theta(e.m, theta));
    } catch (const DegenerateGap&) {
    }
    try {
      pulled.emplace(u_theta(Matrix(gamma * e.m), theta));
    } catch (const DegenerateGap&) {
    }
    for (size_t i = 0; i < samples.size(); ++i) {
      if (f && shadow_contains(samples[i].first, *f)) m0[i] += w;
      if (pulled && shadow_contains(samples[i].first, *pulled)) m1[i] += w;
    }
  });
  std::vector<double> residuals;
  std::size_t skipped = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (m0[i] <= 0.0 || m1[i] <= 0.0) {
      ++skipped;
      continue;
    }
    auto b = partial_iwasawa(gamma_inv, samples[i].second, theta);
    residuals.push_back(std::log(m1[i] / m0[i]) + delta * phi(b));
  }
  return detail::summarize_residuals(std::move(residuals), skipped);
}

struct TrackPoint {
  int n = 0;
  double min_gap = 0.0;
  double increment = 0.0;
  bool degenerate = false;
};

struct TrackResult {
  std::vector<TrackPoint> trace;
  bool converged = false;
  int converged_at = -1;
  PartialFlag limit;
};

// Trace U_Theta along the prefixes of a reduced word; CONVERGED once the
// flag increments drop below 1e-6 while every Theta-gap exceeds 5.
inline TrackResult conical_tracking(const GeneratorSet& gens, const std::vector<int>& word,
                                    const RootSubset& theta, const RootSubset& big_theta) {
  for (size_t i = 0; i + 1 < word.size(); ++i)
    if (GeneratorSet::inverse_of(word[i]) == word[i + 1])
      throw Error("conical_tracking: word is not reduced");
  for (int j : theta.indices)
    if (!big_theta.contains(j)) throw Error("conical_tracking: Theta must contain theta");

  const int d = gens.d;
  std::vector<std::vector<Matrix>> gen_compounds(gens.count());
  for (int i = 0; i < gens.count(); ++i)
    for (int k = 2; k < d; ++k)
      gen_compounds[i].push_back(detail::compound(gens.mats[i], k));

  TrackResult out;
  OrbitElement cur;
  cur.m = Matrix::Identity(d, d);
  for (int k = 2; k < d; ++k) {
    auto size = static_cast<int>(detail::subsets_lex(d, k).size());
    cur.compounds.push_back(Matrix::Identity(size, size));
  }

  std::optional<PartialFlag> prev;
  for (size_t n = 0; n < word.size(); ++n) {
    cur.m = cur.m * gens.mats[word[n]];
    for (size_t k = 0; k < cur.compounds.size(); ++k)
      cur.compounds[k] = cur.compounds[k] * gen_compounds[word[n]][k];
    cur.kappa = detail::kappa_from_compounds(cur.m, cur.compounds);

    TrackPoint pt;
    pt.n = static_cast<int>(n) + 1;
    pt.min_gap = min_theta_gap(cur.kappa, big_theta);
    if (pt.min_gap <= kDefaultGapFloor) {
      pt.degenerate = true;
      out.trace.push_back(pt);
      continue;
    }
    PartialFlag f =
        (d == 3) ? PartialFlag{big_theta,
                               detail::accurate_frame3(cur.m, inverse_from_compounds(cur))}
                 : u_theta(cur.m, big_theta);
    pt.increment = prev ? flag_distance(f, *prev)
                        : std::numeric_limits<double>::infinity();
    prev = f;
    out.trace.push_back(pt);
    out.limit = f;
    // Keep tracing after the convergence declaration: the tracked frames stay
    // accurate at any length, so later prefixes only sharpen the limit.
    if (!out.converged && pt.increment < 1e-6 && pt.min_gap > 5.0) {
      out.converged = true;
      out.converged_at = pt.n;
    }
  }
  return out;
}

}  // namespace pslab
