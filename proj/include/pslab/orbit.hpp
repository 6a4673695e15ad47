#pragma once

// Enumeration of finitely generated discrete subgroups of SL(d,R), orbital
// counting functions, Poincare series, and critical exponent estimation.

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "pslab/cartan.hpp"
#include "pslab/errors.hpp"

namespace pslab {

enum class DedupPolicy { FreeReduced, HashDedup };

// Labeled generators with inverses auto-appended. Generator 2i is the i-th
// input, 2i+1 its inverse (label suffixed with ').
struct GeneratorSet {
  int d = 0;
  std::vector<std::string> labels;
  std::vector<Matrix> mats;
  DedupPolicy policy = DedupPolicy::FreeReduced;

  GeneratorSet() = default;
  GeneratorSet(std::vector<std::pair<std::string, Matrix>> gens,
               DedupPolicy pol = DedupPolicy::FreeReduced)
      : policy(pol) {
    if (gens.empty()) throw Error("empty generator set");
    d = static_cast<int>(gens.front().second.rows());
    for (auto& [label, m] : gens) {
      check_unimodular(m);
      for (const auto& l : labels)
        if (l == label || l == label + "'") throw Error("duplicate generator label");
      labels.push_back(label);
      labels.push_back(label + "'");
      mats.push_back(m);
      mats.push_back(m.inverse());
    }
  }

  int count() const { return static_cast<int>(mats.size()); }
  static int inverse_of(int i) { return i ^ 1; }
};

inline std::string word_string(const GeneratorSet& gens, const std::vector<int>& word) {
  if (word.empty()) return "e";
  std::string s;
  for (size_t i = 0; i < word.size(); ++i) {
    if (i) s += '.';
    s += gens.labels[word[i]];
  }
  return s;
}

// compounds[k-2] is the k-th exterior power of m (matrix of k x k minors,
// row/column index sets in lexicographic order), for k = 2..d-1.  These are
// accumulated along the word via Cauchy-Binet, so the weight components
// omega_k(kappa) = log sigma_1(compound_k) stay accurate at machine precision
// for word lengths where the small singular values of the plain matrix have
// long sunk below the rounding noise floor.
struct OrbitElement {
  std::vector<int> word;
  Matrix m;
  std::vector<Matrix> compounds;
  CartanVector kappa;
};

struct DedupStats {
  std::size_t candidates = 0;
  std::size_t collapsed = 0;
};

struct OrbitBall {
  int max_word_length = 0;
  std::vector<OrbitElement> elements;  // lexicographic by word, identity first
  DedupStats dedup_stats;
};

namespace detail {

// Hash key: entries rounded to 6 decimals.
inline std::string matrix_key(const Matrix& m) {
  std::string key;
  key.reserve(static_cast<size_t>(m.size()) * 8);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      auto r = static_cast<std::int64_t>(std::llround(m(i, j) * 1e6));
      key.append(reinterpret_cast<const char*>(&r), sizeof(r));
    }
  return key;
}

inline std::vector<std::vector<int>> subsets_lex(int d, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(k);
  for (int i = 0; i < k; ++i) cur[i] = i;
  while (true) {
    out.push_back(cur);
    int pos = k - 1;
    while (pos >= 0 && cur[pos] == d - k + pos) --pos;
    if (pos < 0) break;
    ++cur[pos];
    for (int i = pos + 1; i < k; ++i) cur[i] = cur[i - 1] + 1;
  }
  return out;
}

inline Matrix compound(const Matrix& m, int k) {
  const int d = static_cast<int>(m.rows());
  auto subs = subsets_lex(d, k);
  const int n = static_cast<int>(subs.size());
  Matrix out(n, n);
  Matrix minor(k, k);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) minor(i, j) = m(subs[r][i], subs[c][j]);
      out(r, c) = minor.determinant();
    }
  return out;
}

// kappa from the tracked exterior powers: t_k = omega_k - omega_{k-1} with
// omega_k = log sigma_1(compound_k); the result sums to zero exactly.
inline CartanVector kappa_from_compounds(const Matrix& m,
                                         const std::vector<Matrix>& compounds) {
  const int d = static_cast<int>(m.rows());
  Vector omega(d);
  omega[0] = std::log(m.operatorNorm());
  for (int k = 2; k < d; ++k) omega[k - 1] = std::log(compounds[k - 2].operatorNorm());
  omega[d - 1] = 0.0;
  Vector t(d);
  t[0] = omega[0];
  for (int k = 1; k < d; ++k) t[k] = omega[k] - omega[k - 1];
  return {std::move(t), true};
}

}  // namespace detail

// Accurate inverse of an enumerated element.  Inverting the stored double
// matrix loses everything once its condition number passes 1/eps, but the
// adjugate is the (d-1)-st exterior power up to signs and indexing, and that
// one was accumulated letter by letter: inv(i,j) = (-1)^{i+j} C(d-1-j, d-1-i)
// with C the top compound (det = 1).
inline Matrix inverse_from_compounds(const OrbitElement& e) {
  const int d = static_cast<int>(e.m.rows());
  Matrix inv(d, d);
  if (d == 2) {
    inv << e.m(1, 1), -e.m(0, 1), -e.m(1, 0), e.m(0, 0);
    return inv;
  }
  const Matrix& c = e.compounds.back();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      inv(i, j) = (((i + j) % 2) ? -1.0 : 1.0) * c(d - 1 - j, d - 1 - i);
  return inv;
}

// word(g)^{-1} as a word: reversed letters, each inverted.
inline std::vector<int> inverse_word(const std::vector<int>& word) {
  std::vector<int> out(word.rbegin(), word.rend());
  for (int& l : out) l = GeneratorSet::inverse_of(l);
  return out;
}

// Matrix, tracked compounds, and kappa of an explicit word, accumulated
// letter by letter in the same order as enumeration (so rebuilding an
// enumerated word reproduces its matrices bit for bit).
inline OrbitElement element_from_word(const GeneratorSet& gens, std::vector<int> word) {
  const int d = gens.d;
  OrbitElement e;
  e.m = Matrix::Identity(d, d);
  for (int k = 2; k < d; ++k) {
    auto size = static_cast<int>(detail::subsets_lex(d, k).size());
    e.compounds.push_back(Matrix::Identity(size, size));
  }
  for (int letter : word) {
    if (letter < 0 || letter >= gens.count()) throw Error("word letter out of range");
    e.m = e.m * gens.mats[letter];
    for (int k = 2; k < d; ++k)
      e.compounds[k - 2] = e.compounds[k - 2] * detail::compound(gens.mats[letter], k);
  }
  e.kappa = detail::kappa_from_compounds(e.m, e.compounds);
  e.word = std::move(word);
  return e;
}

// Depth-first expansion of reduced words in lexicographic order.  The visitor
// receives every distinct element of word length <= max_len under the policy,
// identity (empty word) first.  The element passed to the visitor is
// transient; copy what you need.
inline void enumerate_visit(const GeneratorSet& gens, int max_len,
                            const std::function<void(const OrbitElement&)>& visit,
                            DedupStats* stats = nullptr) {
  if (max_len < 1) throw Error("enumerate: max_len must be >= 1");
  const int n = gens.count();
  const int d = gens.d;
  std::unordered_set<std::string> seen;
  const bool dedup = gens.policy == DedupPolicy::HashDedup;

  std::vector<std::vector<Matrix>> gen_compounds(n);
  for (int i = 0; i < n; ++i)
    for (int k = 2; k < d; ++k) gen_compounds[i].push_back(detail::compound(gens.mats[i], k));

  OrbitElement cur;
  cur.m = Matrix::Identity(d, d);
  for (int k = 2; k < d; ++k) {
    auto size = static_cast<int>(detail::subsets_lex(d, k).size());
    cur.compounds.push_back(Matrix::Identity(size, size));
  }
  cur.kappa = CartanVector::zero(d);
  if (dedup) seen.insert(detail::matrix_key(cur.m));
  visit(cur);

  std::function<void(const Matrix&, const std::vector<Matrix>&)> expand =
      [&](const Matrix& prefix, const std::vector<Matrix>& prefix_compounds) {
        for (int i = 0; i < n; ++i) {
          // Immediate backtracks w g g^{-1} are skipped under either policy, so
          // the hash-collapse statistic counts only nontrivial relations.
          if (!cur.word.empty() && GeneratorSet::inverse_of(cur.word.back()) == i) continue;
          Matrix m = prefix * gens.mats[i];
          if (stats) ++stats->candidates;
          if (dedup && !seen.insert(detail::matrix_key(m)).second) {
            if (stats) ++stats->collapsed;
            continue;
          }
          std::vector<Matrix> comps(prefix_compounds.size());
          for (size_t k = 0; k < comps.size(); ++k)
            comps[k] = prefix_compounds[k] * gen_compounds[i][k];
          cur.word.push_back(i);
          cur.m = m;
          cur.compounds = comps;
          cur.kappa = detail::kappa_from_compounds(m, comps);
          visit(cur);
          if (static_cast<int>(cur.word.size()) < max_len) expand(m, comps);
          cur.word.pop_back();
        }
      };
  // cur is mutated during expansion; seed the recursion from stable copies.
  const Matrix id = cur.m;
  const std::vector<Matrix> id_compounds = cur.compounds;
  expand(id, id_compounds);
}

// Depth-first expansion is lexicographic-by-prefix, not by (length, word);
// sort to get the documented deterministic order.
inline OrbitBall enumerate(const GeneratorSet& gens, int max_len) {
  OrbitBall ball;
  ball.max_word_length = max_len;
  enumerate_visit(
      gens, max_len, [&](const OrbitElement& e) { ball.elements.push_back(e); },
      &ball.dedup_stats);
  std::sort(ball.elements.begin(), ball.elements.end(),
            [](const OrbitElement& a, const OrbitElement& b) {
              if (a.word.size() != b.word.size()) return a.word.size() < b.word.size();
              return a.word < b.word;
            });
  if (gens.policy == DedupPolicy::HashDedup && ball.dedup_stats.candidates > 0 &&
      ball.dedup_stats.collapsed * 100 > ball.dedup_stats.candidates)
    throw DiscretenessSuspect("hash dedup collapsed more than 1% of candidate words");
  return ball;
}

// N(T) = #{gamma : phi(kappa(gamma)) <= T} over the enumerated ball.
inline int counting_function(const OrbitBall& orbit, const Functional& phi, double t) {
  int n = 0;
  for (const auto& e : orbit.elements)
    if (phi(e.kappa) <= t) ++n;
  return n;
}

inline double poincare_partial(const OrbitBall& orbit, const Functional& phi, double s) {
  if (s < 0) throw Error("poincare_partial: s must be >= 0");
  double sum = 0.0;
  for (const auto& e : orbit.elements) sum += std::exp(-s * phi(e.kappa));
  return sum;
}

enum class ExponentMethod { CountRegression, SeriesRoot };

struct ExponentEstimate {
  double delta_hat = 0.0;
  ExponentMethod method = ExponentMethod::CountRegression;
  double window_min = 0.0;
  double window_max = 0.0;
  double slope_stderr = 0.0;
  double cross_method_gap = 0.0;
  int sample_points = 0;
};

// Least-squares slope of log N(T) against T over [0.4, 0.9] * T_max, with
// N(T) read off a sorted list of magnitudes phi(kappa(gamma)).
inline ExponentEstimate exponent_from_magnitudes(std::vector<double> values) {
  if (values.empty()) throw InsufficientRange("no magnitudes");
  std::sort(values.begin(), values.end());
  const double t_max = values.back();
  const double lo = 0.4 * t_max, hi = 0.9 * t_max;

  std::vector<double> ts, logs;
  std::size_t count = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ++count;
    bool last_of_value = (i + 1 == values.size()) || (values[i + 1] > values[i] + 1e-12);
    if (last_of_value && values[i] >= lo && values[i] <= hi) {
      ts.push_back(values[i]);
      logs.push_back(std::log(static_cast<double>(count)));
    }
  }
  if (ts.size() < 8)
    throw InsufficientRange("fewer than 8 distinct magnitudes in regression window");

  const auto n = static_cast<double>(ts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sx += ts[i];
    sy += logs[i];
    sxx += ts[i] * ts[i];
    sxy += ts[i] * logs[i];
  }
  const double denom = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  double rss = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double r = logs[i] - (intercept + slope * ts[i]);
    rss += r * r;
  }
  const double stderr_slope =
      std::sqrt(std::max(rss, 0.0) / std::max(n - 2.0, 1.0) * n / denom);

  ExponentEstimate est;
  est.delta_hat = std::max(slope, 0.0);
  est.method = ExponentMethod::CountRegression;
  est.window_min = lo;
  est.window_max = hi;
  est.slope_stderr = stderr_slope;
  est.sample_points = static_cast<int>(ts.size());
  return est;
}

inline ExponentEstimate critical_exponent(const OrbitBall& orbit, const Functional& phi,
                                          ExponentMethod method) {
  if (orbit.elements.empty()) throw Error("critical_exponent: empty orbit");
  if (method == ExponentMethod::CountRegression) {
    std::vector<double> values;
    values.reserve(orbit.elements.size());
    for (const auto& e : orbit.elements) values.push_back(phi(e.kappa));
    return exponent_from_magnitudes(std::move(values));
  }

  // SeriesRoot: the two outermost word-length shells of the partial sums form
  // the tail; bisect for the s where consecutive tails stop growing.
  const int l = orbit.max_word_length;
  if (l < 4) throw InsufficientRange("SeriesRoot needs max_word_length >= 4");
  auto tail = [&](double s, int upto) {
    double sum = 0.0;
    for (const auto& e : orbit.elements) {
      auto len = static_cast<int>(e.word.size());
      if (len > upto - 2 && len <= upto) sum += std::exp(-s * phi(e.kappa));
    }
    return sum;
  };
  auto ratio = [&](double s) { return tail(s, l) / tail(s, l - 2); };
  double lo = 0.0, hi = 1.0;
  if (ratio(lo) <= 1.0) {
    ExponentEstimate est;
    est.method = ExponentMethod::SeriesRoot;
    est.window_max = static_cast<double>(l);
    return est;  // subexponential growth
  }
  while (ratio(hi) > 1.0 && hi < 64.0) hi *= 2.0;
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    (ratio(mid) > 1.0 ? lo : hi) = mid;
  }
  ExponentEstimate est;
  est.delta_hat = 0.5 * (lo + hi);
  est.method = ExponentMethod::SeriesRoot;
  est.window_min = static_cast<double>(l - 2);
  est.window_max = static_cast<double>(l);
  return est;
}

}  // namespace pslab
