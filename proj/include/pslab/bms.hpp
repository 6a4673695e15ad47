#pragma once

// Gromov-product densities, the invariance cocycle identity behind the
// Bowen-Margulis-Sullivan measure, and Hopf-coordinate checks.

#include <algorithm>
#include <cmath>
#include <vector>

#include "pslab/flags.hpp"
#include "pslab/shadows.hpp"

namespace pslab {

// e^{delta phi(G(xi, eta))}.
inline double gromov_density(const TransversePair& pair, const Functional& phi,
                             double delta) {
  return std::exp(delta * phi(gromov_product(pair)));
}

// |phi G(g xi, g eta) - phi G(xi, eta) - phi B(g, xi) - (i* phi) B(g, eta)|.
// Both Gromov products are evaluated through independent witness
// reconstructions so the identity is not trivially satisfied.
inline double invariance_residual(const Matrix& g, const TransversePair& pair,
                                  const Functional& phi) {
  TransversePair moved{act(g, pair.xi), act(g, pair.eta), std::nullopt};
  TransversePair base{pair.xi, pair.eta, std::nullopt};
  double lhs = phi(gromov_product(moved));
  double rhs = phi(gromov_product(base)) + phi(iwasawa_cocycle(g, pair.xi)) +
               istar(phi)(iwasawa_cocycle(g, pair.eta));
  return std::abs(lhs - rhs);
}

struct BmsPair {
  TransversePair pair;
  double weight = 0.0;   // normalized product weight among the collected pairs
  double density = 0.0;  // e^{delta phi G}
};

struct BmsSample {
  std::vector<BmsPair> pairs;
  double transverse_fraction = 0.0;
  double delta = 0.0;
};

// The n highest-product-weight transverse atom pairs of mu_phi x mu_istar.
// All distinct-atom pairs are scanned, so the reported transverse fraction
// reflects the whole product measure, not just the retained sample.
inline BmsSample bms_sample(const AtomicMeasure& mu_phi, const AtomicMeasure& mu_istar,
                            const Functional& phi, double delta, int n) {
  const RootSubset full = RootSubset::full(mu_phi.theta.d);
  if (!(mu_phi.theta == full) || !(mu_istar.theta == full))
    throw Error("bms_sample: both measures must live on full flags");

  struct Candidate {
    size_t i, j;
    double w;
  };
  std::vector<Candidate> transverse_pairs;
  std::size_t scanned = 0, transverse_count = 0;
  for (size_t i = 0; i < mu_phi.atoms.size(); ++i)
    for (size_t j = 0; j < mu_istar.atoms.size(); ++j) {
      const auto& xi = mu_phi.atoms[i];
      const auto& eta = mu_istar.atoms[j];
      if (flags_equal(xi.flag, eta.flag)) continue;
      ++scanned;
      if (!transverse(xi.flag, eta.flag)) continue;
      ++transverse_count;
      transverse_pairs.push_back({i, j, xi.weight * eta.weight});
    }
  if (transverse_pairs.empty()) throw NoTransversePairs("no transverse atom pair");

  std::sort(transverse_pairs.begin(), transverse_pairs.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.w != b.w) return a.w > b.w;
              if (a.i != b.i) return a.i < b.i;
              return a.j < b.j;
            });
  if (static_cast<int>(transverse_pairs.size()) > n) transverse_pairs.resize(n);

  BmsSample out;
  out.delta = delta;
  out.transverse_fraction =
      scanned ? static_cast<double>(transverse_count) / static_cast<double>(scanned) : 0.0;
  double total = 0.0;
  for (const auto& c : transverse_pairs) total += c.w;
  for (const auto& c : transverse_pairs) {
    TransversePair pair{mu_phi.atoms[c.i].flag, mu_istar.atoms[c.j].flag, std::nullopt};
    out.pairs.push_back({pair, c.w / total, gromov_density(pair, phi, delta)});
  }
  return out;
}

// Max deviation of hopf(g h) from (g x, g y, u + B(g, x)) applied to hopf(h).
inline double hopf_action_check(const Matrix& g, const Matrix& h) {
  auto base = hopf(h);
  auto moved = hopf(g * h);
  double df = flag_distance(moved.forward, act(g, base.forward));
  double db = flag_distance(moved.backward, act(g, base.backward));
  auto expected = base.cocycle + iwasawa_cocycle(g, base.forward);
  double da = (moved.cocycle.entries - expected.entries).cwiseAbs().maxCoeff();
  return std::max({df, db, da});
}

}  // namespace pslab
