// pslab: reproducible experiment runner for the Patterson-Sullivan laboratory.
//
// Subcommands bind the library modules to JSON configs and JSON/CSV reports.
// Every report is a pure function of (config, seed, version) and embeds the
// config hash, the a-norm convention, and the tolerance constants, so repeated
// runs are byte-identical.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <thread>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pslab/bms.hpp"
#include "pslab/convexity.hpp"
#include "pslab/fixtures.hpp"
#include "pslab/hilbert.hpp"
#include "pslab/shadows.hpp"

using json = nlohmann::json;
using namespace pslab;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kANorm =
    "sup norm on a: omega_k from log sigma_1 of the k-th exterior power";

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  int max_len = 0;  // 0: use the config / subcommand default
  std::string out = ".";
  std::string format = "json";
  int jobs = 1;
};

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json load_config(const Options& opt) {
  if (opt.config_path.empty()) return json::object();
  std::ifstream in(opt.config_path);
  if (!in) throw Error("cannot open config file: " + opt.config_path);
  json cfg = json::parse(in, nullptr, true);
  if (!cfg.is_object()) throw Error("config must be a JSON object");
  return cfg;
}

void check_keys(const json& cfg, const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : cfg.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error("unknown config key: " + key);
  }
}

GeneratorSet group_from_config(const json& cfg, const std::string& fallback_fixture) {
  if (cfg.contains("generators")) {
    std::vector<std::pair<std::string, Matrix>> gens;
    const auto& list = cfg.at("generators");
    if (!list.is_array() || list.empty()) throw Error("generators must be a nonempty array");
    int idx = 0;
    for (const auto& entry : list) {
      const auto& rows = entry.is_object() ? entry.at("matrix") : entry;
      std::string label =
          entry.is_object() && entry.contains("label") ? entry.at("label").get<std::string>()
                                                       : std::string(1, char('a' + idx));
      int d = static_cast<int>(rows.size());
      Matrix m(d, d);
      for (int i = 0; i < d; ++i) {
        if (static_cast<int>(rows.at(i).size()) != d)
          throw Error("generator matrix is not square");
        for (int j = 0; j < d; ++j) m(i, j) = rows.at(i).at(j).get<double>();
      }
      gens.emplace_back(label, m);
      ++idx;
    }
    return GeneratorSet(std::move(gens));
  }
  std::string name = cfg.value("fixture", fallback_fixture);
  if (name == "cyclic") return fixtures::cyclic();
  if (name == "schottky_sl2") return fixtures::schottky_sl2();
  if (name == "schottky_so21") return fixtures::schottky_so21();
  if (name == "zariski_schottky") return fixtures::zariski_schottky();
  throw Error("unknown fixture: " + name);
}

Functional functional_from_config(const json& cfg, int d, const std::string& key,
                                  const Functional& fallback) {
  if (!cfg.contains(key)) return fallback;
  const auto& f = cfg.at(key);
  if (f.is_string()) {
    std::string name = f.get<std::string>();
    if (name == "phi_H") return hilbert_functional(d);
    if (name.rfind("omega", 0) == 0) {
      int j = std::stoi(name.substr(5));
      return Functional::omega(d, j);
    }
    throw Error("unknown functional name: " + name);
  }
  if (f.is_array()) {
    if (static_cast<int>(f.size()) != d - 1)
      throw Error("functional needs d-1 fundamental-weight coefficients");
    Functional out = Functional::zero(d);
    for (int j = 0; j < d - 1; ++j) out.weight_coeffs[j] = f.at(j).get<double>();
    return out;
  }
  throw Error("functional must be a name or a coefficient array");
}

RootSubset theta_from_config(const json& cfg, int d) {
  if (!cfg.contains("theta")) return RootSubset(d, {1});
  std::vector<int> idx;
  for (const auto& j : cfg.at("theta")) idx.push_back(j.get<int>());
  return RootSubset(d, idx);
}

json tolerances_json() {
  return json{{"chamber_gap_floor", 1e-6},
              {"estimator_noise", kNoise.estimator},
              {"flag_equality", 1e-7},
              {"scaling_noise", kNoise.scaling},
              {"transversality_floor", 1e-10},
              {"witness_floor", 1e-12}};
}

json estimate_json(const ExponentEstimate& est) {
  return json{{"cross_method_gap", est.cross_method_gap},
              {"delta_hat", est.delta_hat},
              {"method", est.method == ExponentMethod::CountRegression ? "CountRegression"
                                                                       : "SeriesRoot"},
              {"sample_points", est.sample_points},
              {"slope_stderr", est.slope_stderr},
              {"window_max", est.window_max},
              {"window_min", est.window_min}};
}

json base_report(const std::string& subcommand, const json& cfg, const Options& opt) {
  json rep;
  rep["a_norm"] = kANorm;
  rep["config"] = cfg;
  rep["config_hash"] =
      hex64(fnv1a64(cfg.dump() + "|seed=" + std::to_string(opt.seed) + "|v=" + kVersion));
  rep["seed"] = opt.seed;
  rep["subcommand"] = subcommand;
  rep["tolerances"] = tolerances_json();
  rep["version"] = kVersion;
  return rep;
}

void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
}

// CSV cells are plain numbers or generator words; neither needs quoting.
std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

void emit(const Options& opt, const std::string& name, const json& report,
          const std::vector<std::string>& csv_header = {},
          const std::vector<std::vector<std::string>>& csv_rows = {}) {
  std::filesystem::create_directories(opt.out);
  auto dir = std::filesystem::path(opt.out);
  write_text_file(dir / (name + ".json"), report.dump(2) + "\n");
  if (opt.format == "csv" && !csv_header.empty())
    write_text_file(dir / (name + ".csv"), to_csv(csv_header, csv_rows));
  if (opt.format == "text")
    std::cout << report.dump(2) << "\n";
  else
    std::cout << name << ": report written to " << (dir / (name + ".json")).string() << "\n";
}

int effective_max_len(const Options& opt, const json& cfg, int fallback) {
  if (opt.max_len > 0) return opt.max_len;
  return cfg.value("max_len", fallback);
}

// Deterministic worker pool: results are written into index-addressed slots,
// so the assembled report does not depend on scheduling.
void parallel_for(int jobs, std::size_t n, const std::function<void(std::size_t)>& body) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------

int run_kappa(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len"});
  auto gens = group_from_config(cfg, "zariski_schottky");
  const int d = gens.d;
  auto orbit = enumerate(gens, effective_max_len(opt, cfg, 4));

  std::vector<std::vector<Matrix>> letters(std::max(1, d - 1));
  for (const auto& g : gens.mats) {
    letters[0].push_back(g);
    for (int k = 2; k <= d - 1; ++k) letters[k - 1].push_back(detail::compound(g, k));
  }

  std::vector<json> rows(orbit.elements.size());
  parallel_for(opt.jobs, orbit.elements.size(), [&](std::size_t i) {
    const auto& e = orbit.elements[i];
    std::vector<double> lambda(d, 0.0);
    if (!e.word.empty()) {
      double prev = 0.0;
      for (int k = 1; k <= d - 1; ++k) {
        double cur = detail::log_rho_word(letters[k - 1], e.word);
        lambda[k - 1] = cur - prev;
        prev = cur;
      }
      lambda[d - 1] = -prev;  // det 1
    }
    json row;
    row["word"] = word_string(gens, e.word);
    row["len"] = e.word.size();
    row["kappa"] = std::vector<double>(e.kappa.entries.data(), e.kappa.entries.data() + d);
    row["lambda"] = lambda;
    rows[i] = std::move(row);
  });

  json rep = base_report("kappa", cfg, opt);
  rep["results"] = json{{"count", orbit.elements.size()}, {"rows", rows}};

  std::vector<std::string> header = {"word", "len"};
  for (int i = 1; i <= d; ++i) header.push_back("kappa_" + std::to_string(i));
  for (int i = 1; i <= d; ++i) header.push_back("lambda_" + std::to_string(i));
  std::vector<std::vector<std::string>> csv;
  for (const auto& row : rows) {
    std::vector<std::string> line = {row["word"].get<std::string>(),
                                     std::to_string(row["len"].get<int>())};
    for (const auto& v : row["kappa"]) line.push_back(fmt(v.get<double>()));
    for (const auto& v : row["lambda"]) line.push_back(fmt(v.get<double>()));
    csv.push_back(std::move(line));
  }
  emit(opt, "kappa", rep, header, csv);
  return 0;
}

int run_exponent(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len", "functional"});
  auto gens = group_from_config(cfg, "zariski_schottky");
  auto phi = functional_from_config(cfg, gens.d, "functional", Functional::omega(gens.d, 1));
  auto orbit = enumerate(gens, effective_max_len(opt, cfg, 6));

  json results;
  auto reg = critical_exponent(orbit, phi, ExponentMethod::CountRegression);
  results["count_regression"] = estimate_json(reg);
  try {
    results["series_root"] =
        estimate_json(critical_exponent(orbit, phi, ExponentMethod::SeriesRoot));
  } catch (const Error& e) {
    results["series_root"] = json{{"error", e.what()}};
  }
  results["delta_hat"] = reg.delta_hat;

  json rep = base_report("exponent", cfg, opt);
  rep["results"] = results;
  emit(opt, "exponent", rep);
  std::cout << "delta_hat = " << reg.delta_hat << "\n";
  return 0;
}

int run_limitset(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len", "functional", "theta", "s"});
  auto gens = group_from_config(cfg, "zariski_schottky");
  const int d = gens.d;
  auto phi = functional_from_config(cfg, d, "functional", Functional::omega(d, 1));
  auto theta = theta_from_config(cfg, d);
  auto orbit = enumerate(gens, effective_max_len(opt, cfg, 6));
  double s = cfg.value(
      "s", critical_exponent(orbit, phi, ExponentMethod::CountRegression).delta_hat + 0.05);
  auto mu = patterson_construct(orbit, phi, s, theta);

  const int cols = theta.indices.back();
  std::vector<json> rows;
  std::vector<std::vector<std::string>> csv;
  for (const auto& a : mu.atoms) {
    json row;
    row["word"] = word_string(gens, a.word);
    row["weight"] = a.weight;
    std::vector<double> frame;
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < d; ++r) frame.push_back(a.flag.frame(r, c));
    row["frame"] = frame;
    std::vector<std::string> line = {row["word"].get<std::string>(), fmt(a.weight)};
    for (double v : frame) line.push_back(fmt(v));
    rows.push_back(std::move(row));
    csv.push_back(std::move(line));
  }

  json rep = base_report("limitset", cfg, opt);
  rep["results"] = json{{"atoms", rows},
                        {"count", mu.atoms.size()},
                        {"degenerate_skipped", mu.degenerate_skipped},
                        {"s", s},
                        {"theta", theta.indices}};
  std::vector<std::string> header = {"word", "weight"};
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < d; ++r)
      header.push_back("f" + std::to_string(c + 1) + "_" + std::to_string(r + 1));
  emit(opt, "limitset", rep, header, csv);
  return 0;
}

int run_ps(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len", "functional", "theta", "s", "r",
                   "tested_len", "gamma"});
  auto gens = group_from_config(cfg, "zariski_schottky");
  const int d = gens.d;
  auto phi = functional_from_config(cfg, d, "functional", Functional::omega(d, 1));
  auto theta = theta_from_config(cfg, d);
  const int max_len = effective_max_len(opt, cfg, 8);
  auto orbit = enumerate(gens, max_len);
  double s = cfg.value(
      "s", critical_exponent(orbit, phi, ExponentMethod::CountRegression).delta_hat + 0.05);
  double r = cfg.value("r", 4.0);
  auto mu = patterson_construct(orbit, phi, s, theta);

  auto tested = enumerate(gens, cfg.value("tested_len", std::max(1, max_len / 2)));
  auto shadow = shadow_lemma_report(mu, tested, r, s, phi);

  std::vector<int> gamma_word = {0};
  if (cfg.contains("gamma")) gamma_word = cfg.at("gamma").get<std::vector<int>>();
  auto conf = conformality_residual(mu, orbit, gens, gamma_word, r, s);

  json rep = base_report("ps", cfg, opt);
  json profile = json::array();
  for (const auto& row : shadow.length_profile)
    profile.push_back(json{{"count", row.count},
                           {"length", row.length},
                           {"max_ratio", row.max_ratio},
                           {"min_ratio", row.min_ratio}});
  rep["results"] =
      json{{"conformality", json{{"gamma", word_string(gens, gamma_word)},
                                 {"iqr", conf.iqr},
                                 {"median", conf.median},
                                 {"residual_count", conf.residuals.size()},
                                 {"skipped", conf.skipped}}},
           {"measure", json{{"atoms", mu.atoms.size()},
                            {"degenerate_skipped", mu.degenerate_skipped},
                            {"s", s}}},
           {"shadow_lemma", json{{"c_hat", shadow.c_hat},
                                 {"empty_shadows", shadow.empty_shadows},
                                 {"length_profile", profile},
                                 {"max_ratio", shadow.max_ratio},
                                 {"min_ratio", shadow.min_ratio},
                                 {"r", shadow.r}}}};

  std::vector<std::vector<std::string>> csv;
  for (const auto& row : shadow.rows)
    csv.push_back({word_string(gens, row.word), fmt(row.mass), fmt(row.ratio)});
  emit(opt, "ps", rep, {"word", "mass", "ratio"}, csv);
  return 0;
}

int run_track(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len", "theta", "words", "count"});
  auto gens = group_from_config(cfg, "zariski_schottky");
  const int d = gens.d;
  auto theta = theta_from_config(cfg, d);
  auto big_theta = RootSubset::full(d);
  const int word_len = effective_max_len(opt, cfg, 20);

  std::vector<std::vector<int>> words;
  if (cfg.contains("words")) {
    for (const auto& w : cfg.at("words")) words.push_back(w.get<std::vector<int>>());
  } else {
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<int> pick(0, gens.count() - 1);
    for (int k = 0; k < cfg.value("count", 10); ++k) {
      std::vector<int> w;
      while (static_cast<int>(w.size()) < word_len) {
        int letter = pick(rng);
        if (!w.empty() && GeneratorSet::inverse_of(w.back()) == letter) continue;
        w.push_back(letter);
      }
      words.push_back(std::move(w));
    }
  }

  json traces = json::array();
  std::vector<std::vector<std::string>> csv;
  int converged = 0;
  for (const auto& w : words) {
    auto res = conical_tracking(gens, w, theta, big_theta);
    if (res.converged) ++converged;
    const auto& last = res.trace.back();
    traces.push_back(json{{"converged", res.converged},
                          {"converged_at", res.converged_at},
                          {"final_increment", last.increment},
                          {"final_min_gap", last.min_gap},
                          {"word", word_string(gens, w)}});
    for (const auto& pt : res.trace)
      csv.push_back({word_string(gens, w), std::to_string(pt.n), fmt(pt.min_gap),
                     fmt(pt.increment), pt.degenerate ? "1" : "0"});
  }

  json rep = base_report("track", cfg, opt);
  rep["results"] = json{{"converged", converged},
                        {"total", words.size()},
                        {"traces", traces}};
  emit(opt, "track", rep, {"word", "n", "min_gap", "increment", "degenerate"}, csv);
  return 0;
}

int run_bms(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len", "functional", "s", "pairs",
                   "test_len", "samples"});
  auto gens = group_from_config(cfg, "zariski_schottky");
  const int d = gens.d;
  auto phi =
      functional_from_config(cfg, d, "functional", hilbert_functional(d));
  auto full = RootSubset::full(d);
  auto orbit = enumerate(gens, effective_max_len(opt, cfg, 3));
  double s = cfg.value(
      "s", critical_exponent(orbit, phi, ExponentMethod::CountRegression).delta_hat + 0.05);
  auto mu_phi = patterson_construct(orbit, phi, s, full);
  auto mu_istar = patterson_construct(orbit, istar(phi), s, full);
  auto sample = bms_sample(mu_phi, mu_istar, phi, s, cfg.value("pairs", 100));

  auto movers = enumerate(gens, cfg.value("test_len", 2));
  double worst = 0.0;
  std::size_t tested = 0, skipped = 0;
  std::vector<double> residuals;
  for (const auto& e : movers.elements) {
    if (e.word.empty()) continue;
    for (const auto& p : sample.pairs) {
      try {
        double res = invariance_residual(e.m, p.pair, phi);
        residuals.push_back(res);
        worst = std::max(worst, res);
        ++tested;
      } catch (const NoWitness&) {
        ++skipped;
      }
      if (tested + skipped >= static_cast<std::size_t>(cfg.value("samples", 2000))) break;
    }
    if (tested + skipped >= static_cast<std::size_t>(cfg.value("samples", 2000))) break;
  }

  // Log-residual histogram over decades [1e-16, 1e-6).
  std::vector<int> hist(10, 0);
  for (double r0 : residuals) {
    double lg = std::log10(std::max(r0, 1e-16));
    int bin = std::clamp(static_cast<int>(std::floor(lg)) + 16, 0, 9);
    ++hist[bin];
  }

  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, movers.elements.size() - 1);
  double worst_hopf = 0.0;
  for (int k = 0; k < 50; ++k)
    worst_hopf = std::max(worst_hopf, hopf_action_check(movers.elements[pick(rng)].m,
                                                        movers.elements[pick(rng)].m));

  json rep = base_report("bms", cfg, opt);
  rep["results"] = json{{"hopf_worst", worst_hopf},
                        {"invariance",
                         json{{"histogram_log10_from_-16", hist},
                              {"skipped_no_witness", skipped},
                              {"tested", tested},
                              {"worst", worst}}},
                        {"sample", json{{"delta", sample.delta},
                                        {"pairs", sample.pairs.size()},
                                        {"transverse_fraction", sample.transverse_fraction}}}};
  std::vector<std::vector<std::string>> csv;
  for (const auto& p : sample.pairs) csv.push_back({fmt(p.weight), fmt(p.density)});
  emit(opt, "bms", rep, {"weight", "density"}, csv);
  return 0;
}

int run_hilbert(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len", "exponent_len", "delta_margin"});
  auto gens = group_from_config(cfg, "schottky_so21");
  auto dom = klein_disk();
  Vector o = Vector::Zero(2);
  const int max_len = effective_max_len(opt, cfg, 6);
  auto orbit = hilbert_orbit(dom, gens, o, max_len);
  auto est = hilbert_critical_exponent(dom, gens, o, cfg.value("exponent_len", 8));
  double delta = est.delta_hat + cfg.value("delta_margin", 0.1);

  std::vector<std::vector<std::string>> csv;
  json rows = json::array();
  for (std::size_t i = 0; i < orbit.words.size(); ++i) {
    double dist = orbit_distance(dom, orbit, i, o);
    rows.push_back(json{{"distance", dist}, {"word", word_string(gens, orbit.words[i])}});
    csv.push_back({word_string(gens, orbit.words[i]), fmt(dist)});
  }

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> ud(-0.4, 0.4);
  int violations = 0, checked = 0;
  double worst_ratio = 0.0;
  while (checked < 50) {
    Vector p(2), q(2);
    p << ud(rng), ud(rng);
    q << ud(rng), ud(rng);
    double dpq = hilbert_distance(dom, p, q);
    if (dpq > 1.0 || dpq < 1e-6) continue;
    double tv = measure_distance(kaimanovich_nu(dom, orbit, delta, p),
                                 kaimanovich_nu(dom, orbit, delta, q));
    double bound = 2.0 * delta * std::exp(2.0 * delta) * dpq;
    if (tv > bound) ++violations;
    worst_ratio = std::max(worst_ratio, tv / bound);
    ++checked;
  }

  json rep = base_report("hilbert", cfg, opt);
  rep["results"] = json{{"delta_hat", est.delta_hat},
                        {"exponent", estimate_json(est)},
                        {"kaimanovich", json{{"checked", checked},
                                             {"delta", delta},
                                             {"violations", violations},
                                             {"worst_ratio", worst_ratio}}},
                        {"orbit", json{{"count", orbit.words.size()}, {"rows", rows}}}};
  emit(opt, "hilbert", rep, {"word", "distance"}, csv);
  return 0;
}

int run_convexity(const Options& opt, const json& cfg) {
  check_keys(cfg, {"fixture", "generators", "max_len", "probe_len"});
  auto gens = group_from_config(cfg, "zariski_schottky");
  const int d = gens.d;
  auto orbit = enumerate(gens, effective_max_len(opt, cfg, 5));

  auto phi_h = hilbert_functional(d);
  auto w1 = Functional::omega(d, 1);
  auto wtop = Functional::omega(d, d - 1);
  auto gap = convexity_gap(orbit, phi_h, w1, wtop, 0.5, 0.5);

  auto cells = q_levelset_scan(orbit, {w1, wtop, phi_h, 2.0 * w1});
  json cell_rows = json::array();
  std::vector<std::vector<std::string>> csv;
  const char* names[] = {"omega1", "omega_top", "phi_H", "2*omega1"};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json row{{"functional", names[i]}, {"ok", cells[i].ok}};
    if (cells[i].ok)
      row["delta_hat"] = cells[i].est.delta_hat;
    else
      row["error"] = cells[i].error;
    cell_rows.push_back(row);
    csv.push_back({names[i], cells[i].ok ? fmt(cells[i].est.delta_hat) : "nan",
                   cells[i].ok ? "" : cells[i].error});
  }

  auto probe_orbit = enumerate(gens, cfg.value("probe_len", 4));
  double probe = middle_eigenvalue_probe(gens, probe_orbit);

  json rep = base_report("convexity", cfg, opt);
  rep["results"] = json{
      {"gap_experiment", json{{"bound", gap.bound},
                              {"delta_phi", gap.est_phi.delta_hat},
                              {"delta_phi1", gap.est_phi1.delta_hat},
                              {"delta_phi2", gap.est_phi2.delta_hat},
                              {"gap", gap.gap},
                              {"premise_min", gap.premise_min},
                              {"premise_ok", gap.premise_ok}}},
      {"level_set", cell_rows},
      {"middle_eigenvalue_probe", probe},
      {"noise", json{{"estimator", kNoise.estimator}, {"scaling", kNoise.scaling}}}};
  emit(opt, "convexity", rep, {"functional", "delta_hat", "error"}, csv);
  return 0;
}

int run_selftest(const Options& opt, const json& cfg) {
  check_keys(cfg, {});
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  auto random_sl = [&](int d) {
    Matrix g(d, d);
    double det = 0.0;
    do {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = nd(rng);
      det = g.determinant();
    } while (std::abs(det) < 1e-3);
    g /= std::copysign(std::pow(std::abs(det), 1.0 / d), det);
    if (d % 2 == 0 && g.determinant() < 0.0) g.col(0) = -g.col(0);
    return g;
  };

  json results;
  bool ok = true;
  auto record = [&](const std::string& name, double worst, double tol) {
    bool pass = worst <= tol;
    ok = ok && pass;
    results[name] = json{{"pass", pass}, {"tolerance", tol}, {"worst", worst}};
  };

  // Cartan / Iwasawa / Hopf identities on random samples.
  double worst_kappa = 0.0, worst_cocycle = 0.0, worst_hopf = 0.0;
  for (int d : {3, 4})
    for (int k = 0; k < 100; ++k) {
      Matrix g = random_sl(d), h = random_sl(d);
      auto ki = cartan_projection(g.inverse());
      auto op = opposition(cartan_projection(g));
      worst_kappa = std::max(worst_kappa, (ki.entries - op.entries).cwiseAbs().maxCoeff());
      auto x = flag_from_matrix(RootSubset::full(d), random_sl(d));
      auto lhs = iwasawa_cocycle(Matrix(g * h), x);
      auto rhs = iwasawa_cocycle(g, act(h, x)) + iwasawa_cocycle(h, x);
      worst_cocycle =
          std::max(worst_cocycle, (lhs.entries - rhs.entries).cwiseAbs().maxCoeff());
      worst_hopf = std::max(worst_hopf, hopf_action_check(g, h));
    }
  record("cartan_inverse_identity", worst_kappa, 1e-8);
  record("iwasawa_additivity", worst_cocycle, 1e-9);
  record("hopf_action_law", worst_hopf, 1e-8);

  // BMS invariance on fixture pairs.
  {
    auto gens = fixtures::zariski_schottky();
    auto orbit = enumerate(gens, 3);
    auto phi = hilbert_functional(3);
    auto full = RootSubset::full(3);
    auto mu = patterson_construct(orbit, phi, 0.3, full);
    auto mu2 = patterson_construct(orbit, istar(phi), 0.3, full);
    auto sample = bms_sample(mu, mu2, phi, 0.3, 40);
    auto movers = enumerate(gens, 2);
    double worst = 0.0;
    for (const auto& e : movers.elements) {
      if (e.word.empty()) continue;
      for (const auto& p : sample.pairs) {
        try {
          worst = std::max(worst, invariance_residual(e.m, p.pair, phi));
        } catch (const NoWitness&) {
        }
      }
    }
    record("bms_invariance", worst, 1e-7);
  }

  // Shadow lemma band on F3.
  {
    auto gens = fixtures::zariski_schottky();
    auto orbit = enumerate(gens, 6);
    auto phi = Functional::omega(3, 1);
    double s =
        critical_exponent(orbit, phi, ExponentMethod::CountRegression).delta_hat + 0.05;
    auto mu = patterson_construct(orbit, phi, s, RootSubset(3, {1}));
    auto rep = shadow_lemma_report(mu, enumerate(gens, 3), 4.0, s, phi);
    bool pass = std::isfinite(rep.c_hat) && rep.c_hat > 0.0;
    ok = ok && pass;
    results["shadow_lemma"] = json{{"c_hat", rep.c_hat}, {"pass", pass}};
  }

  // Hilbert metric radial formula and exponent ceiling on F2.
  {
    auto dom = klein_disk();
    double worst = 0.0;
    for (double r : {0.1, 0.5, 0.9}) {
      Vector p = Vector::Zero(2), q(2);
      q << r, 0.0;
      worst = std::max(worst, std::abs(hilbert_distance(dom, p, q) - std::atanh(r)));
    }
    record("hilbert_radial_formula", worst, 1e-10);
    auto est = hilbert_critical_exponent(dom, fixtures::schottky_so21(), Vector::Zero(2), 8);
    bool pass = est.delta_hat > 0.0 && est.delta_hat <= 1.05;
    ok = ok && pass;
    results["hilbert_exponent_ceiling"] = json{{"delta_hat", est.delta_hat}, {"pass", pass}};
  }

  // Middle-eigenvalue rigidity probe on both fixtures.
  {
    auto so21 = fixtures::schottky_so21();
    auto zar = fixtures::zariski_schottky();
    double flat = middle_eigenvalue_probe(so21, enumerate(so21, 4));
    double dense = middle_eigenvalue_probe(zar, enumerate(zar, 3));
    bool pass = flat <= 1e-6 && dense >= 0.1;
    ok = ok && pass;
    results["middle_eigenvalue_probe"] =
        json{{"dense", dense}, {"flat", flat}, {"pass", pass}};
  }

  json rep = base_report("selftest", cfg, opt);
  rep["results"] = results;
  rep["ok"] = ok;
  emit(opt, "selftest", rep);
  std::cout << (ok ? "selftest: all invariants hold" : "selftest: FAILURES") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pslab: higher-rank Patterson-Sullivan laboratory"};
  app.require_subcommand(1);

  Options opt;
  app.add_option("--config", opt.config_path, "JSON config file");
  app.add_option("--seed", opt.seed, "random seed (mandatory for randomized runs)");
  app.add_option("--max-len", opt.max_len, "orbit ball radius override");
  app.add_option("--out", opt.out, "output directory");
  app.add_option("--format", opt.format, "json|csv|text")
      ->check(CLI::IsMember({"json", "csv", "text"}));
  app.add_option("--jobs", opt.jobs, "worker threads");

  std::map<std::string, int (*)(const Options&, const json&)> handlers = {
      {"kappa", run_kappa},         {"exponent", run_exponent},
      {"limitset", run_limitset},   {"ps", run_ps},
      {"track", run_track},         {"bms", run_bms},
      {"hilbert", run_hilbert},     {"convexity", run_convexity},
      {"selftest", run_selftest}};
  const std::map<std::string, std::string> help = {
      {"kappa", "tabulate Cartan and Jordan projections over an orbit ball"},
      {"exponent", "critical exponent estimates for a functional"},
      {"limitset", "export U_theta limit-set atoms"},
      {"ps", "Patterson measure, shadow-lemma band, conformality residuals"},
      {"track", "conical tracking traces along geodesic words"},
      {"bms", "BMS pair sample, invariance residuals, Hopf checks"},
      {"hilbert", "Hilbert metric orbit, exponent, Kaimanovich bounds"},
      {"convexity", "entropy gap experiment, level sets, rigidity probe"},
      {"selftest", "deterministic invariant battery over the fixtures"}};
  for (const auto& [name, fn] : handlers) {
    (void)fn;
    app.add_subcommand(name, help.at(name))->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(sub)(opt, load_config(opt));
  } catch (const std::exception& e) {
    json err{{"error", json{{"message", e.what()}, {"subcommand", sub},
                            {"type", typeid(e).name()}}}};
    std::cout << err.dump(2) << "\n";
    try {
      std::filesystem::create_directories(opt.out);
      write_text_file(std::filesystem::path(opt.out) / "error.json", err.dump(2) + "\n");
    } catch (...) {
    }
    return 1;
  }
}
