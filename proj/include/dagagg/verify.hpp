#pragma once

// Canned invariant suites: structural identities over a spread of trained
// DAGs, the lower-bound construction, greedy-learner guarantees, and the
// path/coverage upper bounds.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dagagg/dataset.hpp"
#include "dagagg/diagnostics.hpp"
#include "dagagg/experiment.hpp"
#include "dagagg/format.hpp"
#include "dagagg/graph.hpp"
#include "dagagg/learners.hpp"
#include "dagagg/oracle.hpp"
#include "dagagg/population.hpp"
#include "dagagg/rng.hpp"

namespace dagagg {

struct CheckLine {
  std::string suite;
  std::string name;
  bool pass = true;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckLine> lines;
  std::vector<IdentityReport> identities;
  std::vector<BoundReport> bounds;  // failing or summary bounds only; every bound is folded into a line

  bool all_pass() const {
    for (const auto& l : lines)
      if (!l.pass) return false;
    return true;
  }
  void add(std::string suite, std::string name, bool pass, std::string detail) {
    lines.push_back({std::move(suite), std::move(name), pass, std::move(detail)});
  }
  void merge(VerifyReport other) {
    for (auto& l : other.lines) lines.push_back(std::move(l));
    for (auto& r : other.identities) identities.push_back(std::move(r));
    for (auto& r : other.bounds) bounds.push_back(std::move(r));
  }
};

struct VerifyOptions {
  std::size_t k = 10;
  std::size_t wine_seeds = 5;
  std::optional<std::filesystem::path> wine_manifest;
};

/// y = sum of random signed stumps of uniform features plus Gaussian noise.
inline SampleOracle stump_learnable_sample(std::size_t m, std::size_t d, std::size_t stumps, double noise,
                                           std::uint64_t seed) {
  if (m == 0 || d == 0) throw InvalidArgument("stump_learnable_sample needs m, d > 0");
  Rng rng(derive_seed(seed, Stream::sample));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, d - 1);
  std::vector<Stump> truth;
  std::vector<double> weights;
  for (std::size_t s = 0; s < stumps; ++s) {
    truth.push_back({pick(rng), 0.5 * unit(rng), 1.0});
    weights.push_back((unit(rng) < 0 ? -1.0 : 1.0) * (1.0 + 0.5 * unit(rng)));
  }
  Matrix x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  Vector y(static_cast<Eigen::Index>(m));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = unit(rng);
    double v = noise * normal(rng);
    for (std::size_t s = 0; s < stumps; ++s) v += weights[s] * truth[s](x(r, static_cast<Eigen::Index>(truth[s].feature)));
    y(r) = v;
  }
  return SampleOracle(std::move(x), std::move(y));
}

/// Least squares restricted to some features (plus the constant when asked).
inline std::pair<LinearComparator, double> restricted_ols(const MomentOracle& oracle,
                                                          const std::vector<std::size_t>& features,
                                                          bool with_constant) {
  std::vector<Vector> vars;
  for (std::size_t f : features) vars.push_back(oracle.feature(f));
  if (with_constant) vars.push_back(oracle.constant());
  const Vector y = oracle.label();
  const auto sol = solve_least_squares(oracle.gram(vars), oracle.cross(vars, y), oracle.inner(y, y));
  LinearComparator g;
  g.alpha = Vector::Zero(static_cast<Eigen::Index>(oracle.feature_count()));
  for (std::size_t i = 0; i < features.size(); ++i) g.alpha(static_cast<Eigen::Index>(features[i])) = sol.weights(static_cast<Eigen::Index>(i));
  if (with_constant) g.constant = sol.weights(static_cast<Eigen::Index>(features.size()));
  return {g, oracle.mse(g.embed(oracle))};
}

namespace detail {

struct TrainedCase {
  std::string name;
  std::shared_ptr<const MomentOracle> oracle;
  Dag dag;
  FeatureAssignment assignment;
  TrainedDag trained;
};

inline std::vector<std::size_t> all_features(std::size_t d) {
  std::vector<std::size_t> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = i;
  return v;
}

inline std::string describe(const IdentityReport& r) {
  return "max_violation=" + format_real(r.max_violation) + " over " + std::to_string(r.rows.size()) + " checks";
}

inline std::vector<TrainedCase> identity_cases(const VerifyOptions& opt) {
  std::vector<TrainedCase> cases;
  auto add = [&](std::string name, std::shared_ptr<const MomentOracle> oracle, Dag dag, FeatureAssignment a,
                 LearnerConfig cfg) {
    auto trained = train_dag(dag, a, *oracle, cfg);
    cases.push_back({std::move(name), std::move(oracle), std::move(dag), std::move(a), std::move(trained)});
  };
  LearnerConfig linear;
  LearnerConfig linear_c;
  linear_c.with_constant = true;

  {
    auto o = std::make_shared<LatentLinearOracle>(intro_counterexample_oracle());
    FeatureAssignment a;
    a.d = 2;
    a.sets = {{0}, {1}};
    add("intro_chain", o, build_chain(2), a, linear);
  }
  {
    auto o = std::make_shared<LatentLinearOracle>(lower_bound_oracle(6));
    add("lowerbound_cyclic_k6", o, build_chain(30), cyclic_assignment(30, 6), linear);
    const Dag hub = build_hub_and_spokes(5);
    add("lowerbound_hub_k6", o, hub, best_case_assignment(hub, 6), linear);
    const Dag tree = build_random_tree(25, TreeDirection::bottom_up, 3);
    add("lowerbound_tree_bottom_up", o, tree, random_feature_assignment(tree, 6, 0.3, 3), linear_c);
  }
  {
    auto o = std::make_shared<SampleOracle>(sample_from_latent(lower_bound_oracle(8), 2000, 11));
    const Dag chain = build_chain(12);
    add("lowerbound_sample_chain", o, chain, random_feature_assignment(chain, 8, 0.4, 11), linear_c);
    const Dag tree = build_random_tree(15, TreeDirection::top_down, 12);
    add("lowerbound_sample_tree", o, tree, random_feature_assignment(tree, 8, 0.3, 12), linear);
  }
  {
    auto o = std::make_shared<SampleOracle>(stump_learnable_sample(800, 5, 4, 0.1, 21));
    LearnerConfig greedy;
    greedy.kind = LearnerConfig::Kind::greedy;
    greedy.greedy.delta = 0.05;
    greedy.with_constant = true;
    const Dag chain = build_chain(6);
    add("greedy_stump_chain", o, chain, random_feature_assignment(chain, 5, 0.5, 21), greedy);
    const Dag hub = build_hub_and_spokes(3);
    greedy.with_constant = false;
    add("greedy_stump_hub", o, hub, random_feature_assignment(hub, 5, 0.5, 22), greedy);
  }
  if (opt.wine_manifest && std::filesystem::exists(*opt.wine_manifest)) {
    const auto table = load_dataset(load_manifest(*opt.wine_manifest));
    for (std::size_t s = 0; s < opt.wine_seeds; ++s) {
      auto parts = split(table, 0.25, s);
      auto o = std::make_shared<GramOracle>(GramOracle::from_samples(parts.train));
      const std::size_t d = o->feature_count();
      const Dag chain = build_chain(20);
      add("wine_chain_seed" + std::to_string(s), o, chain, random_feature_assignment(chain, d, 0.3, s), linear_c);
      const Dag tree = build_random_tree(20, TreeDirection::top_down, s);
      add("wine_tree_seed" + std::to_string(s), o, tree, random_feature_assignment(tree, d, 0.3, s), linear_c);
    }
  }
  return cases;
}

}  // namespace detail

inline VerifyReport verify_identities(const VerifyOptions& opt = {}) {
  VerifyReport rep;
  const auto cases = detail::identity_cases(opt);
  IdentityReport input{"input_multiaccuracy", 0.0, kIdentityThreshold, true, {}};
  IdentityReport self{"self_orthogonality", 0.0, kIdentityThreshold, true, {}};
  IdentityReport edge{"edge_closeness", 0.0, kIdentityThreshold, true, {}};
  IdentityReport mono{"path_monotonicity", 0.0, kIdentityThreshold, true, {}};
  IdentityReport decomp{"mse_decomposition", 0.0, kIdentityThreshold, true, {}};
  std::size_t greedy_agents = 0, greedy_failures = 0;
  auto fold = [](IdentityReport& into, const IdentityReport& r, const std::string& prefix) {
    for (const auto& row : r.rows) into.add(prefix + "/" + row.label, row.violation);
  };
  Rng rng(derive_seed(7, Stream::sample));
  for (const auto& c : cases) {
    fold(input, check_input_multiaccuracy(c.trained, *c.oracle), c.name);
    fold(self, check_all_self_orthogonality(c.trained, *c.oracle), c.name);
    fold(edge, check_edge_closeness(c.trained, *c.oracle), c.name);
    fold(mono, check_monotonicity(c.trained), c.name);
    // Random pairs of trained predictors and raw features in the same space.
    std::vector<Vector> pool;
    for (const auto& a : c.trained.agents) pool.push_back(a.train_embedding);
    for (std::size_t f = 0; f < c.oracle->feature_count(); ++f) pool.push_back(c.oracle->feature(f));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int t = 0; t < 12; ++t) fold(decomp, check_mse_decomposition(pool[pick(rng)], pool[pick(rng)], *c.oracle), c.name);
    for (const auto& a : c.trained.agents) {
      const auto* sp = std::get_if<SpanPredictor>(&a.predictor);
      if (sp == nullptr) continue;
      ++greedy_agents;
      // Threshold termination leaves every dictionary correlation strictly below delta.
      if (sp->terminated_by_threshold && !(sp->final_max_correlation < sp->delta)) ++greedy_failures;
    }
  }
  for (auto* r : {&input, &self, &edge, &mono, &decomp}) {
    rep.add("identities", r->name, r->pass, detail::describe(*r) + " across " + std::to_string(cases.size()) + " trained DAGs");
    rep.identities.push_back(std::move(*r));
  }
  rep.add("identities", "greedy_dictionary_multiaccuracy", greedy_failures == 0,
          std::to_string(greedy_failures) + " of " + std::to_string(greedy_agents) + " greedy agents above delta");
  return rep;
}

inline VerifyReport verify_lowerbound(const VerifyOptions& opt = {}) {
  VerifyReport rep;
  const std::size_t k = opt.k;
  if (k < 2) throw InvalidArgument("verify lowerbound needs k >= 2");
  const std::size_t passes = k - 1;
  const auto trace = run_cyclic_path(k, passes);
  const std::string s = "lowerbound";

  rep.add(s, "end_of_pass_1_is_half", std::abs(trace.end_of_pass_mse(1) - 0.5) <= 1e-10,
          "mse=" + format_real(trace.end_of_pass_mse(1)));
  {
    bool ok = true;
    double worst = 1.0;
    for (std::size_t p = 1; p <= passes; ++p) {
      const double gap = trace.end_of_pass_mse(p) - 1.0 / static_cast<double>(p + 1);
      worst = std::min(worst, gap);
      ok = ok && gap >= -1e-10;
    }
    rep.add(s, "end_of_pass_at_least_one_over_p_plus_one", ok, "min gap=" + format_real(worst));
  }
  {
    bool ok = true;
    for (std::size_t p = 1; p <= passes; ++p) {
      std::set<std::size_t> expect;
      for (std::size_t i = k - p; i <= k; ++i) expect.insert(i);
      ok = ok && predictor_support(trace, p) == expect;
    }
    rep.add(s, "end_of_pass_support", ok, "support after pass p is {z_{k-p}..z_k}");
  }
  {
    bool prefix_ok = true, first_ok = true;
    for (std::size_t p = 1; p <= passes; ++p) {
      const ZVector start = trace.end_of_pass_predictor(p - 1);
      for (std::size_t i = 1; i <= k - p; ++i) {
        const auto& step = trace.steps[(p - 1) * k + i - 1];
        prefix_ok = prefix_ok && (step.predictor - start).norm() <= 1e-12;
      }
      const auto& first = trace.steps[(p - 1) * k + (k - p + 1) - 1];
      first_ok = first_ok && (first.predictor - start).norm() > 1e-8;
    }
    rep.add(s, "within_pass_prefix_unchanged", prefix_ok, "agents observing x_1..x_{k-p} in pass p leave the predictor fixed");
    rep.add(s, "first_update_at_x_k_minus_p_plus_1", first_ok, "first change in pass p at the agent observing x_{k-p+1}");
  }
  {
    bool ok = true;
    double worst = 0.0;
    for (std::size_t kk = 2; kk <= k; ++kk)
      for (std::size_t j = 2; j <= kk; ++j) {
        const double v = suffix_mse(kk, j);
        const double err = std::max(std::abs(v - 1.0 / static_cast<double>(kk - j + 2)), std::abs(v - tridiag_suffix_mse(kk - j + 1)));
        worst = std::max(worst, err);
        ok = ok && err <= 1e-10;
      }
    rep.add(s, "suffix_mse_formula", ok, "max error=" + format_real(worst) + " for 2 <= j <= k' <= " + std::to_string(k));
  }
  {
    bool ok = true;
    double worst = 0.0;
    for (std::size_t depth = 1; depth <= std::min<std::size_t>(k - 1, 20); ++depth) {
      const double err = std::abs(best_case_depth_bound(depth + 1, depth) - 1.0 / static_cast<double>(depth + 1));
      worst = std::max(worst, err);
      ok = ok && err <= 1e-10;
    }
    rep.add(s, "best_case_depth_bound", ok, "max error=" + format_real(worst));
  }
  {
    // The generic DAG trainer on the latent oracle reproduces the dedicated
    // population engine.
    const auto oracle = lower_bound_oracle(k);
    const auto trained = train_dag(build_chain(k * passes), cyclic_assignment(k * passes, k), oracle, LearnerConfig{});
    double worst = 0.0;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) worst = std::max(worst, std::abs(trained.agents[i].train_mse - trace.steps[i].mse));
    rep.add(s, "dag_trainer_matches_population_engine", worst <= 1e-10, "max |diff|=" + format_real(worst));
  }
  return rep;
}

/// Hub MSE over every single-feature assignment of a hub with `spokes`
/// spokes on the k-feature lower-bound oracle; returns the minimum.
inline double min_hub_mse_exhaustive(std::size_t k, std::size_t spokes) {
  const auto oracle = lower_bound_oracle(k);
  const Dag hub = build_hub_and_spokes(spokes);
  FeatureAssignment a;
  a.d = k;
  a.sets.assign(spokes + 1, {0});
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> digits(spokes + 1, 0);
  while (true) {
    for (std::size_t v = 0; v <= spokes; ++v) a.sets[v] = {digits[v]};
    const auto trained = train_dag(hub, a, oracle, LearnerConfig{});
    best = std::min(best, trained.agent(spokes).train_mse);
    std::size_t pos = 0;
    while (pos <= spokes && ++digits[pos] == k) digits[pos++] = 0;
    if (pos > spokes) break;
  }
  return best;
}

inline VerifyReport verify_greedy(std::size_t datasets = 10) {
  VerifyReport rep;
  std::size_t agents = 0, threshold_stops = 0;
  double worst_drop = std::numeric_limits<double>::infinity();
  bool count_ok = true, corr_ok = true, drop_ok = true;
  for (std::size_t s = 0; s < datasets; ++s) {
    const auto sample = stump_learnable_sample(600 + 50 * (s % 5), 3 + s % 4, 2 + s % 5, 0.05 + 0.05 * (s % 3), 1000 + s);
    LearnerConfig cfg;
    cfg.kind = LearnerConfig::Kind::greedy;
    cfg.greedy.delta = 0.05 + 0.025 * static_cast<double>(s % 3);
    cfg.with_constant = s % 2 == 0;
    const Dag chain = build_chain(3);
    const auto d = sample.feature_count();
    FeatureAssignment a;
    a.d = d;
    a.sets = {detail::all_features(d), random_feature_assignment(chain, d, 0.5, s).sets[1], detail::all_features(d)};
    const auto trained = train_dag(chain, a, sample, cfg);
    for (const auto& rec : trained.agents) {
      const auto& sp = std::get<SpanPredictor>(rec.predictor);
      ++agents;
      const double dd = sp.delta * sp.delta;
      for (std::size_t t = 1; t < sp.mse_trace.size(); ++t) {
        const double drop = sp.mse_trace[t - 1] - sp.mse_trace[t];
        worst_drop = std::min(worst_drop, drop - dd);
        drop_ok = drop_ok && drop >= dd - 1e-9;
      }
      if (sp.terminated_by_threshold) {
        ++threshold_stops;
        count_ok = count_ok && static_cast<double>(sp.iteration_count) <= sp.initial_mse / dd + 1e-9;
        corr_ok = corr_ok && sp.final_max_correlation < sp.delta;
      }
    }
  }
  const std::string suffix = " (" + std::to_string(threshold_stops) + "/" + std::to_string(agents) + " agents stopped by threshold)";
  rep.add("greedy", "iteration_count_within_mse0_over_delta_sq", count_ok, "T <= E[(Y-y0)^2]/delta^2" + suffix);
  rep.add("greedy", "post_termination_correlation_below_delta", corr_ok, "max dictionary correlation < delta" + suffix);
  rep.add("greedy", "per_iteration_drop_at_least_delta_sq", drop_ok,
          "min(drop - delta^2)=" + (std::isfinite(worst_drop) ? format_real(worst_drop) : std::string("n/a")));
  return rep;
}

struct BoundSweep {
  std::size_t checked = 0;
  std::size_t precondition_failures = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  std::optional<BoundReport> worst;

  void record(const BoundReport& r) {
    if (!r.precondition_met) {
      ++precondition_failures;
      return;
    }
    ++checked;
    if (r.slack < min_slack) {
      min_slack = r.slack;
      worst = r;
    }
  }
  bool pass() const { return checked > 0 && min_slack >= -kBoundTolerance; }
  std::string describe() const {
    return std::to_string(checked) + " checks, min slack=" + (checked ? format_real(min_slack) : std::string("n/a")) +
           (precondition_failures ? ", " + std::to_string(precondition_failures) + " coverage precondition failures" : "");
  }
};

/// Path theorem over every subsequence of an exact cyclic chain: the perfect
/// all-ones comparator where the subsequence sees every feature, and the
/// subsequence's own least-squares fit everywhere.
inline void sweep_cyclic_path_theorem(std::size_t k, std::size_t passes, BoundSweep& perfect, BoundSweep& local,
                                      BoundSweep& corollary) {
  const auto oracle = lower_bound_oracle(k);
  const std::size_t n = k * passes;
  const Dag chain = build_chain(n);
  const auto assignment = cyclic_assignment(n, k);
  const auto trained = train_dag(chain, assignment, oracle, LearnerConfig{});
  Path path(n);
  for (std::size_t i = 0; i < n; ++i) path[i] = i;
  LinearComparator ones;
  ones.alpha = Vector::Ones(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const std::size_t len = j - i + 1;
      if (len >= k) perfect.record(check_path_theorem(trained, path, i, j, ones, oracle));
      std::vector<std::size_t> seen;
      for (std::size_t t = i; t <= std::min(j, i + k - 1); ++t) seen.push_back(t % k);
      std::sort(seen.begin(), seen.end());
      local.record(check_path_theorem(trained, path, i, j, restricted_ols(oracle, seen, false).first, oracle));
    }
  }
  for (std::size_t p = 1; p <= passes; ++p) {
    Path prefix(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(p * k));
    corollary.record(check_depth_coverage_corollary(trained, prefix, assignment, k, ones, oracle));
  }
}

struct WineBoundOptions {
  std::filesystem::path manifest;
  std::size_t seeds = 100;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t chain_length = 50;
  double delta = 0.1;  // failure probability for the coverage window
};

/// Seeded wine chains: path theorem on every fully covering window against
/// the training OLS, and the depth/coverage corollary with the window length
/// from the coverage proposition.
inline void sweep_wine_bounds(const WineBoundOptions& opt, BoundSweep& path_theorem, BoundSweep& corollary) {
  const auto table = load_dataset(load_manifest(opt.manifest));
  for (double p : opt.fractions) {
    for (std::size_t s = 0; s < opt.seeds; ++s) {
      const auto parts = split(table, 0.25, s);
      const GramOracle train = GramOracle::from_samples(parts.train);
      const std::size_t d = train.feature_count();
      const Dag chain = build_chain(opt.chain_length);
      const auto assignment = random_feature_assignment(chain, d, p, s);
      LearnerConfig cfg;
      cfg.with_constant = true;
      const auto trained = train_dag(chain, assignment, train, cfg);
      const auto g = global_ols(train, true).first;
      const Path path = longest_path(chain);
      // Every window whose agents see all features admits g as a comparator.
      for (std::size_t i = 0; i < path.size(); ++i) {
        std::vector<char> seen(d, 0);
        std::size_t covered = 0;
        for (std::size_t j = i; j < path.size(); ++j) {
          for (std::size_t f : assignment.sets[path[j]])
            if (!seen[f]) seen[f] = 1, ++covered;
          if (covered == d) path_theorem.record(check_path_theorem(trained, path, i, j, g, train));
        }
      }
      const std::size_t m = required_window_length(path.size(), d, p, opt.delta);
      corollary.record(check_depth_coverage_corollary(trained, path, assignment, std::min(m, path.size()), g, train));
    }
  }
}

inline VerifyReport verify_bounds(const VerifyOptions& opt = {}) {
  VerifyReport rep;
  BoundSweep perfect, local, corollary;
  for (std::size_t k = 2; k <= std::min<std::size_t>(opt.k, 10); ++k) sweep_cyclic_path_theorem(k, k - 1, perfect, local, corollary);
  rep.add("bounds", "path_theorem_cyclic_perfect_comparator", perfect.pass(), perfect.describe());
  rep.add("bounds", "path_theorem_cyclic_local_ols", local.pass(), local.describe());
  rep.add("bounds", "corollary_cyclic", corollary.pass() && corollary.precondition_failures == 0, corollary.describe());
  for (auto* b : {&perfect, &local, &corollary})
    if (b->worst) rep.bounds.push_back(*b->worst);
  if (opt.wine_manifest && std::filesystem::exists(*opt.wine_manifest)) {
    WineBoundOptions w;
    w.manifest = *opt.wine_manifest;
    w.seeds = opt.wine_seeds;
    BoundSweep wp, wc;
    sweep_wine_bounds(w, wp, wc);
    rep.add("bounds", "path_theorem_wine_chain", wp.pass(), wp.describe());
    // Coverage can fail with probability up to delta; such runs are reported
    // rather than checked.
    rep.add("bounds", "corollary_wine_chain", wc.checked == 0 || wc.pass(), wc.describe());
    for (auto* b : {&wp, &wc})
      if (b->worst) rep.bounds.push_back(*b->worst);
  }
  return rep;
}

inline VerifyReport verify_depth(std::size_t max_k = 6) {
  VerifyReport rep;
  double worst = std::numeric_limits<double>::infinity();
  std::size_t configs = 0;
  // The barrier needs more features than the depth (k > 2 for a hub); with
  // k = 2 the hub can see both features and reach zero error.
  for (std::size_t k = 3; k <= max_k; ++k)
    for (std::size_t s = 1; s <= k; ++s, ++configs) worst = std::min(worst, min_hub_mse_exhaustive(k, s));
  rep.add("depth", "hub_mse_at_least_one_third", worst >= 1.0 / 3.0 - 1e-10,
          "min hub mse=" + format_real(worst) + " over " + std::to_string(configs) + " (k, spokes) pairs, all assignments");
  return rep;
}

inline VerifyReport verify_suite(const std::string& suite, const VerifyOptions& opt) {
  if (suite == "identities") return verify_identities(opt);
  if (suite == "lowerbound") {
    auto r = verify_lowerbound(opt);
    r.merge(verify_depth());
    return r;
  }
  if (suite == "greedy") return verify_greedy();
  if (suite == "bounds") return verify_bounds(opt);
  if (suite == "all") {
    VerifyReport r = verify_identities(opt);
    r.merge(verify_suite("lowerbound", opt));
    r.merge(verify_greedy());
    r.merge(verify_bounds(opt));
    return r;
  }
  throw ConfigError("unknown verify suite '" + suite + "' (identities | lowerbound | greedy | bounds | all)");
}

inline nlohmann::json to_json(const VerifyReport& r) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : r.lines) lines.push_back({{"suite", l.suite}, {"check", l.name}, {"pass", l.pass}, {"detail", l.detail}});
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& i : r.identities) {
    auto j = to_json(i);
    j.erase("rows");  // per-row detail is too large for the summary file
    ids.push_back(std::move(j));
  }
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& b : r.bounds) bounds.push_back(to_json(b));
  return {{"all_pass", r.all_pass()}, {"checks", lines}, {"identities", ids}, {"tightest_bounds", bounds}};
}

inline void print_table(std::ostream& os, const VerifyReport& r) {
  for (const auto& l : r.lines)
    os << (l.pass ? "PASS " : "FAIL ") << l.suite << '/' << l.name << "  " << l.detail << '\n';
}

}  // namespace dagagg
