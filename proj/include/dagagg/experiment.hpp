#pragma once

// Multi-trial experiment harness: config parsing, per-trial training, grouped
// aggregation, baselines, the lower-bound trace, and output writers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dagagg/dataset.hpp"
#include "dagagg/diagnostics.hpp"
#include "dagagg/error.hpp"
#include "dagagg/format.hpp"
#include "dagagg/graph.hpp"
#include "dagagg/learners.hpp"
#include "dagagg/oracle.hpp"
#include "dagagg/population.hpp"
#include "dagagg/rng.hpp"

namespace dagagg {

inline constexpr const char* kVersion = "0.1.0";

// Config -----------------------------------------------------------------

struct TopologySpec {
  enum class Kind { chain, tree, hub, cyclic };
  Kind kind = Kind::chain;
  std::size_t n = 0;
  TreeDirection direction = TreeDirection::top_down;
  std::size_t spokes = 0;
  std::size_t k = 0;
  std::size_t passes = 0;
};

struct DatasetSpec {
  enum class Kind { manifest, lower_bound, intro };
  Kind kind = Kind::manifest;
  std::filesystem::path manifest;
  std::size_t k = 0;
  std::optional<std::size_t> sample_size;  // synthetic only; population moments when absent
};

struct AssignmentSpec {
  enum class Kind { random, cyclic, explicit_sets, best_case };
  Kind kind = Kind::random;
  double p = 0.5;
  std::vector<std::vector<std::size_t>> sets;
};

struct ExperimentConfig {
  std::string name = "experiment";
  TopologySpec topology;
  DatasetSpec dataset;
  AssignmentSpec assignment;
  LearnerConfig learner;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double test_fraction = 0.25;
  std::filesystem::path output_dir = "out";
  std::size_t threads = 0;  // 0: hardware concurrency
};

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  if (!j.contains(key)) throw ConfigError(path + "." + key + ": missing");
  return j.at(key);
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

template <class T>
T value_or(const nlohmann::json& j, const std::string& key, T fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  return get_as<T>(j.at(key), path + "." + key);
}

}  // namespace detail

/// Relative paths resolve against base_dir (the config file's directory).
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  using detail::field;
  using detail::get_as;
  using detail::value_or;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("config: expected an object");
  c.name = value_or<std::string>(j, "name", c.name, "config");

  const auto& t = field(j, "topology", "config");
  const auto tkind = get_as<std::string>(field(t, "kind", "topology"), "topology.kind");
  if (tkind == "chain") {
    c.topology.kind = TopologySpec::Kind::chain;
    c.topology.n = get_as<std::size_t>(field(t, "n", "topology"), "topology.n");
  } else if (tkind == "tree") {
    c.topology.kind = TopologySpec::Kind::tree;
    c.topology.n = get_as<std::size_t>(field(t, "n", "topology"), "topology.n");
    const auto dir = value_or<std::string>(t, "direction", "top_down", "topology");
    try {
      c.topology.direction = tree_direction_from_string(dir);
    } catch (const Error& e) {
      throw ConfigError(std::string("topology.direction: ") + e.what());
    }
  } else if (tkind == "hub") {
    c.topology.kind = TopologySpec::Kind::hub;
    c.topology.spokes = get_as<std::size_t>(field(t, "spokes", "topology"), "topology.spokes");
  } else if (tkind == "cyclic") {
    c.topology.kind = TopologySpec::Kind::cyclic;
    c.topology.k = get_as<std::size_t>(field(t, "k", "topology"), "topology.k");
    c.topology.passes = get_as<std::size_t>(field(t, "passes", "topology"), "topology.passes");
  } else {
    throw ConfigError("topology.kind: unknown value '" + tkind + "'");
  }

  const auto& d = field(j, "dataset", "config");
  if (d.contains("manifest")) {
    c.dataset.kind = DatasetSpec::Kind::manifest;
    std::filesystem::path p = get_as<std::string>(d.at("manifest"), "dataset.manifest");
    c.dataset.manifest = p.is_absolute() ? p : base_dir / p;
  } else if (d.contains("synthetic")) {
    const auto name = get_as<std::string>(d.at("synthetic"), "dataset.synthetic");
    if (name == "lower_bound") {
      c.dataset.kind = DatasetSpec::Kind::lower_bound;
      c.dataset.k = get_as<std::size_t>(field(d, "k", "dataset"), "dataset.k");
    } else if (name == "intro") {
      c.dataset.kind = DatasetSpec::Kind::intro;
    } else {
      throw ConfigError("dataset.synthetic: unknown value '" + name + "'");
    }
    if (d.contains("sample_size")) c.dataset.sample_size = get_as<std::size_t>(d.at("sample_size"), "dataset.sample_size");
  } else {
    throw ConfigError("dataset: needs 'manifest' or 'synthetic'");
  }

  if (j.contains("assignment")) {
    const auto& a = j.at("assignment");
    const auto akind = get_as<std::string>(field(a, "kind", "assignment"), "assignment.kind");
    if (akind == "random") {
      c.assignment.kind = AssignmentSpec::Kind::random;
      c.assignment.p = get_as<double>(field(a, "p", "assignment"), "assignment.p");
    } else if (akind == "cyclic") {
      c.assignment.kind = AssignmentSpec::Kind::cyclic;
    } else if (akind == "explicit") {
      c.assignment.kind = AssignmentSpec::Kind::explicit_sets;
      c.assignment.sets = get_as<std::vector<std::vector<std::size_t>>>(field(a, "sets", "assignment"), "assignment.sets");
    } else if (akind == "best_case") {
      c.assignment.kind = AssignmentSpec::Kind::best_case;
    } else {
      throw ConfigError("assignment.kind: unknown value '" + akind + "'");
    }
  } else if (c.topology.kind == TopologySpec::Kind::cyclic) {
    c.assignment.kind = AssignmentSpec::Kind::cyclic;
  } else {
    throw ConfigError("assignment: missing");
  }

  if (j.contains("learner")) {
    const auto& l = j.at("learner");
    const auto lkind = get_as<std::string>(field(l, "kind", "learner"), "learner.kind");
    if (lkind == "linear") {
      c.learner.kind = LearnerConfig::Kind::linear;
    } else if (lkind == "greedy") {
      c.learner.kind = LearnerConfig::Kind::greedy;
      c.learner.greedy.delta = value_or<double>(l, "delta", c.learner.greedy.delta, "learner");
      if (l.contains("max_iterations"))
        c.learner.greedy.max_iterations = get_as<std::size_t>(l.at("max_iterations"), "learner.max_iterations");
      c.learner.greedy.threshold_cap = value_or<std::size_t>(l, "threshold_cap", c.learner.greedy.threshold_cap, "learner");
    } else {
      throw ConfigError("learner.kind: unknown value '" + lkind + "'");
    }
    c.learner.with_constant = value_or<bool>(l, "with_constant", false, "learner");
  }

  c.trials = value_or<std::size_t>(j, "trials", c.trials, "config");
  c.seed = value_or<std::uint64_t>(j, "seed", c.seed, "config");
  c.test_fraction = value_or<double>(j, "test_fraction", c.test_fraction, "config");
  c.threads = value_or<std::size_t>(j, "threads", c.threads, "config");
  if (j.contains("output_dir")) {
    std::filesystem::path p = get_as<std::string>(j.at("output_dir"), "output_dir");
    c.output_dir = p.is_absolute() ? p : base_dir / p;
  }
  return c;
}

inline std::size_t dataset_feature_count(const ExperimentConfig& c, const TabularDataset* table) {
  switch (c.dataset.kind) {
    case DatasetSpec::Kind::manifest:
      return table ? table->standardization ? table->standardization->kept_columns.size() : table->feature_count() : 0;
    case DatasetSpec::Kind::lower_bound: return c.dataset.k;
    case DatasetSpec::Kind::intro: return 2;
  }
  return 0;
}

inline std::size_t node_count(const TopologySpec& t) {
  switch (t.kind) {
    case TopologySpec::Kind::chain:
    case TopologySpec::Kind::tree: return t.n;
    case TopologySpec::Kind::hub: return t.spokes + 1;
    case TopologySpec::Kind::cyclic: return t.k * t.passes;
  }
  return 0;
}

/// Structural checks that do not need the data.
inline void validate(const ExperimentConfig& c) {
  if (c.trials < 1) throw ConfigError("trials: must be >= 1");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ConfigError("test_fraction: must lie in (0, 1)");
  if (node_count(c.topology) == 0) throw ConfigError("topology: must have at least one node");
  if (c.topology.kind == TopologySpec::Kind::cyclic) {
    if (c.topology.k < 2) throw ConfigError("topology.k: must be >= 2");
    if (c.assignment.kind != AssignmentSpec::Kind::cyclic) throw ConfigError("assignment.kind: cyclic topology needs a cyclic assignment");
  }
  if (c.assignment.kind == AssignmentSpec::Kind::random && !(c.assignment.p > 0.0 && c.assignment.p <= 1.0))
    throw ConfigError("assignment.p: must lie in (0, 1]");
  if (c.assignment.kind == AssignmentSpec::Kind::explicit_sets && c.assignment.sets.size() != node_count(c.topology))
    throw ConfigError("assignment.sets: need one set per node (" + std::to_string(node_count(c.topology)) + ")");
  if (c.dataset.kind == DatasetSpec::Kind::manifest && !std::filesystem::exists(c.dataset.manifest))
    throw ConfigError("dataset.manifest: file not found: " + c.dataset.manifest.string());
  if (c.dataset.kind == DatasetSpec::Kind::lower_bound && c.dataset.k < 2) throw ConfigError("dataset.k: must be >= 2");
  if (c.dataset.sample_size && *c.dataset.sample_size == 0) throw ConfigError("dataset.sample_size: must be positive");
  if (c.learner.kind == LearnerConfig::Kind::greedy) {
    if (!(c.learner.greedy.delta > 0.0)) throw ConfigError("learner.delta: must be positive");
    if (c.dataset.kind != DatasetSpec::Kind::manifest && !c.dataset.sample_size)
      throw ConfigError("learner.kind: greedy agents need sampled data (set dataset.sample_size)");
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto c = config_from_json(j, path.parent_path());
  validate(c);
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json topo;
  switch (c.topology.kind) {
    case TopologySpec::Kind::chain: topo = {{"kind", "chain"}, {"n", c.topology.n}}; break;
    case TopologySpec::Kind::tree:
      topo = {{"kind", "tree"}, {"n", c.topology.n}, {"direction", to_string(c.topology.direction)}};
      break;
    case TopologySpec::Kind::hub: topo = {{"kind", "hub"}, {"spokes", c.topology.spokes}}; break;
    case TopologySpec::Kind::cyclic: topo = {{"kind", "cyclic"}, {"k", c.topology.k}, {"passes", c.topology.passes}}; break;
  }
  nlohmann::json data;
  switch (c.dataset.kind) {
    case DatasetSpec::Kind::manifest: data = {{"manifest", c.dataset.manifest.string()}}; break;
    case DatasetSpec::Kind::lower_bound: data = {{"synthetic", "lower_bound"}, {"k", c.dataset.k}}; break;
    case DatasetSpec::Kind::intro: data = {{"synthetic", "intro"}}; break;
  }
  if (c.dataset.sample_size) data["sample_size"] = *c.dataset.sample_size;
  nlohmann::json assign;
  switch (c.assignment.kind) {
    case AssignmentSpec::Kind::random: assign = {{"kind", "random"}, {"p", c.assignment.p}}; break;
    case AssignmentSpec::Kind::cyclic: assign = {{"kind", "cyclic"}}; break;
    case AssignmentSpec::Kind::explicit_sets: assign = {{"kind", "explicit"}, {"sets", c.assignment.sets}}; break;
    case AssignmentSpec::Kind::best_case: assign = {{"kind", "best_case"}}; break;
  }
  return {{"name", c.name},       {"topology", topo},         {"dataset", data},
          {"assignment", assign}, {"learner", to_json(c.learner)}, {"trials", c.trials},
          {"seed", c.seed},       {"test_fraction", c.test_fraction}, {"output_dir", c.output_dir.string()},
          {"threads", c.threads}};
}

// Trials -----------------------------------------------------------------

/// Data shared by every trial, loaded once.
struct ExperimentData {
  std::optional<TabularDataset> table;
  std::optional<LatentLinearOracle> population;
  std::uint64_t checksum = 0;
};

inline ExperimentData load_experiment_data(const ExperimentConfig& c) {
  ExperimentData data;
  switch (c.dataset.kind) {
    case DatasetSpec::Kind::manifest:
      data.table = load_dataset(load_manifest(c.dataset.manifest));
      data.checksum = data.table->checksum;
      break;
    case DatasetSpec::Kind::lower_bound: data.population = lower_bound_oracle(c.dataset.k); break;
    case DatasetSpec::Kind::intro: data.population = intro_counterexample_oracle(); break;
  }
  return data;
}

/// Everything a trial trains on. Oracles are owned here; `train` and `test`
/// point into them.
struct TrialContext {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::optional<Dag> dag;
  FeatureAssignment assignment;
  std::optional<SampleOracle> train_sample;  // kept for stump learning and norm diagnostics
  std::optional<SampleOracle> test_sample;
  std::unique_ptr<MomentOracle> train_owned;
  std::unique_ptr<MomentOracle> test_owned;
  const MomentOracle* train = nullptr;
  const MomentOracle* test = nullptr;
};

inline Dag build_topology(const TopologySpec& t, std::uint64_t seed) {
  switch (t.kind) {
    case TopologySpec::Kind::chain: return build_chain(t.n);
    case TopologySpec::Kind::tree: return build_random_tree(t.n, t.direction, seed);
    case TopologySpec::Kind::hub: return build_hub_and_spokes(t.spokes);
    case TopologySpec::Kind::cyclic: return build_chain(t.k * t.passes);
  }
  throw Error("unreachable");
}

/// Node v sees the single feature k - depth(v) (0-based), i.e. depth-1 nodes
/// see the last feature, depth-2 nodes the one before, and so on.
inline FeatureAssignment best_case_assignment(const Dag& dag, std::size_t k) {
  FeatureAssignment a;
  a.d = k;
  a.generator = "best_case";
  a.sets.resize(dag.node_count());
  for (NodeId v = 0; v < dag.node_count(); ++v) a.sets[v] = {k - std::min(k, dag.depth(v))};
  return a;
}

inline TrialContext prepare_trial(const ExperimentConfig& c, const ExperimentData& data, std::size_t trial) {
  TrialContext ctx;
  ctx.trial = trial;
  ctx.seed = c.seed + trial;
  ctx.dag = build_topology(c.topology, ctx.seed);

  const bool keep_samples = c.learner.kind == LearnerConfig::Kind::greedy;
  if (data.table) {
    auto s = split(*data.table, c.test_fraction, ctx.seed);
    ctx.train_sample = std::move(s.train);
    ctx.test_sample = std::move(s.test);
  } else if (c.dataset.sample_size) {
    ctx.train_sample = sample_from_latent(*data.population, *c.dataset.sample_size, derive_seed(ctx.seed, Stream::sample));
    ctx.test_sample = sample_from_latent(*data.population, *c.dataset.sample_size, derive_seed(ctx.seed, Stream::test_sample));
  }
  if (ctx.train_sample) {
    if (keep_samples) {
      ctx.train = &*ctx.train_sample;
      ctx.test = &*ctx.test_sample;
    } else {
      // Linear agents only need second moments; the Gram form makes every
      // moment O(d^2) regardless of the sample size.
      ctx.train_owned = std::make_unique<GramOracle>(GramOracle::from_samples(*ctx.train_sample));
      ctx.test_owned = std::make_unique<GramOracle>(GramOracle::from_samples(*ctx.test_sample));
      ctx.train = ctx.train_owned.get();
      ctx.test = ctx.test_owned.get();
    }
  } else {
    ctx.train = &*data.population;
    ctx.test = &*data.population;
  }

  const std::size_t d = ctx.train->feature_count();
  switch (c.assignment.kind) {
    case AssignmentSpec::Kind::random: ctx.assignment = random_feature_assignment(*ctx.dag, d, c.assignment.p, ctx.seed); break;
    case AssignmentSpec::Kind::cyclic: ctx.assignment = cyclic_assignment(ctx.dag->node_count(), d); break;
    case AssignmentSpec::Kind::explicit_sets:
      ctx.assignment.d = d;
      ctx.assignment.sets = c.assignment.sets;
      for (auto& s : ctx.assignment.sets) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
      }
      try {
        ctx.assignment.validate();
      } catch (const Error& e) {
        throw ConfigError(std::string("assignment.sets: ") + e.what());
      }
      break;
    case AssignmentSpec::Kind::best_case: ctx.assignment = best_case_assignment(*ctx.dag, d); break;
  }
  return ctx;
}

struct AgentSummary {
  NodeId node = 0;
  std::size_t position = 0;  // 1-based index in topological order
  std::size_t depth = 0;
  std::size_t subtree_size = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<AgentSummary> agents;
  double baseline_train_mse = 0.0;
  double baseline_test_mse = 0.0;
  std::optional<TrainedDag> trained;  // retained for trial 0 only
  std::optional<Dag> dag;
  std::optional<FeatureAssignment> assignment;
};

/// Single least-squares model on every feature: (train MSE, test MSE).
inline std::pair<double, double> all_features_baseline(const MomentOracle& train, const MomentOracle& test,
                                                       bool with_constant) {
  const auto [g, train_mse] = global_ols(train, with_constant);
  return {train_mse, test.mse(g.embed(test))};
}

inline TrialResult run_trial(const ExperimentConfig& c, const ExperimentData& data, std::size_t trial) {
  TrialContext ctx = prepare_trial(c, data, trial);
  TrainedDag trained = train_dag(*ctx.dag, ctx.assignment, *ctx.train, c.learner, ctx.test);
  TrialResult r;
  r.trial = trial;
  r.seed = ctx.seed;
  std::size_t position = 0;
  for (const auto& a : trained.agents)
    r.agents.push_back({a.node, ++position, ctx.dag->depth(a.node), ctx.dag->subtree_size(a.node), a.train_mse,
                        a.test_mse.value_or(a.train_mse)});
  std::tie(r.baseline_train_mse, r.baseline_test_mse) = all_features_baseline(*ctx.train, *ctx.test, c.learner.with_constant);
  if (trial == 0) {
    r.trained = std::move(trained);
    r.dag = std::move(ctx.dag);
    r.assignment = std::move(ctx.assignment);
  }
  return r;
}

/// Runs f(i) for i in [0, n) on a pool of workers; results are stored by index
/// so the outcome does not depend on scheduling. The first failure (by index)
/// is rethrown after the pool drains.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, std::size_t threads, F f) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < n; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// Aggregation --------------------------------------------------------------

struct AggregateRow {
  std::string group_key;  // position | depth | subtree_size
  std::size_t group_value = 0;
  double mean_train_mse = 0.0;
  double mean_test_mse = 0.0;
  double test_mse_stderr = 0.0;  // sample stddev / sqrt(count); 0 when count < 2
  std::size_t count = 0;
};

struct BaselineRow {
  double mean_train_mse = 0.0;
  double mean_test_mse = 0.0;
  double test_mse_stderr = 0.0;
  std::size_t count = 0;
};

inline constexpr const char* kGroupKeys[] = {"position", "depth", "subtree_size"};

namespace detail {

struct Accumulator {
  std::vector<double> train, test;
};

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace detail

/// Trials are reduced in index order, so floating-point sums are reproducible.
inline std::vector<AggregateRow> aggregate(const std::vector<TrialResult>& trials, const std::string& key) {
  std::map<std::size_t, detail::Accumulator> groups;
  for (const auto& t : trials) {
    for (const auto& a : t.agents) {
      std::size_t value = 0;
      if (key == "position") {
        value = a.position;
      } else if (key == "depth") {
        value = a.depth;
      } else if (key == "subtree_size") {
        value = a.subtree_size;
      } else {
        throw InvalidArgument("unknown group key '" + key + "'");
      }
      groups[value].train.push_back(a.train_mse);
      groups[value].test.push_back(a.test_mse);
    }
  }
  std::vector<AggregateRow> rows;
  for (const auto& [value, acc] : groups)
    rows.push_back({key, value, detail::mean(acc.train), detail::mean(acc.test), detail::stderr_of(acc.test), acc.test.size()});
  return rows;
}

inline BaselineRow aggregate_baseline(const std::vector<TrialResult>& trials) {
  std::vector<double> train, test;
  for (const auto& t : trials) {
    train.push_back(t.baseline_train_mse);
    test.push_back(t.baseline_test_mse);
  }
  return {detail::mean(train), detail::mean(test), detail::stderr_of(test), test.size()};
}

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialResult> trials;
  std::map<std::string, std::vector<AggregateRow>> aggregates;
  BaselineRow baseline;
  std::uint64_t dataset_checksum = 0;
};

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const ExperimentData data = load_experiment_data(config);
  ExperimentResult out;
  out.config = config;
  out.dataset_checksum = data.checksum;
  out.trials = parallel_map<TrialResult>(config.trials, config.threads, [&](std::size_t i) {
    try {
      return run_trial(config, data, i);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw Error("trial " + std::to_string(i) + " (seed " + std::to_string(config.seed + i) + "): " + e.what());
    }
  });
  for (const char* key : kGroupKeys) out.aggregates[key] = aggregate(out.trials, key);
  out.baseline = aggregate_baseline(out.trials);
  return out;
}

// Writers ------------------------------------------------------------------

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows, const BaselineRow& baseline) {
  os << "group_key,group_value,mean_train_mse,mean_test_mse,test_mse_stderr,count,beats_baseline\n";
  for (const auto& r : rows)
    os << r.group_key << ',' << r.group_value << ',' << format_real(r.mean_train_mse) << ',' << format_real(r.mean_test_mse)
       << ',' << format_real(r.test_mse_stderr) << ',' << r.count << ',' << (r.mean_test_mse < baseline.mean_test_mse ? 1 : 0)
       << '\n';
}

inline void write_baseline_csv(std::ostream& os, const BaselineRow& b) {
  os << "mean_train_mse,mean_test_mse,test_mse_stderr,count\n"
     << format_real(b.mean_train_mse) << ',' << format_real(b.mean_test_mse) << ',' << format_real(b.test_mse_stderr) << ','
     << b.count << '\n';
}

inline void write_trials_csv(std::ostream& os, const std::vector<TrialResult>& trials) {
  os << "trial,seed,node,position,depth,subtree_size,train_mse,test_mse\n";
  for (const auto& t : trials)
    for (const auto& a : t.agents)
      os << t.trial << ',' << t.seed << ',' << a.node << ',' << a.position << ',' << a.depth << ',' << a.subtree_size << ','
         << format_real(a.train_mse) << ',' << format_real(a.test_mse) << '\n';
}

inline nlohmann::json manifest_json(const ExperimentResult& r) {
  std::vector<std::uint64_t> seeds;
  for (const auto& t : r.trials) seeds.push_back(t.seed);
  std::ostringstream checksum;
  checksum << std::hex << r.dataset_checksum;
  return {{"version", kVersion},
          {"config", to_json(r.config)},
          {"seeds", seeds},
          {"seed_rule", "trial i uses base seed + i; assignment, split, topology and sampling use derived substreams"},
          {"dataset_checksum_fnv1a64", checksum.str()},
          {"baseline", {{"mean_train_mse", r.baseline.mean_train_mse}, {"mean_test_mse", r.baseline.mean_test_mse}}}};
}

/// Writes every output file into dir and returns their paths.
inline std::vector<std::filesystem::path> write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::string& name) {
    written.push_back(dir / name);
    std::ofstream f(written.back(), std::ios::binary);
    if (!f) throw Error("cannot write " + written.back().string());
    return f;
  };
  for (const char* key : kGroupKeys) {
    auto f = open(r.config.name + "_by_" + key + ".csv");
    write_aggregate_csv(f, r.aggregates.at(key), r.baseline);
  }
  {
    auto f = open(r.config.name + "_baseline.csv");
    write_baseline_csv(f, r.baseline);
  }
  {
    auto f = open(r.config.name + "_trials.csv");
    write_trials_csv(f, r.trials);
  }
  {
    auto f = open(r.config.name + "_manifest.json");
    f << manifest_json(r).dump(2) << '\n';
  }
  if (!r.trials.empty() && r.trials.front().trained) {
    const auto& t0 = r.trials.front();
    auto f = open(r.config.name + "_trained_dag_trial0.json");
    nlohmann::json j = to_json(*t0.trained);
    j["dag"] = to_json(*t0.dag);
    j["assignment"] = to_json(*t0.assignment);
    f << j.dump(2) << '\n';
  }
  return written;
}

// Lower-bound trace ----------------------------------------------------------

struct LowerboundResult {
  PassTrace exact;
  std::optional<std::size_t> sample_size;
  std::vector<double> train_mse;  // empirical mode, one per agent
  std::vector<double> test_mse;
  std::optional<DecayFit> fit;  // over end-of-pass errors (train errors in empirical mode)
};

/// Exact trace from the population engine and, when m is given, the same
/// cyclic chain trained on m sampled rows and scored on m fresh rows.
inline LowerboundResult run_lowerbound_figure(std::size_t k, std::size_t passes, std::optional<std::size_t> m,
                                              std::uint64_t seed) {
  LowerboundResult r;
  r.exact = run_cyclic_path(k, passes);
  r.sample_size = m;
  std::vector<std::pair<double, double>> points;
  if (m) {
    const auto oracle = lower_bound_oracle(k);
    const auto train = GramOracle::from_samples(sample_from_latent(oracle, *m, derive_seed(seed, Stream::sample)));
    const auto test = GramOracle::from_samples(sample_from_latent(oracle, *m, derive_seed(seed, Stream::test_sample)));
    const Dag chain = build_chain(k * passes);
    const auto trained = train_dag(chain, cyclic_assignment(k * passes, k), train, LearnerConfig{}, &test);
    for (const auto& a : trained.agents) {
      r.train_mse.push_back(a.train_mse);
      r.test_mse.push_back(*a.test_mse);
    }
    for (std::size_t p = 1; p <= passes; ++p) points.emplace_back(static_cast<double>(p), r.train_mse[p * k - 1]);
  } else {
    points = end_of_pass_points(r.exact);
  }
  bool positive = true;
  for (const auto& pt : points) positive = positive && pt.second > 0.0;
  if (points.size() >= 3 && positive) r.fit = fit_decay_curves(points);
  return r;
}

inline void write_lowerbound_csv(std::ostream& os, const LowerboundResult& r) {
  if (!r.sample_size) {
    write_trace_csv(os, r.exact);
    return;
  }
  os << "pass,index,position,exact_mse,train_mse,test_mse\n";
  for (std::size_t i = 0; i < r.exact.steps.size(); ++i) {
    const auto& s = r.exact.steps[i];
    os << s.pass << ',' << s.index << ',' << s.position << ',' << format_real(s.mse) << ',' << format_real(r.train_mse[i])
       << ',' << format_real(r.test_mse[i]) << '\n';
  }
}

inline nlohmann::json to_json(const LowerboundResult& r) {
  std::vector<double> exact_end, bound;
  for (std::size_t p = 1; p <= r.exact.passes; ++p) {
    exact_end.push_back(r.exact.end_of_pass_mse(p));
    bound.push_back(1.0 / static_cast<double>(p + 1));
  }
  nlohmann::json j = {{"k", r.exact.k},
                      {"passes", r.exact.passes},
                      {"beyond_theorem_regime", r.exact.beyond_theorem_regime()},
                      {"end_of_pass_exact", exact_end},
                      {"lower_bound_one_over_p_plus_one", bound}};
  if (r.sample_size) {
    std::vector<double> tr, te;
    for (std::size_t p = 1; p <= r.exact.passes; ++p) {
      tr.push_back(r.train_mse[p * r.exact.k - 1]);
      te.push_back(r.test_mse[p * r.exact.k - 1]);
    }
    j["sample_size"] = *r.sample_size;
    j["end_of_pass_train"] = tr;
    j["end_of_pass_test"] = te;
  }
  if (r.fit)
    j["decay_fit"] = {{"alpha", r.fit->alpha}, {"beta", r.fit->beta}, {"sse_alpha", r.fit->sse_alpha},
                      {"sse_beta", r.fit->sse_beta}, {"better", r.fit->better_family()}};
  return j;
}

}  // namespace dagagg
