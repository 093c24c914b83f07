#pragma once

// Agents and sequential DAG training.
//
// A linear agent regresses the label on its local features, its parents'
// predictions and (optionally) a constant. A greedy orthogonal agent starts
// from the projection onto its parents' predictions and keeps adding the base
// hypothesis most correlated with the current residual, re-projecting onto the
// whole pool each time, until no hypothesis reaches correlation delta.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dagagg/error.hpp"
#include "dagagg/graph.hpp"
#include "dagagg/numerics.hpp"
#include "dagagg/oracle.hpp"

namespace dagagg {

/// Depth-1 decision stump: +scale above the threshold, -scale at or below.
struct Stump {
  std::size_t feature = 0;
  double threshold = 0.0;
  double scale = 1.0;

  double operator()(double x) const { return x > threshold ? scale : -scale; }

  Vector evaluate(const SampleOracle& s) const {
    const auto col = s.features().col(static_cast<Eigen::Index>(feature));
    return col.unaryExpr([this](double x) { return (*this)(x); });
  }
};

/// One input of a predictor: a raw feature, the constant, a parent's
/// prediction, or a base hypothesis.
struct Term {
  enum class Kind { feature, constant, parent, stump };
  Kind kind = Kind::feature;
  std::size_t index = 0;  // feature index or parent node id
  Stump stump;

  static Term feature_term(std::size_t i) { return {Kind::feature, i, {}}; }
  static Term constant_term() { return {Kind::constant, 0, {}}; }
  static Term parent_term(NodeId p) { return {Kind::parent, p, {}}; }
  static Term stump_term(const Stump& s) { return {Kind::stump, s.feature, s}; }

  std::string label() const {
    switch (kind) {
      case Kind::feature: return "x" + std::to_string(index);
      case Kind::constant: return "1";
      case Kind::parent: return "agent" + std::to_string(index);
      case Kind::stump: return "stump(x" + std::to_string(stump.feature) + ">" + std::to_string(stump.threshold) + ")";
    }
    return "?";
  }
};

struct LinearPredictor {
  std::vector<Term> inputs;
  Vector weights;
  /// Coefficients over (x_0..x_{d-1}, 1): the prediction as a single linear
  /// function of the full feature vector, obtained by substituting every
  /// parent's own flattened coefficients.
  Vector flattened_beta;
  double train_mse = 0.0;
  double solver_mse = 0.0;  // E[y^2] - w . cross as reported by the solver
  std::size_t effective_rank = 0;

  double evaluate_flat(std::span<const double> x) const {
    const auto d = static_cast<std::size_t>(flattened_beta.size()) - 1;
    if (x.size() != d) throw DimensionMismatch("evaluation point has wrong dimension");
    double v = flattened_beta(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) v += flattened_beta(static_cast<Eigen::Index>(i)) * x[i];
    return v;
  }
};

struct SpanPredictor {
  std::vector<Term> pool;
  Vector coefficients;
  std::size_t iteration_count = 0;
  double delta = 0.0;
  std::size_t max_iterations = 0;
  double initial_mse = 0.0;          // E[(Y - y0)^2], y0 = projection onto the initial pool
  std::vector<double> mse_trace;     // MSE after 0, 1, ..., T additions
  double final_max_correlation = 0;  // max |E[h (Y - y)]| over the dictionary at exit
  bool terminated_by_threshold = false;
  bool max_iterations_exceeded = false;
  double train_mse = 0.0;
};

/// Trained predictors of one run, as elements of the training oracle's space.
class PredictorRegistry {
 public:
  explicit PredictorRegistry(const MomentOracle& oracle) : oracle_(&oracle) {}

  const MomentOracle& oracle() const { return *oracle_; }

  void add(NodeId id, Vector embedding, Vector flattened_beta = {}) {
    entries_[id] = Entry{std::move(embedding), std::move(flattened_beta)};
  }
  bool contains(NodeId id) const { return entries_.count(id) != 0; }

  const Vector& embedding(NodeId id) const { return find(id).embedding; }
  const Vector& flattened_beta(NodeId id) const { return find(id).flattened_beta; }

  Vector resolve(const Term& t) const {
    switch (t.kind) {
      case Term::Kind::feature: return oracle_->feature(t.index);
      case Term::Kind::constant: return oracle_->constant();
      case Term::Kind::parent: return embedding(t.index);
      case Term::Kind::stump: {
        const SampleOracle* s = oracle_->sample_backing();
        if (s == nullptr) throw OracleNotSampleBacked("stumps need a sample-backed oracle");
        return t.stump.evaluate(*s);
      }
    }
    throw Error("unreachable");
  }

 private:
  struct Entry {
    Vector embedding;
    Vector flattened_beta;
  };
  const Entry& find(NodeId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw UnknownParent("predictor " + std::to_string(id) + " is not registered");
    return it->second;
  }

  const MomentOracle* oracle_;
  std::map<NodeId, Entry> entries_;
};

inline Vector combine(const std::vector<Vector>& terms, const Vector& coefficients, std::size_t dim) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < terms.size(); ++i) out += coefficients(static_cast<Eigen::Index>(i)) * terms[i];
  return out;
}

/// Least squares over local features + parent predictions (+ constant). The
/// result is registered under `self` for downstream agents.
inline LinearPredictor train_linear_agent(PredictorRegistry& registry, NodeId self,
                                          const std::vector<std::size_t>& local_features,
                                          const std::vector<NodeId>& parents, bool with_constant) {
  const MomentOracle& oracle = registry.oracle();
  LinearPredictor lp;
  for (std::size_t f : local_features) {
    if (f >= oracle.feature_count()) throw InvalidArgument("feature " + std::to_string(f) + " out of range");
    lp.inputs.push_back(Term::feature_term(f));
  }
  for (NodeId p : parents) {
    if (!registry.contains(p)) throw UnknownParent("parent " + std::to_string(p) + " has not been trained");
    lp.inputs.push_back(Term::parent_term(p));
  }
  if (with_constant) lp.inputs.push_back(Term::constant_term());

  std::vector<Vector> vars;
  vars.reserve(lp.inputs.size());
  for (const auto& t : lp.inputs) vars.push_back(registry.resolve(t));
  const Vector y = oracle.label();
  const auto sol = solve_least_squares(oracle.gram(vars), oracle.cross(vars, y), oracle.inner(y, y));
  lp.weights = sol.weights;
  lp.solver_mse = sol.achieved_mse;
  lp.effective_rank = sol.effective_rank;

  const auto d = static_cast<Eigen::Index>(oracle.feature_count());
  lp.flattened_beta = Vector::Zero(d + 1);
  bool flattenable = true;
  for (std::size_t i = 0; i < lp.inputs.size(); ++i) {
    const double w = lp.weights(static_cast<Eigen::Index>(i));
    const Term& t = lp.inputs[i];
    if (t.kind == Term::Kind::feature) {
      lp.flattened_beta(static_cast<Eigen::Index>(t.index)) += w;
    } else if (t.kind == Term::Kind::constant) {
      lp.flattened_beta(d) += w;
    } else {
      const Vector& pb = registry.flattened_beta(t.index);
      if (pb.size() != d + 1) {
        flattenable = false;
      } else {
        lp.flattened_beta += w * pb;
      }
    }
  }
  if (!flattenable) lp.flattened_beta.resize(0);

  Vector embedding = combine(vars, lp.weights, oracle.embedding_dimension());
  lp.train_mse = oracle.mse(embedding);
  registry.add(self, std::move(embedding), lp.flattened_beta);
  return lp;
}

/// Normalized stumps over some features of a sample, with the row orderings
/// needed to score every stump against a residual in one sweep per feature.
class StumpDictionary {
 public:
  static constexpr std::size_t kDefaultThresholdCap = 256;

  StumpDictionary(const SampleOracle& sample, const std::vector<std::size_t>& features,
                  std::size_t threshold_cap = kDefaultThresholdCap)
      : rows_(sample.rows()) {
    const Matrix& x = sample.features();
    for (std::size_t f : features) {
      if (f >= sample.feature_count()) throw InvalidArgument("stump feature out of range");
      FeatureBlock block;
      block.feature = f;
      const auto col = x.col(static_cast<Eigen::Index>(f));
      block.order.resize(rows_);
      for (std::size_t r = 0; r < rows_; ++r) block.order[r] = r;
      std::stable_sort(block.order.begin(), block.order.end(),
                       [&](std::size_t a, std::size_t b) { return col(static_cast<Eigen::Index>(a)) < col(static_cast<Eigen::Index>(b)); });
      block.sorted.resize(rows_);
      for (std::size_t r = 0; r < rows_; ++r) block.sorted[r] = col(static_cast<Eigen::Index>(block.order[r]));

      std::vector<double> distinct;
      for (double v : block.sorted)
        if (distinct.empty() || v > distinct.back()) distinct.push_back(v);
      std::vector<double> thresholds;
      if (distinct.size() <= threshold_cap + 1) {
        for (std::size_t i = 0; i + 1 < distinct.size(); ++i) thresholds.push_back(0.5 * (distinct[i] + distinct[i + 1]));
      } else {
        // Quantile-spaced: the j/(cap+1) sample quantile, snapped up to the
        // midpoint with the next distinct value.
        for (std::size_t j = 1; j <= threshold_cap; ++j) {
          const std::size_t pos = std::min(rows_ - 1, j * rows_ / (threshold_cap + 1));
          const double q = block.sorted[pos];
          const auto next = std::upper_bound(distinct.begin(), distinct.end(), q);
          if (next == distinct.end()) continue;
          const double t = 0.5 * (q + *next);
          if (thresholds.empty() || t > thresholds.back()) thresholds.push_back(t);
        }
      }
      for (double t : thresholds) {
        // Values are +-scale, so scale = 1 gives empirical second moment 1.
        Stump s{f, t, 1.0};
        block.first_stump = block.first_stump == kNone ? stumps_.size() : block.first_stump;
        stumps_.push_back(s);
      }
      block.count = thresholds.size();
      blocks_.push_back(std::move(block));
    }
  }

  const std::vector<Stump>& stumps() const { return stumps_; }
  std::size_t size() const { return stumps_.size(); }

  /// E[h * residual] for every stump, in dictionary order.
  std::vector<double> correlations(const Vector& residual) const {
    if (static_cast<std::size_t>(residual.size()) != rows_) throw DimensionMismatch("residual length != sample rows");
    std::vector<double> out(stumps_.size());
    const double total = residual.sum();
    const double m = static_cast<double>(rows_);
    for (const auto& b : blocks_) {
      double below = 0.0;  // sum of residual over rows with x <= threshold
      std::size_t r = 0;
      for (std::size_t s = 0; s < b.count; ++s) {
        const Stump& st = stumps_[b.first_stump + s];
        while (r < rows_ && b.sorted[r] <= st.threshold) below += residual(static_cast<Eigen::Index>(b.order[r++]));
        out[b.first_stump + s] = st.scale * (total - 2.0 * below) / m;
      }
    }
    return out;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  struct FeatureBlock {
    std::size_t feature = 0;
    std::vector<std::size_t> order;
    std::vector<double> sorted;
    std::size_t first_stump = kNone;
    std::size_t count = 0;
  };

  std::size_t rows_;
  std::vector<Stump> stumps_;
  std::vector<FeatureBlock> blocks_;
};

inline StumpDictionary stump_dictionary(const MomentOracle& oracle, const std::vector<std::size_t>& features,
                                        std::size_t threshold_cap = StumpDictionary::kDefaultThresholdCap) {
  const SampleOracle* s = oracle.sample_backing();
  if (s == nullptr) throw OracleNotSampleBacked("stump enumeration needs a sample-backed oracle");
  return StumpDictionary(*s, features, threshold_cap);
}

struct GreedyOptions {
  double delta = 0.1;
  std::optional<std::size_t> max_iterations;  // default ceil(initial_mse / delta^2) + 1
  std::size_t threshold_cap = StumpDictionary::kDefaultThresholdCap;
};

inline SpanPredictor train_greedy_orthogonal_agent(PredictorRegistry& registry, NodeId self,
                                                   const std::vector<std::size_t>& local_features,
                                                   const std::vector<NodeId>& parents, bool with_constant,
                                                   const GreedyOptions& options) {
  if (!(options.delta > 0.0)) throw InvalidArgument("delta must be positive");
  const MomentOracle& oracle = registry.oracle();
  const StumpDictionary dict = stump_dictionary(oracle, local_features, options.threshold_cap);

  SpanPredictor sp;
  sp.delta = options.delta;
  for (NodeId p : parents) {
    if (!registry.contains(p)) throw UnknownParent("parent " + std::to_string(p) + " has not been trained");
    sp.pool.push_back(Term::parent_term(p));
  }
  if (with_constant) sp.pool.push_back(Term::constant_term());

  const Vector y = oracle.label();
  const double y2 = oracle.inner(y, y);
  std::vector<Vector> vars;
  for (const auto& t : sp.pool) vars.push_back(registry.resolve(t));
  Matrix gram = oracle.gram(vars);
  Vector cross = oracle.cross(vars, y);
  const std::size_t dim = oracle.embedding_dimension();

  auto project = [&]() {
    const auto sol = solve_least_squares(gram, cross, y2);
    sp.coefficients = sol.weights;
    return combine(vars, sol.weights, dim);
  };

  Vector prediction = project();
  sp.initial_mse = oracle.mse(prediction);
  sp.mse_trace.push_back(sp.initial_mse);
  sp.max_iterations = options.max_iterations.value_or(
      static_cast<std::size_t>(std::ceil(sp.initial_mse / (options.delta * options.delta))) + 1);

  while (true) {
    const Vector residual = y - prediction;
    const auto corr = dict.correlations(residual);
    std::size_t best = corr.size();
    double best_abs = -1.0;
    for (std::size_t i = 0; i < corr.size(); ++i)
      if (std::abs(corr[i]) > best_abs) {
        best_abs = std::abs(corr[i]);
        best = i;
      }
    sp.final_max_correlation = std::max(0.0, best_abs);
    if (best == corr.size() || best_abs < options.delta) {
      sp.terminated_by_threshold = true;
      break;
    }
    if (sp.iteration_count >= sp.max_iterations) {
      sp.max_iterations_exceeded = true;
      break;
    }
    const Stump& h = dict.stumps()[best];
    sp.pool.push_back(Term::stump_term(h));
    Vector hv = registry.resolve(sp.pool.back());
    const auto n = gram.rows();
    gram.conservativeResize(n + 1, n + 1);
    for (Eigen::Index a = 0; a < n; ++a) gram(a, n) = gram(n, a) = oracle.inner(vars[static_cast<std::size_t>(a)], hv);
    gram(n, n) = oracle.inner(hv, hv);
    cross.conservativeResize(n + 1);
    cross(n) = oracle.inner(hv, y);
    vars.push_back(std::move(hv));
    prediction = project();
    ++sp.iteration_count;
    sp.mse_trace.push_back(oracle.mse(prediction));
  }
  sp.train_mse = oracle.mse(prediction);
  registry.add(self, std::move(prediction));
  return sp;
}

// DAG training ------------------------------------------------------------

struct LearnerConfig {
  enum class Kind { linear, greedy };
  Kind kind = Kind::linear;
  bool with_constant = false;
  GreedyOptions greedy;
};

using Predictor = std::variant<LinearPredictor, SpanPredictor>;

struct AgentRecord {
  NodeId node = 0;
  std::vector<NodeId> parents;
  std::vector<std::size_t> features;
  Predictor predictor;
  double train_mse = 0.0;
  std::optional<double> test_mse;
  Vector train_embedding;
  std::optional<Vector> test_embedding;

  const std::vector<Term>& terms() const {
    return std::visit([](const auto& p) -> const std::vector<Term>& {
      if constexpr (std::is_same_v<std::decay_t<decltype(p)>, LinearPredictor>) {
        return p.inputs;
      } else {
        return p.pool;
      }
    }, predictor);
  }
  const Vector& coefficients() const {
    return std::visit([](const auto& p) -> const Vector& {
      if constexpr (std::is_same_v<std::decay_t<decltype(p)>, LinearPredictor>) {
        return p.weights;
      } else {
        return p.coefficients;
      }
    }, predictor);
  }
};

struct TrainedDag {
  std::vector<AgentRecord> agents;  // topological order
  LearnerConfig config;

  const AgentRecord& agent(NodeId v) const {
    for (const auto& a : agents)
      if (a.node == v) return a;
    throw InvalidArgument("no agent " + std::to_string(v));
  }
};

/// Embedding of a trained predictor on another oracle (e.g. a test split),
/// given the parents' embeddings on that oracle.
inline Vector embed_terms(const std::vector<Term>& terms, const Vector& coefficients, const MomentOracle& target,
                          const std::map<NodeId, Vector>& parent_embeddings) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(target.embedding_dimension()));
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Term& t = terms[i];
    const double c = coefficients(static_cast<Eigen::Index>(i));
    switch (t.kind) {
      case Term::Kind::feature: out += c * target.feature(t.index); break;
      case Term::Kind::constant: out += c * target.constant(); break;
      case Term::Kind::parent: out += c * parent_embeddings.at(t.index); break;
      case Term::Kind::stump: {
        const SampleOracle* s = target.sample_backing();
        if (s == nullptr) throw OracleNotSampleBacked("evaluating stumps needs a sample-backed oracle");
        out += c * t.stump.evaluate(*s);
        break;
      }
    }
  }
  return out;
}

inline TrainedDag train_dag(const Dag& dag, const FeatureAssignment& assignment, const MomentOracle& train,
                            const LearnerConfig& config, const MomentOracle* test = nullptr) {
  if (assignment.agent_count() != dag.node_count())
    throw InvalidArgument("assignment has " + std::to_string(assignment.agent_count()) + " agents, DAG has " +
                          std::to_string(dag.node_count()));
  if (assignment.d > train.feature_count()) throw InvalidArgument("assignment references more features than the oracle has");
  PredictorRegistry registry(train);
  std::map<NodeId, Vector> test_embeddings;
  TrainedDag out;
  out.config = config;
  for (NodeId v : dag.topo_order()) {
    AgentRecord rec;
    rec.node = v;
    rec.parents = dag.parents(v);
    rec.features = assignment.sets[v];
    try {
      if (config.kind == LearnerConfig::Kind::linear) {
        auto lp = train_linear_agent(registry, v, rec.features, rec.parents, config.with_constant);
        rec.train_mse = lp.train_mse;
        rec.predictor = std::move(lp);
      } else {
        auto sp = train_greedy_orthogonal_agent(registry, v, rec.features, rec.parents, config.with_constant, config.greedy);
        rec.train_mse = sp.train_mse;
        rec.predictor = std::move(sp);
      }
      rec.train_embedding = registry.embedding(v);
      if (test != nullptr) {
        Vector e = embed_terms(rec.terms(), rec.coefficients(), *test, test_embeddings);
        rec.test_mse = test->mse(e);
        test_embeddings[v] = e;
        rec.test_embedding = std::move(e);
      }
    } catch (const AgentTrainingError&) {
      throw;
    } catch (const std::exception& e) {
      throw AgentTrainingError(v, e.what());
    }
    out.agents.push_back(std::move(rec));
  }
  return out;
}

/// Pointwise evaluation through the DAG: each parent's prediction is computed
/// recursively from the same feature vector.
inline double evaluate_recursive(const TrainedDag& trained, NodeId v, std::span<const double> x) {
  const AgentRecord& a = trained.agent(v);
  const auto& terms = a.terms();
  const Vector& c = a.coefficients();
  double out = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Term& t = terms[i];
    double value = 0.0;
    switch (t.kind) {
      case Term::Kind::feature: value = x[t.index]; break;
      case Term::Kind::constant: value = 1.0; break;
      case Term::Kind::parent: value = evaluate_recursive(trained, t.index, x); break;
      case Term::Kind::stump: value = t.stump(x[t.stump.feature]); break;
    }
    out += c(static_cast<Eigen::Index>(i)) * value;
  }
  return out;
}

// JSON ------------------------------------------------------------------

inline nlohmann::json to_json(const Term& t) {
  nlohmann::json j;
  switch (t.kind) {
    case Term::Kind::feature: j = {{"kind", "feature"}, {"index", t.index}}; break;
    case Term::Kind::constant: j = {{"kind", "constant"}}; break;
    case Term::Kind::parent: j = {{"kind", "parent"}, {"node", t.index}}; break;
    case Term::Kind::stump:
      j = {{"kind", "stump"}, {"feature", t.stump.feature}, {"threshold", t.stump.threshold}, {"scale", t.stump.scale}};
      break;
  }
  return j;
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json to_json(const LearnerConfig& c) {
  nlohmann::json j = {{"kind", c.kind == LearnerConfig::Kind::linear ? "linear" : "greedy"},
                      {"with_constant", c.with_constant}};
  if (c.kind == LearnerConfig::Kind::greedy) {
    j["delta"] = c.greedy.delta;
    j["threshold_cap"] = c.greedy.threshold_cap;
    if (c.greedy.max_iterations) j["max_iterations"] = *c.greedy.max_iterations;
  }
  return j;
}

inline nlohmann::json to_json(const TrainedDag& t) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : t.agents) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& term : a.terms()) terms.push_back(to_json(term));
    nlohmann::json j = {{"node", a.node},       {"parents", a.parents},
                        {"features", a.features}, {"inputs", terms},
                        {"weights", to_std(a.coefficients())}, {"train_mse", a.train_mse}};
    if (a.test_mse) j["test_mse"] = *a.test_mse;
    if (const auto* lp = std::get_if<LinearPredictor>(&a.predictor)) {
      j["type"] = "linear";
      j["flattened_beta"] = to_std(lp->flattened_beta);
      j["effective_rank"] = lp->effective_rank;
    } else {
      const auto& sp = std::get<SpanPredictor>(a.predictor);
      j["type"] = "greedy";
      j["iterations"] = sp.iteration_count;
      j["max_iterations"] = sp.max_iterations;
      j["initial_mse"] = sp.initial_mse;
      j["final_max_correlation"] = sp.final_max_correlation;
      j["terminated_by_threshold"] = sp.terminated_by_threshold;
      j["max_iterations_exceeded"] = sp.max_iterations_exceeded;
    }
    agents.push_back(std::move(j));
  }
  return {{"config", to_json(t.config)}, {"agents", agents}};
}

}  // namespace dagagg
