#pragma once

// Checkable forms of the structural identities and bounds satisfied by
// least-squares agents on a DAG.
//
// Identity checks report the largest violation of an equation that holds
// exactly in population (and in-sample for empirical oracles). Bound checks
// report lhs, rhs and slack = rhs - lhs together with every parameter that
// went into the right-hand side.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dagagg/error.hpp"
#include "dagagg/format.hpp"
#include "dagagg/graph.hpp"
#include "dagagg/learners.hpp"
#include "dagagg/numerics.hpp"
#include "dagagg/oracle.hpp"

namespace dagagg {

inline constexpr double kIdentityThreshold = 1e-8;
inline constexpr double kBoundTolerance = 1e-6;

struct IdentityReport {
  struct Row {
    std::string label;
    double violation = 0.0;
  };
  std::string name;
  double max_violation = 0.0;
  double threshold = kIdentityThreshold;
  bool pass = true;
  std::vector<Row> rows;

  void add(std::string label, double violation) {
    // A NaN violation sticks and never passes.
    if (std::isnan(violation) || violation > max_violation) max_violation = violation;
    rows.push_back({std::move(label), violation});
    pass = max_violation <= threshold;
  }
  void finalize() { pass = max_violation <= threshold; }  // false for NaN
};

struct BoundReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double tolerance = kBoundTolerance;
  bool precondition_met = true;
  std::string note;
  bool pass = true;
  std::map<std::string, double> parameters;

  void finalize() {
    slack = rhs - lhs;
    pass = precondition_met && slack >= -tolerance;
  }
};

/// g(x) = sum_l alpha_l x_l + constant, a benchmark predictor over raw features.
struct LinearComparator {
  Vector alpha;
  double constant = 0.0;

  double l1_norm() const { return alpha.cwiseAbs().sum() + std::abs(constant); }
  Vector embed(const MomentOracle& oracle) const {
    Vector out = constant * oracle.constant();
    for (Eigen::Index l = 0; l < alpha.size(); ++l)
      if (alpha(l) != 0.0) out += alpha(l) * oracle.feature(static_cast<std::size_t>(l));
    return out;
  }
};

/// Least squares on every feature (plus the constant when asked).
inline std::pair<LinearComparator, double> global_ols(const MomentOracle& oracle, bool with_constant) {
  std::vector<Vector> vars;
  for (std::size_t i = 0; i < oracle.feature_count(); ++i) vars.push_back(oracle.feature(i));
  if (with_constant) vars.push_back(oracle.constant());
  const Vector y = oracle.label();
  const auto sol = solve_least_squares(oracle.gram(vars), oracle.cross(vars, y), oracle.inner(y, y));
  LinearComparator g;
  g.alpha = sol.weights.head(static_cast<Eigen::Index>(oracle.feature_count()));
  if (with_constant) g.constant = sol.weights(static_cast<Eigen::Index>(oracle.feature_count()));
  return {g, oracle.mse(g.embed(oracle))};
}

// Identities ------------------------------------------------------------

/// MSE(f) = MSE(g) - 2E[g(f-y)] + 2E[f(f-y)] - E[(f-g)^2], for any f and g.
inline IdentityReport check_mse_decomposition(const Vector& f, const Vector& g, const MomentOracle& oracle,
                                              double threshold = kIdentityThreshold) {
  IdentityReport r{"mse_decomposition", 0.0, threshold, true, {}};
  const Vector y = oracle.label();
  const Vector fy = f - y;
  const Vector fg = f - g;
  const double rhs = oracle.mse(g) - 2.0 * oracle.inner(g, fy) + 2.0 * oracle.inner(f, fy) - oracle.inner(fg, fg);
  r.add("f,g", std::abs(oracle.mse(f) - rhs));
  return r;
}

/// max |E[u (f - y)]| over the supplied test functions.
inline IdentityReport check_multiaccuracy(const Vector& f, const std::vector<std::pair<std::string, Vector>>& tests,
                                          const MomentOracle& oracle, double threshold = kIdentityThreshold) {
  IdentityReport r{"multiaccuracy", 0.0, threshold, true, {}};
  const Vector residual = f - oracle.label();
  for (const auto& [label, u] : tests) r.add(label, std::abs(oracle.inner(u, residual)));
  r.finalize();
  return r;
}

inline IdentityReport check_self_orthogonality(const Vector& f, const MomentOracle& oracle,
                                               double threshold = kIdentityThreshold) {
  IdentityReport r{"self_orthogonality", 0.0, threshold, true, {}};
  r.add("f", std::abs(oracle.inner(f, f - oracle.label())));
  return r;
}

namespace detail {

inline std::vector<std::pair<std::string, Vector>> resolved_inputs(const TrainedDag& trained, const AgentRecord& a,
                                                                   const MomentOracle& oracle) {
  std::vector<std::pair<std::string, Vector>> out;
  for (const Term& t : a.terms()) {
    Vector v;
    switch (t.kind) {
      case Term::Kind::feature: v = oracle.feature(t.index); break;
      case Term::Kind::constant: v = oracle.constant(); break;
      case Term::Kind::parent: v = trained.agent(t.index).train_embedding; break;
      case Term::Kind::stump: {
        const SampleOracle* s = oracle.sample_backing();
        if (s == nullptr) throw OracleNotSampleBacked("stump inputs need a sample-backed oracle");
        v = t.stump.evaluate(*s);
        break;
      }
    }
    out.emplace_back(t.label(), std::move(v));
  }
  return out;
}

}  // namespace detail

/// Every agent's residual against each of its own inputs.
inline IdentityReport check_input_multiaccuracy(const TrainedDag& trained, const MomentOracle& oracle,
                                                double threshold = kIdentityThreshold) {
  IdentityReport r{"input_multiaccuracy", 0.0, threshold, true, {}};
  for (const auto& a : trained.agents) {
    const Vector residual = a.train_embedding - oracle.label();
    for (const auto& [label, u] : detail::resolved_inputs(trained, a, oracle))
      r.add("agent" + std::to_string(a.node) + "/" + label, std::abs(oracle.inner(u, residual)));
  }
  r.finalize();
  return r;
}

inline IdentityReport check_all_self_orthogonality(const TrainedDag& trained, const MomentOracle& oracle,
                                                   double threshold = kIdentityThreshold) {
  IdentityReport r{"self_orthogonality", 0.0, threshold, true, {}};
  for (const auto& a : trained.agents)
    r.add("agent" + std::to_string(a.node), std::abs(oracle.inner(a.train_embedding, a.train_embedding - oracle.label())));
  r.finalize();
  return r;
}

/// For every edge j -> i: E[(y_i - y_j)^2] = MSE_j - MSE_i.
inline IdentityReport check_edge_closeness(const TrainedDag& trained, const MomentOracle& oracle,
                                           double threshold = kIdentityThreshold) {
  IdentityReport r{"edge_closeness", 0.0, threshold, true, {}};
  for (const auto& a : trained.agents) {
    for (NodeId p : a.parents) {
      const auto& parent = trained.agent(p);
      const Vector diff = a.train_embedding - parent.train_embedding;
      const double lhs = oracle.inner(diff, diff);
      const double rhs = oracle.mse(parent.train_embedding) - oracle.mse(a.train_embedding);
      r.add(std::to_string(p) + "->" + std::to_string(a.node), std::abs(lhs - rhs));
    }
  }
  r.finalize();
  return r;
}

/// Child MSE never exceeds a parent's (hence non-increasing along every path).
/// The violation is the amount by which a child exceeds its parent.
inline IdentityReport check_monotonicity(const TrainedDag& trained, double threshold = kIdentityThreshold) {
  IdentityReport r{"path_monotonicity", 0.0, threshold, true, {}};
  for (const auto& a : trained.agents)
    for (NodeId p : a.parents)
      r.add(std::to_string(p) + "->" + std::to_string(a.node), std::max(0.0, a.train_mse - trained.agent(p).train_mse));
  r.finalize();
  return r;
}

// Bounds ----------------------------------------------------------------

namespace detail {

inline double predecessor_mse(const TrainedDag& trained, const Path& path, std::size_t i, const MomentOracle& oracle) {
  // A subsequence starting at the path's first agent is measured against the
  // zero predictor.
  return i == 0 ? oracle.label_second_moment() : trained.agent(path[i - 1]).train_mse;
}

inline std::vector<std::size_t> union_features(const FeatureAssignment* assignment, const TrainedDag& trained,
                                               const Path& path, std::size_t i, std::size_t j) {
  std::vector<char> seen;
  for (std::size_t t = i; t <= j; ++t) {
    const auto& fs = assignment ? assignment->sets.at(path[t]) : trained.agent(path[t]).features;
    for (std::size_t f : fs) {
      if (f >= seen.size()) seen.resize(f + 1, 0);
      seen[f] = 1;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < seen.size(); ++f)
    if (seen[f]) out.push_back(f);
  return out;
}

inline double max_second_moment(const MomentOracle& oracle, const std::vector<std::size_t>& features,
                                 bool include_constant) {
  double m = include_constant ? oracle.inner(oracle.constant(), oracle.constant()) : 0.0;
  for (std::size_t f : features) {
    const Vector x = oracle.feature(f);
    m = std::max(m, oracle.inner(x, x));
  }
  return m;
}

}  // namespace detail

/// MSE(y_{p_j}) <= MSE(g) + 2 A_g M_X sqrt(N_path * eps_path), for a comparator
/// g supported on the features seen by path positions i..j (0-based,
/// inclusive).
inline BoundReport check_path_theorem(const TrainedDag& trained, const Path& path, std::size_t i, std::size_t j,
                                      const LinearComparator& g, const MomentOracle& oracle) {
  if (i > j || j >= path.size()) throw InvalidArgument("subsequence must satisfy i <= j < path length");
  const bool has_constant = trained.config.with_constant;
  const auto seen = detail::union_features(nullptr, trained, path, i, j);
  for (Eigen::Index l = 0; l < g.alpha.size(); ++l) {
    if (g.alpha(l) == 0.0) continue;
    if (!std::binary_search(seen.begin(), seen.end(), static_cast<std::size_t>(l)))
      throw InvalidArgument("comparator uses feature " + std::to_string(l) + " not seen on the subsequence");
  }
  if (g.constant != 0.0 && !has_constant) throw InvalidArgument("comparator uses the constant but agents do not");

  BoundReport r;
  r.name = "path_theorem";
  const double a_g = g.l1_norm();
  const double m_x = std::sqrt(detail::max_second_moment(oracle, seen, has_constant));
  const double n_path = static_cast<double>(j - i + 1);
  const double eps = std::max(0.0, detail::predecessor_mse(trained, path, i, oracle) - trained.agent(path[j]).train_mse);
  const double mse_g = oracle.mse(g.embed(oracle));
  r.lhs = trained.agent(path[j]).train_mse;
  r.rhs = mse_g + 2.0 * a_g * m_x * std::sqrt(n_path * eps);
  r.parameters = {{"A_g", a_g}, {"M_X", m_x}, {"N_path", n_path}, {"eps_path", eps}, {"mse_g", mse_g},
                  {"i", static_cast<double>(i)}, {"j", static_cast<double>(j)}};
  r.finalize();
  return r;
}

/// Final path agent within eta of g*, where
/// eta = 2 A M_X sqrt(M) sqrt(2 M MSE(y_0) / D), given every length-M window of
/// the path covers all features. y_0 is the zero predictor.
inline BoundReport check_depth_coverage_corollary(const TrainedDag& trained, const Path& path,
                                                  const FeatureAssignment& assignment, std::size_t window,
                                                  const LinearComparator& g, const MomentOracle& oracle) {
  BoundReport r;
  r.name = "depth_coverage_corollary";
  const double depth = static_cast<double>(path.size());
  r.parameters = {{"M", static_cast<double>(window)}, {"D", depth}};
  if (window == 0 || window > path.size()) {
    r.precondition_met = false;
    r.note = "window longer than path";
    r.finalize();
    return r;
  }
  const auto coverage = coverage_window_check(assignment, path, window);
  if (!coverage.covered) {
    r.precondition_met = false;
    r.note = "window starting at path position " + std::to_string(*coverage.first_failing_window) + " misses " +
             std::to_string(coverage.missing_features.size()) + " feature(s)";
    r.finalize();
    return r;
  }
  const bool has_constant = trained.config.with_constant;
  if (g.constant != 0.0 && !has_constant) throw InvalidArgument("comparator uses the constant but agents do not");
  std::vector<std::size_t> all(assignment.d);
  for (std::size_t f = 0; f < assignment.d; ++f) all[f] = f;
  const double a_g = g.l1_norm();
  const double m_x = std::sqrt(detail::max_second_moment(oracle, all, has_constant));
  const double mse0 = oracle.label_second_moment();
  const double m = static_cast<double>(window);
  const double eta = 2.0 * a_g * m_x * std::sqrt(m) * std::sqrt(2.0 * m * mse0 / depth);
  const double mse_g = oracle.mse(g.embed(oracle));
  r.lhs = trained.agent(path.back()).train_mse;
  r.rhs = mse_g + eta;
  r.parameters.insert({{"A_g", a_g}, {"M_X", m_x}, {"mse_y0", mse0}, {"eta", eta}, {"mse_g", mse_g}});
  r.finalize();
  return r;
}

// Norm diagnostics -----------------------------------------------------

struct NormDiagnostics {
  std::vector<double> l1;  // per agent, topological order
  std::vector<double> l2;
  double lambda_min = 0.0;
  double y_max = 0.0;
  std::size_t dimension = 0;  // length of the coefficient vectors compared
  double bound = 0.0;         // sqrt(2 dimension) * y_max / sqrt(lambda_min)
  bool vacuous = false;
  bool satisfied = true;
  std::string note = "empirical lambda_min of the training second-moment matrix used directly";
};

/// L1/L2 of every linear agent's flattened coefficients against
/// sqrt(2d) Y_max / sqrt(lambda_min), with the empirical lambda_min.
inline NormDiagnostics empirical_norm_diagnostics(const TrainedDag& trained, const SampleOracle& sample) {
  NormDiagnostics out;
  const bool has_constant = trained.config.with_constant;
  const auto d = static_cast<Eigen::Index>(sample.feature_count());
  std::vector<Vector> vars;
  for (Eigen::Index i = 0; i < d; ++i) vars.push_back(sample.feature(static_cast<std::size_t>(i)));
  if (has_constant) vars.push_back(sample.constant());
  out.dimension = vars.size();
  out.lambda_min = min_eigenvalue(sample.gram(vars));
  out.y_max = sample.labels().cwiseAbs().maxCoeff();
  out.vacuous = !(out.lambda_min > 0.0);
  out.bound = out.vacuous ? std::numeric_limits<double>::infinity()
                          : std::sqrt(2.0 * static_cast<double>(out.dimension)) * out.y_max / std::sqrt(out.lambda_min);
  for (const auto& a : trained.agents) {
    const auto* lp = std::get_if<LinearPredictor>(&a.predictor);
    if (lp == nullptr || lp->flattened_beta.size() == 0) throw InvalidArgument("norm diagnostics need linear agents");
    const Vector beta = has_constant ? Vector(lp->flattened_beta) : Vector(lp->flattened_beta.head(d));
    out.l1.push_back(beta.cwiseAbs().sum());
    out.l2.push_back(beta.norm());
    if (!out.vacuous && out.l1.back() > out.bound) out.satisfied = false;
  }
  return out;
}

// Output ---------------------------------------------------------------

inline nlohmann::json to_json(const IdentityReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back({{"label", row.label}, {"violation", row.violation}});
  return {{"check", r.name}, {"max_violation", r.max_violation}, {"threshold", r.threshold}, {"pass", r.pass}, {"rows", rows}};
}

inline nlohmann::json to_json(const BoundReport& r) {
  return {{"bound", r.name}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"slack", r.slack}, {"tolerance", r.tolerance},
          {"precondition_met", r.precondition_met}, {"note", r.note}, {"pass", r.pass}, {"parameters", r.parameters}};
}

inline nlohmann::json to_json(const NormDiagnostics& n) {
  return {{"l1", n.l1}, {"l2", n.l2}, {"lambda_min", n.lambda_min}, {"y_max", n.y_max}, {"dimension", n.dimension},
          {"bound", n.vacuous ? nlohmann::json("vacuous") : nlohmann::json(n.bound)}, {"satisfied", n.satisfied},
          {"note", n.note}};
}

inline void print_row(std::ostream& os, const IdentityReport& r) {
  os << std::left << std::setw(28) << r.name << std::setw(6) << (r.pass ? "PASS" : "FAIL") << " max_violation="
     << format_real(r.max_violation) << " threshold=" << format_real(r.threshold) << " (" << r.rows.size() << " checks)\n";
}

inline void print_row(std::ostream& os, const BoundReport& r) {
  os << std::left << std::setw(28) << r.name << std::setw(6) << (r.pass ? "PASS" : "FAIL") << " lhs=" << format_real(r.lhs)
     << " rhs=" << format_real(r.rhs) << " slack=" << format_real(r.slack);
  if (!r.precondition_met) os << " precondition: " << r.note;
  os << '\n';
}

}  // namespace dagagg
