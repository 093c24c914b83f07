#pragma once

// Exact population engine for the lower-bound distribution.
//
// Every variable is a coefficient vector over the independent latents
// z_1..z_k, so E[u v] is a dot product and all MSEs are exact up to floating
// point. Latent and feature indices are 1-based here to match x_i and z_i.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dagagg/error.hpp"
#include "dagagg/format.hpp"
#include "dagagg/numerics.hpp"

namespace dagagg {

using ZVector = Vector;

inline constexpr double kSupportThreshold = 1e-10;

namespace detail {

inline ZVector z_feature(std::size_t k, std::size_t i) {
  ZVector v = ZVector::Zero(static_cast<Eigen::Index>(k));
  v(static_cast<Eigen::Index>(i - 1)) = 1.0;
  if (i >= 2) v(static_cast<Eigen::Index>(i - 2)) = -1.0;
  return v;
}

inline ZVector z_target(std::size_t k) {
  ZVector v = ZVector::Zero(static_cast<Eigen::Index>(k));
  v(static_cast<Eigen::Index>(k - 1)) = 1.0;
  return v;
}

/// Projection of Y = z_k onto span(inputs), all in the z-basis.
inline ZVector project_target(std::size_t k, const std::vector<ZVector>& inputs) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const ZVector y = z_target(k);
  Matrix gram(n, n);
  Vector cross(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    cross(a) = inputs[static_cast<std::size_t>(a)].dot(y);
    for (Eigen::Index b = a; b < n; ++b) gram(a, b) = gram(b, a) = inputs[static_cast<std::size_t>(a)].dot(inputs[static_cast<std::size_t>(b)]);
  }
  const auto sol = solve_least_squares(gram, cross, 1.0);
  ZVector out = ZVector::Zero(static_cast<Eigen::Index>(k));
  for (Eigen::Index a = 0; a < n; ++a) out += sol.weights(a) * inputs[static_cast<std::size_t>(a)];
  return out;
}

inline double z_mse(std::size_t k, const ZVector& prediction) { return (z_target(k) - prediction).squaredNorm(); }

}  // namespace detail

struct PassTrace {
  struct Step {
    std::size_t pass = 0;      // 1-based
    std::size_t index = 0;     // 1-based position within the pass = feature observed
    std::size_t position = 0;  // 1-based position on the path
    ZVector predictor;
    double mse = 0.0;
  };

  std::size_t k = 0;
  std::size_t passes = 0;
  std::vector<Step> steps;

  /// Passes beyond k - 1 fall outside the regime covered by the 1/(p+1) bound.
  bool beyond_theorem_regime() const { return passes > k - 1; }

  const Step& end_of_pass(std::size_t p) const {
    if (p == 0 || p > passes) throw InvalidArgument("pass index out of range");
    return steps.at(p * k - 1);
  }
  double end_of_pass_mse(std::size_t p) const { return p == 0 ? 1.0 : end_of_pass(p).mse; }
  ZVector end_of_pass_predictor(std::size_t p) const {
    return p == 0 ? ZVector::Zero(static_cast<Eigen::Index>(k)) : end_of_pass(p).predictor;
  }
};

/// Path of k * passes agents; agent j (1-based) observes x_{((j-1) mod k) + 1}
/// and the prediction of agent j - 1.
inline PassTrace run_cyclic_path(std::size_t k, std::size_t passes) {
  if (k < 2) throw InvalidArgument("run_cyclic_path needs k >= 2");
  if (passes == 0) throw InvalidArgument("run_cyclic_path needs passes >= 1");
  PassTrace trace;
  trace.k = k;
  trace.passes = passes;
  ZVector previous = ZVector::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t p = 1; p <= passes; ++p) {
    for (std::size_t i = 1; i <= k; ++i) {
      const ZVector next = detail::project_target(k, {detail::z_feature(k, i), previous});
      trace.steps.push_back({p, i, (p - 1) * k + i, next, detail::z_mse(k, next)});
      previous = next;
    }
  }
  return trace;
}

/// Latent indices (1-based) carried by the end-of-pass-p predictor.
inline std::set<std::size_t> predictor_support(const PassTrace& trace, std::size_t p) {
  if (p > trace.passes) throw InvalidArgument("pass index out of range");
  const ZVector v = trace.end_of_pass_predictor(p);
  std::set<std::size_t> support;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > kSupportThreshold) support.insert(static_cast<std::size_t>(i) + 1);
  return support;
}

/// MSE of the population OLS of Y on x_j..x_k, solved in the z-basis.
inline double suffix_mse(std::size_t k, std::size_t j) {
  if (k < 2 || j < 2 || j > k) throw InvalidArgument("suffix_mse needs 2 <= j <= k");
  std::vector<ZVector> inputs;
  for (std::size_t i = j; i <= k; ++i) inputs.push_back(detail::z_feature(k, i));
  return detail::z_mse(k, detail::project_target(k, inputs));
}

namespace detail {

// Node p = 1..D observes x_{k-p+1}; with all_earlier, node p also receives
// every earlier prediction, otherwise only node p - 1's.
inline double depth_path_mse(std::size_t k, std::size_t depth, bool all_earlier) {
  if (depth < 1 || depth >= k) throw InvalidArgument("depth must satisfy 1 <= D < k");
  std::vector<ZVector> predictions;
  for (std::size_t p = 1; p <= depth; ++p) {
    std::vector<ZVector> inputs{z_feature(k, k - p + 1)};
    if (all_earlier) {
      inputs.insert(inputs.end(), predictions.begin(), predictions.end());
    } else if (!predictions.empty()) {
      inputs.push_back(predictions.back());
    }
    predictions.push_back(project_target(k, inputs));
  }
  return z_mse(k, predictions.back());
}

}  // namespace detail

/// Terminal MSE of the most favourable single-feature allocation on a depth-D
/// DAG: a path whose node at depth p observes x_{k-p+1} and receives all
/// earlier predictions on the path. Equals the suffix MSE 1/(D+1).
inline double best_case_depth_bound(std::size_t k, std::size_t depth) {
  return detail::depth_path_mse(k, depth, true);
}

/// Same allocation on a plain chain (one parent per node). Strictly above
/// 1/(D+1) once D >= 3: a single parent prediction plus one feature spans only
/// two directions of the suffix space.
inline double chain_depth_mse(std::size_t k, std::size_t depth) { return detail::depth_path_mse(k, depth, false); }

struct DecayFit {
  double alpha = 0.0;  // error ~ alpha / p
  double beta = 0.0;   // error ~ beta / sqrt(p)
  double sse_alpha = 0.0;
  double sse_beta = 0.0;

  std::string better_family() const { return sse_beta < sse_alpha ? "beta/sqrt(p)" : "alpha/p"; }
};

/// One-parameter least-squares fits of alpha/p and beta/sqrt(p).
inline DecayFit fit_decay_curves(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw InvalidArgument("fit_decay_curves needs at least 3 points");
  double num_a = 0, den_a = 0, num_b = 0, den_b = 0;
  for (const auto& [p, e] : points) {
    if (!(p >= 1.0) || !(e > 0.0)) throw InvalidArgument("fit_decay_curves needs p >= 1 and positive errors");
    num_a += e / p;
    den_a += 1.0 / (p * p);
    num_b += e / std::sqrt(p);
    den_b += 1.0 / p;
  }
  DecayFit fit;
  fit.alpha = num_a / den_a;
  fit.beta = num_b / den_b;
  for (const auto& [p, e] : points) {
    fit.sse_alpha += std::pow(e - fit.alpha / p, 2);
    fit.sse_beta += std::pow(e - fit.beta / std::sqrt(p), 2);
  }
  return fit;
}

inline std::vector<std::pair<double, double>> end_of_pass_points(const PassTrace& trace) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t p = 1; p <= trace.passes; ++p) pts.emplace_back(static_cast<double>(p), trace.end_of_pass_mse(p));
  return pts;
}

/// CSV with one row per agent: pass,index,position,mse,support_size.
inline void write_trace_csv(std::ostream& out, const PassTrace& trace) {
  out << "pass,index,position,mse,support_size\n";
  for (const auto& s : trace.steps) {
    std::size_t support = 0;
    for (Eigen::Index i = 0; i < s.predictor.size(); ++i)
      if (std::abs(s.predictor(i)) > kSupportThreshold) ++support;
    out << s.pass << ',' << s.index << ',' << s.position << ',' << format_real(s.mse) << ',' << support << '\n';
  }
}

}  // namespace dagagg
