#pragma once

// Moment oracles.
//
// Every tracked variable (feature, label, constant, trained predictor) is an
// element of a finite-dimensional inner-product space owned by the oracle:
//
//   LatentLinearOracle  coefficients over independent unit-variance latents
//                       plus a constant slot; E[u v] = u . v
//   SampleOracle        one value per stored row; E[u v] = u . v / m
//   GramOracle          coefficients over (features, constant, label) with the
//                       empirical second-moment matrix as the metric
//
// Predictors trained against an oracle are linear combinations of these
// embeddings, so bilinearity of the moments holds by construction.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dagagg/error.hpp"
#include "dagagg/numerics.hpp"
#include "dagagg/rng.hpp"

namespace dagagg {

class SampleOracle;

class MomentOracle {
 public:
  virtual ~MomentOracle() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t feature_count() const = 0;
  virtual std::size_t embedding_dimension() const = 0;
  virtual Vector feature(std::size_t i) const = 0;
  virtual Vector label() const = 0;
  virtual Vector constant() const = 0;
  virtual double inner(const Vector& u, const Vector& v) const = 0;

  /// Non-null when variables are stored row-wise and arbitrary functions of
  /// the features (stumps) can be evaluated.
  virtual const SampleOracle* sample_backing() const { return nullptr; }

  double label_second_moment() const {
    const Vector y = label();
    return inner(y, y);
  }

  double mse(const Vector& prediction) const {
    const Vector r = label() - prediction;
    return inner(r, r);
  }

  Matrix gram(const std::vector<Vector>& vars) const {
    const auto n = static_cast<Eigen::Index>(vars.size());
    Matrix g(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = a; b < n; ++b) g(a, b) = g(b, a) = inner(vars[a], vars[b]);
    return g;
  }

  Vector cross(const std::vector<Vector>& vars, const Vector& target) const {
    Vector c(static_cast<Eigen::Index>(vars.size()));
    for (std::size_t a = 0; a < vars.size(); ++a) c(static_cast<Eigen::Index>(a)) = inner(vars[a], target);
    return c;
  }

  /// Second moments of the raw features, E[x x^T].
  Matrix feature_second_moments() const {
    std::vector<Vector> xs;
    for (std::size_t i = 0; i < feature_count(); ++i) xs.push_back(feature(i));
    return gram(xs);
  }
};

/// Features and label are fixed linear maps of independent standard latents.
class LatentLinearOracle final : public MomentOracle {
 public:
  LatentLinearOracle(std::size_t latent_dim, std::vector<Vector> features, Vector label,
                     std::vector<std::string> feature_names = {})
      : latent_dim_(latent_dim), features_(std::move(features)), label_(std::move(label)),
        names_(std::move(feature_names)) {
    for (const auto& f : features_)
      if (static_cast<std::size_t>(f.size()) != latent_dim_) throw DimensionMismatch("feature coefficient length != latent_dim");
    if (static_cast<std::size_t>(label_.size()) != latent_dim_) throw DimensionMismatch("label coefficient length != latent_dim");
  }

  std::string kind() const override { return "latent"; }
  std::size_t feature_count() const override { return features_.size(); }
  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t embedding_dimension() const override { return latent_dim_ + 1; }

  Vector feature(std::size_t i) const override { return pad(features_.at(i)); }
  Vector label() const override { return pad(label_); }
  Vector constant() const override {
    Vector c = Vector::Zero(static_cast<Eigen::Index>(latent_dim_ + 1));
    c(static_cast<Eigen::Index>(latent_dim_)) = 1.0;
    return c;
  }
  double inner(const Vector& u, const Vector& v) const override { return u.dot(v); }

  /// Latent coefficients (without the constant slot).
  const Vector& feature_latent(std::size_t i) const { return features_.at(i); }
  const Vector& label_latent() const { return label_; }
  const std::vector<std::string>& feature_names() const { return names_; }

 private:
  Vector pad(const Vector& latent) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(latent_dim_ + 1));
    out.head(static_cast<Eigen::Index>(latent_dim_)) = latent;
    return out;
  }

  std::size_t latent_dim_;
  std::vector<Vector> features_;
  Vector label_;
  std::vector<std::string> names_;
};

/// Empirical moments over stored rows.
class SampleOracle final : public MomentOracle {
 public:
  SampleOracle(Matrix features, Vector labels) : x_(std::move(features)), y_(std::move(labels)) {
    if (x_.rows() != y_.size()) throw DimensionMismatch("feature rows != label count");
    if (x_.rows() == 0) throw InvalidArgument("sample oracle needs at least one row");
  }

  std::string kind() const override { return "sample"; }
  std::size_t feature_count() const override { return static_cast<std::size_t>(x_.cols()); }
  std::size_t embedding_dimension() const override { return rows(); }
  std::size_t rows() const { return static_cast<std::size_t>(x_.rows()); }

  Vector feature(std::size_t i) const override { return x_.col(static_cast<Eigen::Index>(i)); }
  Vector label() const override { return y_; }
  Vector constant() const override { return Vector::Ones(x_.rows()); }
  double inner(const Vector& u, const Vector& v) const override {
    return u.dot(v) / static_cast<double>(x_.rows());
  }
  const SampleOracle* sample_backing() const override { return this; }

  const Matrix& features() const { return x_; }
  const Vector& labels() const { return y_; }

 private:
  Matrix x_;
  Vector y_;
};

/// Embeddings over (x_1..x_d, 1, y); the metric is the empirical second-moment
/// matrix of those d + 2 variables. Linear learners on large samples use this
/// form: each moment costs O(d^2) instead of O(m).
class GramOracle final : public MomentOracle {
 public:
  explicit GramOracle(Matrix second_moments) : sigma_(std::move(second_moments)) {
    if (sigma_.rows() != sigma_.cols() || sigma_.rows() < 2) throw DimensionMismatch("GramOracle needs a (d+2)x(d+2) matrix");
  }

  static GramOracle from_samples(const SampleOracle& s) {
    const auto m = static_cast<Eigen::Index>(s.rows());
    const auto d = static_cast<Eigen::Index>(s.feature_count());
    Matrix a(m, d + 2);
    a.leftCols(d) = s.features();
    a.col(d).setOnes();
    a.col(d + 1) = s.labels();
    Matrix sigma = (a.transpose() * a) / static_cast<double>(m);
    return GramOracle(0.5 * (sigma + sigma.transpose()));
  }

  std::string kind() const override { return "gram"; }
  std::size_t feature_count() const override { return static_cast<std::size_t>(sigma_.rows() - 2); }
  std::size_t embedding_dimension() const override { return static_cast<std::size_t>(sigma_.rows()); }
  Vector feature(std::size_t i) const override { return unit(static_cast<Eigen::Index>(i)); }
  Vector constant() const override { return unit(sigma_.rows() - 2); }
  Vector label() const override { return unit(sigma_.rows() - 1); }
  double inner(const Vector& u, const Vector& v) const override { return u.dot(sigma_ * v); }

  const Matrix& second_moments() const { return sigma_; }

 private:
  Vector unit(Eigen::Index i) const {
    if (i < 0 || i >= sigma_.rows()) throw InvalidArgument("variable index out of range");
    Vector e = Vector::Zero(sigma_.rows());
    e(i) = 1.0;
    return e;
  }

  Matrix sigma_;
};

/// z_1..z_k independent standard normals; x_1 = z_1, x_i = z_i - z_{i-1},
/// Y = z_k. Y is exactly the sum of all features, yet x_1..x_{k-1} are each
/// independent of Y.
inline LatentLinearOracle lower_bound_oracle(std::size_t k) {
  if (k < 2) throw InvalidArgument("lower_bound_oracle needs k >= 2");
  const auto kk = static_cast<Eigen::Index>(k);
  std::vector<Vector> features;
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < kk; ++i) {
    Vector f = Vector::Zero(kk);
    f(i) = 1.0;
    if (i > 0) f(i - 1) = -1.0;
    features.push_back(f);
    names.push_back("x" + std::to_string(i + 1));
  }
  Vector y = Vector::Zero(kk);
  y(kk - 1) = 1.0;
  return LatentLinearOracle(k, std::move(features), std::move(y), std::move(names));
}

/// Latents (x_1, y) independent standard normals and x_2 = y - x_1. Neither
/// feature alone predicts y well, both together predict it perfectly.
inline LatentLinearOracle intro_counterexample_oracle() {
  Vector x1(2), x2(2), y(2);
  x1 << 1.0, 0.0;
  y << 0.0, 1.0;
  x2 = y - x1;
  return LatentLinearOracle(2, {x1, x2}, y, {"x1", "x2"});
}

/// m i.i.d. draws of the latent vector, pushed through the oracle's maps.
inline SampleOracle sample_from_latent(const LatentLinearOracle& oracle, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw InvalidArgument("sample size must be positive");
  const auto k = static_cast<Eigen::Index>(oracle.latent_dim());
  const auto d = static_cast<Eigen::Index>(oracle.feature_count());
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(static_cast<Eigen::Index>(m), k);
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < k; ++c) z(r, c) = normal(rng);
  Matrix map(k, d);
  for (Eigen::Index i = 0; i < d; ++i) map.col(i) = oracle.feature_latent(static_cast<std::size_t>(i));
  Matrix x = z * map;
  Vector y = z * oracle.label_latent();
  return SampleOracle(std::move(x), std::move(y));
}

}  // namespace dagagg
