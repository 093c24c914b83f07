#include <gtest/gtest.h>

#include <set>

#include "dagagg/dataset.hpp"
#include "dagagg/oracle.hpp"
#include "oracles.hpp"

using namespace dagagg;

namespace {

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(DAGAGG_TEST_DATA_DIR) / name; }

Vector combo(const std::vector<std::pair<double, Vector>>& terms) {
  Vector out = Vector::Zero(terms.front().second.size());
  for (const auto& [a, v] : terms) out += a * v;
  return out;
}

}  // namespace

TEST(LowerBoundOracle, Moments) {
  for (std::size_t k : {2u, 3u, 7u}) {
    const auto o = lower_bound_oracle(k);
    ASSERT_EQ(o.feature_count(), k);
    const Vector y = o.label();
    EXPECT_DOUBLE_EQ(o.inner(y, y), 1.0);
    for (std::size_t i = 0; i < k; ++i) {
      const Vector xi = o.feature(i);
      EXPECT_DOUBLE_EQ(o.inner(xi, xi), i == 0 ? 1.0 : 2.0);
      EXPECT_DOUBLE_EQ(o.inner(xi, y), i + 1 == k ? 1.0 : 0.0);
      if (i + 1 < k) EXPECT_DOUBLE_EQ(o.inner(xi, o.feature(i + 1)), -1.0);
      for (std::size_t j = i + 2; j < k; ++j) EXPECT_DOUBLE_EQ(o.inner(xi, o.feature(j)), 0.0);
    }
  }
  EXPECT_THROW(lower_bound_oracle(1), InvalidArgument);
}

TEST(LowerBoundOracle, AllFeaturesPredictPerfectly) {
  const auto o = lower_bound_oracle(8);
  std::vector<Vector> xs;
  for (std::size_t i = 0; i < 8; ++i) xs.push_back(o.feature(i));
  const auto s = solve_least_squares(o.gram(xs), o.cross(xs, o.label()), o.label_second_moment());
  EXPECT_NEAR(s.achieved_mse, 0.0, kSolverTolPopulation);
  for (Eigen::Index i = 0; i < 8; ++i) EXPECT_NEAR(s.weights(i), 1.0, 1e-8);
}

TEST(IntroOracle, SingleAndJointRegressions) {
  const auto o = intro_counterexample_oracle();
  auto fit = [&](std::vector<std::size_t> idx) {
    std::vector<Vector> xs;
    for (auto i : idx) xs.push_back(o.feature(i));
    return solve_least_squares(o.gram(xs), o.cross(xs, o.label()), o.label_second_moment());
  };
  auto s = fit({0});
  EXPECT_NEAR(s.weights(0), 0.0, 1e-12);
  EXPECT_NEAR(s.achieved_mse, 1.0, 1e-12);
  s = fit({1});
  EXPECT_NEAR(s.weights(0), 0.5, 1e-12);
  EXPECT_NEAR(s.achieved_mse, 0.5, 1e-12);
  s = fit({0, 1});
  EXPECT_NEAR(s.weights(0), 1.0, 1e-12);
  EXPECT_NEAR(s.weights(1), 1.0, 1e-12);
  EXPECT_NEAR(s.achieved_mse, 0.0, 1e-12);
}

TEST(Oracles, BilinearAndSymmetric) {
  const auto lat = lower_bound_oracle(5);
  const auto smp = sample_from_latent(lat, 500, 3);
  const auto gram = GramOracle::from_samples(smp);
  const std::vector<const MomentOracle*> all{&lat, &smp, &gram};
  for (const auto* o : all) {
    const Vector u = o->feature(1), v = o->feature(2), w = o->label(), c = o->constant();
    const double a = 0.7, b = -2.3;
    const Vector mix = combo({{a, u}, {b, v}});
    EXPECT_NEAR(o->inner(mix, w), a * o->inner(u, w) + b * o->inner(v, w), 1e-12) << o->kind();
    EXPECT_NEAR(o->inner(u, c), o->inner(c, u), 1e-12) << o->kind();
    EXPECT_GE(o->inner(mix, mix), 0.0);
    EXPECT_NEAR(o->inner(c, c), 1.0, 1e-12) << o->kind();
  }
}

TEST(Oracles, GramMatchesSample) {
  const auto smp = sample_from_latent(lower_bound_oracle(4), 300, 9);
  const auto g = GramOracle::from_samples(smp);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(g.inner(g.feature(i), g.label()), smp.inner(smp.feature(i), smp.label()), 1e-12);
    EXPECT_NEAR(g.inner(g.feature(i), g.constant()), smp.inner(smp.feature(i), smp.constant()), 1e-12);
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(g.inner(g.feature(i), g.feature(j)), smp.inner(smp.feature(i), smp.feature(j)), 1e-12);
  }
  EXPECT_EQ(g.sample_backing(), nullptr);
  EXPECT_EQ(smp.sample_backing(), &smp);
}

TEST(SampleFromLatent, ConvergesAtCltRate) {
  const std::size_t k = 10, m = 100000;
  const auto lat = lower_bound_oracle(k);
  const auto smp = sample_from_latent(lat, m, 42);
  const double tol = 5.0 / std::sqrt(static_cast<double>(m));
  std::vector<std::pair<Vector, Vector>> vars;
  for (std::size_t i = 0; i < k; ++i) vars.emplace_back(lat.feature(i), smp.feature(i));
  vars.emplace_back(lat.label(), smp.label());
  // Entries involving a variance-2 feature have sd up to ~2 per draw; scale the
  // tolerance by the product of the standard deviations.
  for (std::size_t a = 0; a < vars.size(); ++a)
    for (std::size_t b = a; b < vars.size(); ++b) {
      const double sd = std::sqrt(lat.inner(vars[a].first, vars[a].first) * lat.inner(vars[b].first, vars[b].first));
      EXPECT_NEAR(smp.inner(vars[a].second, vars[b].second), lat.inner(vars[a].first, vars[b].first),
                  tol * std::max(1.0, sd))
          << a << "," << b;
    }
  EXPECT_NEAR(smp.inner(smp.feature(0), smp.feature(0)), 1.0, tol);
}

TEST(SampleFromLatent, SeedDeterminism) {
  const auto lat = lower_bound_oracle(3);
  const auto a = sample_from_latent(lat, 50, 5), b = sample_from_latent(lat, 50, 5), c = sample_from_latent(lat, 50, 6);
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_NE(a.features(), c.features());
  // Label is exactly the feature sum row by row.
  EXPECT_NEAR((a.features().rowwise().sum() - a.labels()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_THROW(sample_from_latent(lat, 0, 1), InvalidArgument);
}

TEST(Csv, ParsesFixtureExactly) {
  const auto ds = load_csv(fixture("small.csv"), ';', "y", false);
  ASSERT_EQ(ds.rows(), 3u);
  ASSERT_EQ(ds.feature_count(), 2u);
  Matrix x(3, 2);
  x << 1, 2, 4, 5, 7.5, -8;
  EXPECT_EQ(ds.features, x);
  EXPECT_EQ(ds.target, Vector::LinSpaced(3, 3, 9));
  EXPECT_EQ(ds.column_names, (std::vector<std::string>{"a", "b"}));
}

TEST(Csv, TargetCanBeAnyColumn) {
  const auto ds = load_csv(fixture("small.csv"), ';', "a", false);
  EXPECT_EQ(ds.column_names, (std::vector<std::string>{"b", "y"}));
  EXPECT_DOUBLE_EQ(ds.target(2), 7.5);
}

TEST(Csv, Errors) {
  try {
    load_csv(fixture("bad_cell.csv"), ',', "y", false);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_EQ(e.column(), 2u);
  }
  try {
    load_csv(fixture("short_row.csv"), ',', "y", false);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
  EXPECT_THROW(load_csv(fixture("small.csv"), ';', "quality", false), MissingTarget);
  // Wrong delimiter: the whole header is one column named "a;b;y".
  EXPECT_THROW(load_csv(fixture("small.csv"), ',', "y", false), MissingTarget);
  EXPECT_THROW(parse_csv("", ',', "y", false), ParseError);
  EXPECT_THROW(parse_csv("a,y\n", ',', "y", false), ParseError);
}

TEST(Csv, StandardizationDropsConstantColumns) {
  const auto ds = load_csv(fixture("constant_col.csv"), ',', "y", true);
  ASSERT_TRUE(ds.standardization);
  EXPECT_EQ(ds.standardization->kept_columns, (std::vector<std::size_t>{0, 2}));
  const Matrix z = ds.standardization->apply(ds.features);
  ASSERT_EQ(z.cols(), 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-12);
    EXPECT_NEAR(z.col(c).squaredNorm() / 4.0, 1.0, 1e-12);
  }
}

TEST(Split, SizesDisjointAndTrainStandardized) {
  const auto ds = load_dataset(load_manifest(std::filesystem::path(DAGAGG_DATA_DIR) / "wine.json"));
  EXPECT_EQ(ds.feature_count(), 11u);
  EXPECT_EQ(ds.rows(), 1599u);
  const auto s = split(ds, 0.25, 7);
  EXPECT_EQ(s.test_rows.size(), 399u);  // floor(1599 * 0.25)
  EXPECT_EQ(s.train_rows.size() + s.test_rows.size(), ds.rows());
  std::set<std::size_t> all(s.train_rows.begin(), s.train_rows.end());
  for (auto r : s.test_rows) EXPECT_TRUE(all.insert(r).second);
  EXPECT_EQ(all.size(), ds.rows());
  const Matrix& x = s.train.features();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    EXPECT_NEAR(x.col(c).mean(), 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt((x.col(c).array() - x.col(c).mean()).square().mean()), 1.0, 1e-9);
  }
  // Test rows use the train parameters, so they are not exactly centred.
  EXPECT_GT(s.test.features().col(0).mean() * s.test.features().col(0).mean(), 0.0);
  // Labels are carried through untouched.
  EXPECT_DOUBLE_EQ(s.train.labels()(0), ds.target(static_cast<Eigen::Index>(s.train_rows[0])));
}

TEST(Split, SeedDeterminismAndErrors) {
  const auto ds = load_csv(fixture("constant_col.csv"), ',', "y", false);
  const auto a = split(ds, 0.5, 1), b = split(ds, 0.5, 1);
  EXPECT_EQ(a.test_rows, b.test_rows);
  EXPECT_EQ(a.test_rows.size(), 2u);
  EXPECT_THROW(split(ds, 0.0, 1), InvalidArgument);
  EXPECT_THROW(split(ds, 1.0, 1), InvalidArgument);
  EXPECT_THROW(split(ds, 0.1, 1), InvalidArgument);  // floor(0.4) = 0 test rows
}

TEST(Split, TrainOlsMatchesRowOracle) {
  const auto full = load_csv(fixture("small.csv"), ';', "y", false);
  // Tiny well-posed regression: y on (a, b, 1) over the three fixture rows.
  oracle::Mat rows;
  oracle::Vec y;
  for (Eigen::Index r = 0; r < 3; ++r) {
    rows.push_back({full.features(r, 0), full.features(r, 1), 1.0});
    y.push_back(full.target(r));
  }
  const auto [w, mse] = oracle::ols_rows(rows, y);
  SampleOracle so(full.features, full.target);
  std::vector<Vector> xs{so.feature(0), so.feature(1), so.constant()};
  const auto s = solve_least_squares(so.gram(xs), so.cross(xs, so.label()), so.label_second_moment());
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s.weights(i), w[static_cast<std::size_t>(i)], 1e-8);
  EXPECT_NEAR(s.achieved_mse, mse, 1e-8);
}
