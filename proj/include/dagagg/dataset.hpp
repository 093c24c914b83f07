#pragma once

// Tabular regression data: CSV ingestion, train/test splitting, standardization.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dagagg/error.hpp"
#include "dagagg/numerics.hpp"
#include "dagagg/oracle.hpp"
#include "dagagg/rng.hpp"

namespace dagagg {

/// Per-column affine map fit on training rows. Columns that are constant on
/// the fitting rows are dropped.
struct Standardization {
  std::vector<std::size_t> kept_columns;
  Vector mean;
  Vector stddev;  // population (1/n) standard deviation

  static Standardization fit(const Matrix& x) {
    Standardization s;
    const double n = static_cast<double>(x.rows());
    std::vector<double> means, sds;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double mu = x.col(c).mean();
      const double var = (x.col(c).array() - mu).square().sum() / n;
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) continue;
      s.kept_columns.push_back(static_cast<std::size_t>(c));
      means.push_back(mu);
      sds.push_back(sd);
    }
    s.mean = Eigen::Map<Vector>(means.data(), static_cast<Eigen::Index>(means.size()));
    s.stddev = Eigen::Map<Vector>(sds.data(), static_cast<Eigen::Index>(sds.size()));
    return s;
  }

  Matrix apply(const Matrix& x) const {
    Matrix out(x.rows(), static_cast<Eigen::Index>(kept_columns.size()));
    for (std::size_t j = 0; j < kept_columns.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      out.col(jj) = (x.col(static_cast<Eigen::Index>(kept_columns[j])).array() - mean(jj)) / stddev(jj);
    }
    return out;
  }
};

struct TabularDataset {
  Matrix features;  // raw values, rows x d
  Vector target;
  std::vector<std::string> column_names;  // feature columns only
  std::string target_name;
  bool standardize = false;
  std::optional<Standardization> standardization;  // fit on all rows when standardize is set
  std::uint64_t checksum = 0;                      // FNV-1a of the source bytes

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t feature_count() const { return static_cast<std::size_t>(features.cols()); }
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == delim && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

inline std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses a headered CSV. Rows and columns in errors are 1-based, with the
/// header as row 1.
inline TabularDataset parse_csv(const std::string& text, char delimiter, const std::string& target_column,
                                bool standardize) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file, header row required", 1, 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_line(line, delimiter);
  const auto target_it = std::find(header.begin(), header.end(), target_column);
  if (target_it == header.end()) throw MissingTarget("target column '" + target_column + "' not in header");
  const auto target_idx = static_cast<std::size_t>(target_it - header.begin());

  std::vector<double> values;
  std::vector<double> targets;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_line(line, delimiter);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()), row,
                       std::min(cells.size(), header.size()) + 1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = detail::parse_real(cells[c]);
      if (!v) throw ParseError("cannot parse '" + cells[c] + "' as a real", row, c + 1);
      if (c == target_idx) {
        targets.push_back(*v);
      } else {
        values.push_back(*v);
      }
    }
  }
  if (targets.empty()) throw ParseError("no data rows", 2, 1);

  TabularDataset ds;
  const auto n = static_cast<Eigen::Index>(targets.size());
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  ds.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, d);
  ds.target = Eigen::Map<Vector>(targets.data(), n);
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target_idx) ds.column_names.push_back(header[c]);
  ds.target_name = target_column;
  ds.standardize = standardize;
  if (standardize) ds.standardization = Standardization::fit(ds.features);
  ds.checksum = fnv1a64(text);
  return ds;
}

inline TabularDataset load_csv(const std::filesystem::path& path, char delimiter, const std::string& target_column,
                               bool standardize) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_csv(buf.str(), delimiter, target_column, standardize);
}

struct DatasetManifest {
  std::filesystem::path path;  // resolved against the manifest's directory
  char delimiter = ',';
  std::string target;
  bool standardize = true;
};

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  std::filesystem::path p = j.at("path").get<std::string>();
  m.path = p.is_absolute() ? p : base_dir / p;
  const auto delim = j.at("delimiter").get<std::string>();
  if (delim.size() != 1) throw ConfigError("delimiter must be a single character");
  m.delimiter = delim[0];
  m.target = j.at("target").get<std::string>();
  m.standardize = j.value("standardize", true);
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw ConfigError("cannot open dataset manifest " + manifest_path.string());
  return manifest_from_json(nlohmann::json::parse(f), manifest_path.parent_path());
}

inline TabularDataset load_dataset(const DatasetManifest& m) {
  return load_csv(m.path, m.delimiter, m.target, m.standardize);
}

struct TrainTestSplit {
  SampleOracle train;
  SampleOracle test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::optional<Standardization> standardization;  // fit on train rows only
};

/// Seeded shuffle, floor(n * test_fraction) rows to test. Standardization (if
/// the dataset asks for it) is refit on the training rows and applied to both.
inline TrainTestSplit split(const TabularDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test fraction must lie in (0, 1)");
  const std::size_t n = ds.rows();
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n) throw InvalidArgument("split leaves an empty part");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, Stream::split));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  auto take = [&](const std::vector<std::size_t>& rows, Matrix& x, Vector& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
    y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = ds.features.row(static_cast<Eigen::Index>(rows[r]));
      y(static_cast<Eigen::Index>(r)) = ds.target(static_cast<Eigen::Index>(rows[r]));
    }
  };
  Matrix x_train, x_test;
  Vector y_train, y_test;
  take(train_rows, x_train, y_train);
  take(test_rows, x_test, y_test);

  std::optional<Standardization> st;
  if (ds.standardize) {
    st = Standardization::fit(x_train);
    x_train = st->apply(x_train);
    x_test = st->apply(x_test);
  }
  return TrainTestSplit{SampleOracle(std::move(x_train), std::move(y_train)),
                        SampleOracle(std::move(x_test), std::move(y_test)), std::move(train_rows),
                        std::move(test_rows), std::move(st)};
}

}  // namespace dagagg
