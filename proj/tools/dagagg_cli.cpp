// dagagg: run DAG aggregation experiments, reproduce the lower-bound trace,
// and verify the structural invariants.
//
// Exit codes: 0 success, 1 check failure, 2 config error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dagagg/dagagg.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kConfigError = 2;

std::filesystem::path default_wine_manifest() { return std::filesystem::path(DAGAGG_DATA_DIR) / "wine.json"; }

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::size_t> trials,
            std::optional<std::string> out, std::optional<std::size_t> threads) {
  auto config = dagagg::load_config(config_path);
  if (seed) config.seed = *seed;
  if (trials) config.trials = *trials;
  if (out) config.output_dir = *out;
  if (threads) config.threads = *threads;
  dagagg::validate(config);
  const auto result = dagagg::run_experiment(config);
  const auto files = dagagg::write_outputs(result, config.output_dir);
  const auto& by_pos = result.aggregates.at("position");
  std::cout << config.name << ": " << config.trials << " trials, " << by_pos.size() << " positions\n";
  if (!by_pos.empty())
    std::cout << "final position mean test MSE " << dagagg::format_real(by_pos.back().mean_test_mse) << " (stderr "
              << dagagg::format_real(by_pos.back().test_mse_stderr) << "), baseline "
              << dagagg::format_real(result.baseline.mean_test_mse) << '\n';
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  return kOk;
}

int cmd_lowerbound(std::size_t k, std::size_t passes, std::optional<std::size_t> samples, std::uint64_t seed,
                   const std::string& out) {
  const auto r = dagagg::run_lowerbound_figure(k, passes, samples, seed);
  std::filesystem::create_directories(out);
  const auto stem = std::filesystem::path(out) / ("lowerbound_k" + std::to_string(k) + (samples ? "_sampled" : "_exact"));
  {
    std::ofstream f(stem.string() + ".csv", std::ios::binary);
    dagagg::write_lowerbound_csv(f, r);
  }
  {
    std::ofstream f(stem.string() + ".json", std::ios::binary);
    f << dagagg::to_json(r).dump(2) << '\n';
  }
  if (r.exact.beyond_theorem_regime())
    std::cout << "note: passes > k - 1 lies outside the regime of the 1/(p+1) bound\n";
  std::cout << "pass  exact_mse  1/(p+1)" << (samples ? "  train_mse  test_mse" : "") << '\n';
  for (std::size_t p = 1; p <= passes; ++p) {
    std::cout << std::setw(4) << p << "  " << dagagg::format_real(r.exact.end_of_pass_mse(p)) << "  "
              << dagagg::format_real(1.0 / static_cast<double>(p + 1));
    if (samples)
      std::cout << "  " << dagagg::format_real(r.train_mse[p * k - 1]) << "  " << dagagg::format_real(r.test_mse[p * k - 1]);
    std::cout << '\n';
  }
  if (r.fit)
    std::cout << "fit alpha/p: alpha=" << dagagg::format_real(r.fit->alpha) << " sse=" << dagagg::format_real(r.fit->sse_alpha)
              << "; beta/sqrt(p): beta=" << dagagg::format_real(r.fit->beta)
              << " sse=" << dagagg::format_real(r.fit->sse_beta) << "; better " << r.fit->better_family() << '\n';
  std::cout << "wrote " << stem.string() << ".csv and .json\n";
  return kOk;
}

int cmd_verify(const std::string& suite, std::size_t k, std::size_t wine_seeds, const std::string& manifest,
               std::optional<std::string> out) {
  dagagg::VerifyOptions opt;
  opt.k = k;
  opt.wine_seeds = wine_seeds;
  if (!manifest.empty()) opt.wine_manifest = manifest;
  const auto report = dagagg::verify_suite(suite, opt);
  dagagg::print_table(std::cout, report);
  if (out) {
    std::filesystem::create_directories(*out);
    std::ofstream f(std::filesystem::path(*out) / ("verify_" + suite + ".json"), std::ios::binary);
    f << dagagg::to_json(report).dump(2) << '\n';
  }
  if (!report.all_pass()) {
    std::cout << "failed checks:\n";
    for (const auto& l : report.lines)
      if (!l.pass) std::cout << "  " << l.suite << '/' << l.name << '\n';
    return kCheckFailure;
  }
  std::cout << "all " << report.lines.size() << " checks passed\n";
  return kOk;
}

int cmd_coverage(const std::string& assignment_path, std::size_t n, std::size_t d, double p, std::uint64_t seed,
                 std::optional<std::size_t> window, double delta) {
  dagagg::FeatureAssignment a;
  if (!assignment_path.empty()) {
    std::ifstream f(assignment_path);
    if (!f) throw dagagg::ConfigError("cannot open assignment " + assignment_path);
    auto j = nlohmann::json::parse(f);
    a = dagagg::assignment_from_json(j.contains("assignment") ? j.at("assignment") : j);
  } else {
    a = dagagg::random_feature_assignment(dagagg::build_chain(n), d, p, seed);
  }
  // Agents are audited in index order, i.e. as a chain.
  dagagg::Path path(a.agent_count());
  for (std::size_t i = 0; i < path.size(); ++i) path[i] = i;
  const std::size_t m = window ? *window
                               : std::min(path.size(), dagagg::required_window_length(path.size(), a.d, p, delta));
  const auto report = dagagg::coverage_window_check(a, path, m);
  nlohmann::json j = {{"agents", path.size()}, {"d", a.d}, {"window", m}, {"covered", report.covered}};
  if (!window) j["window_rule"] = {{"p", p}, {"delta", delta}};
  if (report.first_failing_window) {
    j["first_failing_window"] = *report.first_failing_window;
    j["missing_features"] = report.missing_features;
  }
  std::cout << j.dump(2) << '\n';
  return report.covered ? kOk : kCheckFailure;
}

int cmd_inspect(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw dagagg::ConfigError("cannot open " + path);
  const auto j = nlohmann::json::parse(f);
  std::cout << "learner " << j.at("config").dump() << '\n';
  std::cout << std::left << std::setw(6) << "node" << std::setw(16) << "parents" << std::setw(24) << "features"
            << std::setw(8) << "type" << std::setw(24) << "train_mse" << "test_mse\n";
  for (const auto& a : j.at("agents")) {
    std::cout << std::setw(6) << a.at("node").get<std::size_t>() << std::setw(16) << a.at("parents").dump()
              << std::setw(24) << a.at("features").dump() << std::setw(8) << a.at("type").get<std::string>()
              << std::setw(24) << dagagg::format_real(a.at("train_mse").get<double>())
              << (a.contains("test_mse") ? dagagg::format_real(a.at("test_mse").get<double>()) : std::string("-")) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAG information-aggregation simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials, threads;
  std::optional<std::string> out;
  auto* run = app.add_subcommand("run", "Run a multi-trial experiment from a JSON config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the base seed");
  run->add_option("--trials", trials, "Override the trial count");
  run->add_option("--out", out, "Override the output directory");
  run->add_option("--threads", threads, "Worker threads (0: all cores)");

  std::size_t lb_k = 10, lb_passes = 9;
  std::optional<std::size_t> lb_samples;
  std::uint64_t lb_seed = 0;
  std::string lb_out = "out";
  auto* lb = app.add_subcommand("run-lowerbound", "Per-agent error trace of the cyclic lower-bound chain");
  lb->add_option("--k", lb_k, "Number of features")->check(CLI::Range(std::size_t{2}, std::size_t{1000}));
  lb->add_option("--passes", lb_passes, "Passes over the features")->check(CLI::PositiveNumber);
  lb->add_option("--samples", lb_samples, "Train on this many sampled rows instead of exact moments");
  lb->add_option("--seed", lb_seed, "Sampling seed");
  lb->add_option("--out", lb_out, "Output directory");

  std::string suite = "all";
  std::size_t verify_k = 10, wine_seeds = 5;
  std::string manifest = std::filesystem::exists(default_wine_manifest()) ? default_wine_manifest().string() : "";
  std::optional<std::string> verify_out;
  auto* verify = app.add_subcommand("verify", "Run the invariant suites");
  verify->add_option("suite", suite, "all | identities | lowerbound | greedy | bounds");
  verify->add_option("--k", verify_k, "Feature count for the lower-bound suite");
  verify->add_option("--wine-seeds", wine_seeds, "Seeds for the wine cases");
  verify->add_option("--data", manifest, "Dataset manifest for the wine cases (empty to skip)");
  verify->add_option("--out", verify_out, "Write a JSON report here");

  std::string cov_assignment;
  std::size_t cov_n = 50, cov_d = 11;
  double cov_p = 0.3, cov_delta = 0.1;
  std::uint64_t cov_seed = 0;
  std::optional<std::size_t> cov_window;
  auto* cov = app.add_subcommand("coverage", "Audit window coverage of a feature assignment along a chain");
  cov->add_option("--assignment", cov_assignment, "Assignment JSON (otherwise a random one is drawn)");
  cov->add_option("--n", cov_n, "Agents in the random chain");
  cov->add_option("--d", cov_d, "Features");
  cov->add_option("--p", cov_p, "Feature fraction");
  cov->add_option("--seed", cov_seed, "Assignment seed");
  cov->add_option("--window", cov_window, "Window length (default: smallest length meeting the delta rule)");
  cov->add_option("--delta", cov_delta, "Failure probability for the default window");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Print a trained DAG dump");
  inspect->add_option("file", inspect_path, "trained_dag JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, seed, trials, out, threads);
    if (*lb) return cmd_lowerbound(lb_k, lb_passes, lb_samples, lb_seed, lb_out);
    if (*verify) return cmd_verify(suite, verify_k, wine_seeds, manifest, verify_out);
    if (*cov) return cmd_coverage(cov_assignment, cov_n, cov_d, cov_p, cov_seed, cov_window, cov_delta);
    if (*inspect) return cmd_inspect(inspect_path);
  } catch (const dagagg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailure;
  }
  return kOk;
}
