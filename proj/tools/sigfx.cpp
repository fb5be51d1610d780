#include "sigfx/config.hpp"
#include "sigfx/dataset.hpp"
#include "sigfx/market_data.hpp"
#include "sigfx/report.hpp"
#include "sigfx/runner.hpp"
#include "sigfx/synthetic.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCellFailures = 1;
constexpr int kExitConfig = 2;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> output;
  std::vector<std::string> pairs;
  std::vector<std::string> methods;
  std::vector<int> lookbacks;
  std::vector<double> thresholds;
  std::optional<double> split_ratio;
  std::optional<std::string> sigma_scope;
  std::optional<double> contamination;
  bool standardize = false;
  bool no_svg = false;
  bool dump_models = false;
  bool dump_scores = false;
  bool quiet = false;
};

void apply_flags(sigfx::ExperimentConfig& cfg, const RunFlags& f)
{
  if (f.seed)
    cfg.seed = *f.seed;
  if (f.threads)
    cfg.threads = *f.threads;
  if (f.output)
    cfg.output_dir = *f.output;
  if (!f.pairs.empty())
    cfg.pairs = f.pairs;
  if (!f.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : f.methods)
      cfg.methods.push_back(sigfx::parse_method(m));
  }
  if (!f.lookbacks.empty())
    cfg.lookbacks = f.lookbacks;
  if (!f.thresholds.empty())
    cfg.thresholds = f.thresholds;
  if (f.split_ratio)
    cfg.split_ratio = *f.split_ratio;
  if (f.sigma_scope) {
    if (*f.sigma_scope == "full")
      cfg.sigma_scope = sigfx::SigmaScope::Full;
    else if (*f.sigma_scope == "train")
      cfg.sigma_scope = sigfx::SigmaScope::Train;
    else
      throw sigfx::ConfigError("--sigma-scope must be full or train");
  }
  if (f.contamination)
    cfg.contamination = *f.contamination;
  if (f.standardize)
    cfg.standardize = true;
  if (f.no_svg)
    cfg.svg = false;
  if (f.dump_models)
    cfg.dump_models = true;
  if (f.dump_scores)
    cfg.dump_scores = true;
  cfg.validate();
}

int cmd_run(const RunFlags& flags)
{
  sigfx::ExperimentConfig cfg;
  try {
    cfg = sigfx::load_config(flags.config);
    sigfx::apply_environment(cfg);
    apply_flags(cfg, flags);
  } catch (const sigfx::ConfigError& e) {
    std::cerr << "sigfx: " << e.what() << '\n';
    return kExitConfig;
  }

  const auto data = sigfx::DataCache::load(cfg);
  const auto total = sigfx::expand_grid(cfg).size();
  std::atomic<std::size_t> done{0};
  std::mutex io;
  const auto start = std::chrono::steady_clock::now();
  auto progress = [&](const sigfx::CellDescriptor& cell, const sigfx::MetricsRecord& rec,
                      const sigfx::CellArtifacts* art) {
    if (art)
      sigfx::write_cell_artifacts(cell, *art, cfg.output_dir, cfg.dump_models, cfg.dump_scores);
    const auto n = ++done;
    if (flags.quiet && !rec.failed())
      return;
    std::lock_guard lock(io);
    if (rec.failed())
      std::cerr << fmt::format("[{}/{}] {} {}\n", n, total, rec.cell.key(), rec.status);
    else
      std::cerr << fmt::format("[{}/{}] {} f1={:.3f} recall={:.3f}\n", n, total, rec.cell.key(), rec.f1, rec.recall);
  };

  sigfx::ResultsTable table;
  try {
    if (cfg.dump_models || cfg.dump_scores)
      std::filesystem::create_directories(cfg.output_dir);
    table = sigfx::run_grid(cfg, data, progress);
    sigfx::write_results(table, cfg.output_dir);
    sigfx::emit_report(table, cfg.output_dir, cfg.svg);
  } catch (const std::exception& e) {
    std::cerr << "sigfx: " << e.what() << '\n';
    return kExitCellFailures;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto failed = table.meta.value("failed_cells", 0);
  std::cout << fmt::format("{} cells, {} failed, {:.1f} s; results in {}\n", table.records.size(), failed, secs,
                           cfg.output_dir.string());
  return failed > 0 ? kExitCellFailures : kExitOk;
}

int cmd_report(const std::string& dir, const std::string& out, bool svg)
{
  try {
    const auto table = sigfx::read_results(dir);
    const auto files = sigfx::emit_report(table, out.empty() ? dir : out, svg);
    std::cout << fmt::format("wrote {} report files\n", files.size());
  } catch (const std::exception& e) {
    std::cerr << "sigfx: " << e.what() << '\n';
    return kExitCellFailures;
  }
  return kExitOk;
}

int cmd_validate(const std::string& path, const std::string& pair, double k)
{
  try {
    const auto prices = sigfx::load_price_csv(path, pair);
    const auto returns = sigfx::compute_returns(prices);
    const double sigma = sigfx::return_sigma(returns);
    std::size_t significant = 0;
    for (double r : returns.values())
      significant += std::abs(r) > k * sigma;
    std::cout << fmt::format("{}: {} prices, {} .. {}\n", path, prices.size(), sigfx::format_date(prices.dates().front()),
                             sigfx::format_date(prices.dates().back()));
    std::cout << fmt::format("return sigma {:.6g}; {:.2f}% of returns exceed {} sigma\n", sigma,
                             100.0 * static_cast<double>(significant) / static_cast<double>(returns.size()), k);
  } catch (const std::exception& e) {
    std::cerr << "sigfx: " << e.what() << '\n';
    return kExitCellFailures;
  }
  return kExitOk;
}

int cmd_synth(const std::string& out, std::size_t prices, std::uint64_t seed, const std::vector<std::string>& pairs)
{
  try {
    std::filesystem::create_directories(out);
    for (const auto& pair : pairs) {
      const auto series = sigfx::synthetic_garch_series(pair, prices, seed);
      const auto file = std::filesystem::path(out) / (pair + ".csv");
      sigfx::write_price_csv(series, file);
      std::cout << "wrote " << file.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "sigfx: " << e.what() << '\n';
    return kExitCellFailures;
  }
  return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Significant exchange-rate move prediction experiments"};
  app.set_version_flag("--version", std::string(sigfx::kVersion));
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run the experiment grid described by a TOML config");
  run->add_option("--config,-c", rf.config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", rf.seed, "Master seed (overrides SIGFX_SEED and the config)");
  run->add_option("--threads,-j", rf.threads, "Worker threads, 0 = all cores");
  run->add_option("--output,-o", rf.output, "Output directory");
  run->add_option("--pairs", rf.pairs, "Restrict to these pairs");
  run->add_option("--methods", rf.methods, "Restrict to these methods");
  run->add_option("--lookbacks", rf.lookbacks, "Lookback lengths p");
  run->add_option("--thresholds", rf.thresholds, "Threshold multipliers k");
  run->add_option("--split-ratio", rf.split_ratio, "Training fraction");
  run->add_option("--sigma-scope", rf.sigma_scope, "full or train");
  run->add_option("--contamination", rf.contamination, "Detector contamination q");
  run->add_flag("--standardize", rf.standardize, "z-score features with training statistics");
  run->add_flag("--no-svg", rf.no_svg, "Skip SVG charts");
  run->add_flag("--dump-models", rf.dump_models, "Write fitted models as JSON");
  run->add_flag("--dump-scores", rf.dump_scores, "Write per-cell test scores");
  run->add_flag("--quiet,-q", rf.quiet, "Only report failed cells");

  std::string results_dir, report_out;
  bool report_svg = false;
  auto* report = app.add_subcommand("report", "Rebuild report files from results.csv");
  report->add_option("--results,-r", results_dir, "Directory holding results.csv")->required();
  report->add_option("--out", report_out, "Output directory (default: the results directory)");
  report->add_flag("--svg", report_svg, "Also write SVG charts");

  std::string csv_path, pair = "EURUSD";
  double k = 1.5;
  auto* validate = app.add_subcommand("validate-data", "Check a price CSV and print summary statistics");
  validate->add_option("csv", csv_path, "Price file (date,close)")->required();
  validate->add_option("--pair", pair, "Pair name");
  validate->add_option("--k", k, "Threshold multiplier for the summary")->check(CLI::PositiveNumber);

  std::string synth_out = "data/synthetic";
  std::size_t synth_prices = 5400;
  std::uint64_t synth_seed = 7;
  std::vector<std::string> synth_pairs = sigfx::canonical_pairs();
  auto* synth = app.add_subcommand("synth", "Write synthetic GARCH price series");
  synth->add_option("--out,-o", synth_out, "Output directory");
  synth->add_option("--prices,-n", synth_prices, "Prices per series")->check(CLI::Range(2, 100000000));
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--pairs", synth_pairs, "Pair names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run)
    return cmd_run(rf);
  if (*report)
    return cmd_report(results_dir, report_out, report_svg);
  if (*validate)
    return cmd_validate(csv_path, pair, k);
  return cmd_synth(synth_out, synth_prices, synth_seed, synth_pairs);
}
