#ifndef SIGFX_RUNNER_HPP
#define SIGFX_RUNNER_HPP

#include "sigfx/classifiers.hpp"
#include "sigfx/common.hpp"
#include "sigfx/config.hpp"
#include "sigfx/dataset.hpp"
#include "sigfx/evaluation.hpp"
#include "sigfx/market_data.hpp"
#include "sigfx/outlier_detectors.hpp"
#include "sigfx/regressors.hpp"
#include "sigfx/rsi.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <tuple>
#include <variant>
#include <vector>

namespace sigfx {

struct CellDescriptor {
  std::size_t index = 0;
  std::string pair;
  int lookback = 0;
  double k = 0.0;
  Method method = Method::OLS;
  std::uint64_t seed = 0;

  CellIdentity identity() const { return CellIdentity{pair, to_string(method), lookback, k}; }
};

/// Cartesian product in (pair, p, k, method) order.
inline std::vector<CellDescriptor> expand_grid(const ExperimentConfig& cfg)
{
  cfg.validate();
  std::vector<CellDescriptor> cells;
  cells.reserve(cfg.pairs.size() * cfg.lookbacks.size() * cfg.thresholds.size() * cfg.methods.size());
  for (const auto& pair : cfg.pairs)
    for (int p : cfg.lookbacks)
      for (double k : cfg.thresholds)
        for (Method m : cfg.methods) {
          CellDescriptor c;
          c.index = cells.size();
          c.pair = pair;
          c.lookback = p;
          c.k = k;
          c.method = m;
          c.seed = derive_seed(cfg.seed, c.identity().key());
          cells.push_back(std::move(c));
        }
  return cells;
}

/// Loaded price series per pair. A pair whose file fails to load keeps the
/// error message so that its cells fail individually.
class DataCache {
public:
  void add(PriceSeries series)
  {
    auto name = series.pair();
    series_[name] = std::make_shared<const PriceSeries>(std::move(series));
  }

  void add_error(const std::string& pair, std::string message) { errors_[pair] = std::move(message); }

  static DataCache load(const ExperimentConfig& cfg)
  {
    DataCache cache;
    for (const auto& pair : cfg.pairs) {
      try {
        cache.add(load_price_csv(cfg.data.at(pair), pair));
      } catch (const std::exception& e) {
        cache.add_error(pair, e.what());
      }
    }
    return cache;
  }

  std::shared_ptr<const PriceSeries> get(const std::string& pair) const
  {
    if (auto it = series_.find(pair); it != series_.end())
      return it->second;
    if (auto it = errors_.find(pair); it != errors_.end())
      throw Error(it->second);
    throw Error(fmt::format("no data loaded for pair '{}'", pair));
  }

private:
  std::map<std::string, std::shared_ptr<const PriceSeries>> series_;
  std::map<std::string, std::string> errors_;
};

struct ResultsTable {
  std::vector<MetricsRecord> records;
  nlohmann::json meta = nlohmann::json::object();
};

/// Optional per-cell artifacts written next to results.csv.
struct CellArtifacts {
  nlohmann::json model;
  std::vector<Date> dates;
  std::vector<double> scores;
  double cutoff = 0.0;
  Labels signal;
};

namespace detail {

/// Thread-safe compute-once map. Concurrent callers of the same key wait for
/// the first one; an exception is rethrown to every caller.
template <class Key, class Value>
class OnceMap {
public:
  template <class F>
  std::shared_ptr<const Value> get(const Key& key, F&& make)
  {
    std::shared_future<std::shared_ptr<const Value>> fut;
    std::promise<std::shared_ptr<const Value>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        fut = promise.get_future().share();
        entries_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const Value>(make()));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  template <class Pred>
  void erase_if(Pred&& pred)
  {
    std::lock_guard lock(mutex_);
    std::erase_if(entries_, [&](const auto& kv) { return pred(kv.first); });
  }

private:
  std::mutex mutex_;
  std::map<Key, std::shared_future<std::shared_ptr<const Value>>> entries_;
};

} // namespace detail

/// Executes grid cells. Work shared between cells of the same (pair, p) is
/// computed once: the windowed split, the RBF Gram matrix, and fits whose
/// result does not depend on k. Shared fits are seeded from the master seed
/// and (pair, p, method), so results do not depend on execution order.
class ExperimentRunner {
public:
  ExperimentRunner(ExperimentConfig cfg, const DataCache& data) : cfg_(std::move(cfg)), data_(data) {}

  const ExperimentConfig& config() const noexcept { return cfg_; }

  MetricsRecord run_cell(const CellDescriptor& cell, CellArtifacts* artifacts = nullptr)
  {
    try {
      return execute(cell, artifacts);
    } catch (const std::exception& e) {
      return failed_record(cell.identity(), e.what());
    }
  }

  /// Runs `cells` on a bounded pool and returns records in the order given.
  std::vector<MetricsRecord> run(const std::vector<CellDescriptor>& cells, int threads,
                                 const std::function<void(const CellDescriptor&, const MetricsRecord&,
                                                          const CellArtifacts*)>& on_done = {})
  {
    {
      std::lock_guard lock(remaining_mutex_);
      for (const auto& c : cells)
        ++remaining_[GroupKey{c.pair, c.lookback}];
    }
    std::vector<MetricsRecord> out(cells.size());
    const bool want_artifacts = cfg_.dump_models || cfg_.dump_scores;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
        CellArtifacts art;
        out[i] = run_cell(cells[i], want_artifacts ? &art : nullptr);
        if (on_done)
          on_done(cells[i], out[i], want_artifacts && !out[i].failed() ? &art : nullptr);
        release(cells[i]);
      }
    };
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(cells.size(), 1));
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(work);
    }
    return out;
  }

private:
  using GroupKey = std::tuple<std::string, int>;
  using FitKey = std::tuple<std::string, int, Method>;

  struct Group {
    std::shared_ptr<const PriceSeries> prices;
    double sigma = 0.0;
    SplitDataset split;
    std::shared_ptr<const Matrix> train_X;
    std::shared_ptr<KernelMatrix> kernel; // built on first use
    std::once_flag kernel_once;
    std::shared_ptr<KernelMatrix> rbf_kernel(std::optional<double> gamma)
    {
      std::call_once(kernel_once,
                     [&] { kernel = std::make_shared<KernelMatrix>(train_X, gamma ? *gamma : scale_gamma(*train_X)); });
      return kernel;
    }
  };

  /// Test-period output of a k-independent fit.
  struct SharedFit {
    Vector train_scores;
    Vector test_output;
    nlohmann::json model;
  };

  std::shared_ptr<Group> group(const std::string& pair, int p)
  {
    auto holder = groups_.get(GroupKey{pair, p}, [&] {
      auto g = std::make_shared<Group>();
      g->prices = data_.get(pair);
      const auto returns = compute_returns(*g->prices);
      const WindowSpec spec(p);
      auto windows = build_windows(returns, spec);
      const std::size_t n = static_cast<std::size_t>(windows.X.rows());
      const std::size_t cut = split_point(n, cfg_.split_ratio);
      if (cfg_.sigma_scope == SigmaScope::Full) {
        g->sigma = return_sigma(returns);
      } else {
        // returns up to the last training target
        const auto& r = returns.values();
        g->sigma = return_sigma(std::span<const double>(r.data(), std::min(r.size(), cut + static_cast<std::size_t>(p))));
      }
      LabeledDataset ds;
      ds.X = std::move(windows.X);
      ds.y_cont = std::move(windows.y_cont);
      ds.dates = std::move(windows.dates);
      ds.y_bin.assign(n, 0);
      g->split = temporal_split(ds, cfg_.split_ratio);
      if (cfg_.standardize)
        standardize_features(g->split);
      g->train_X = std::make_shared<const Matrix>(g->split.train.X);
      return g;
    });
    return *holder;
  }

  const SharedFit& shared_fit(const CellDescriptor& cell, Group& g, std::shared_ptr<const SharedFit>& keep)
  {
    const std::uint64_t seed = derive_seed(cfg_.seed, fmt::format("{}|{}|{}", cell.pair, cell.lookback,
                                                                  to_string(cell.method)));
    keep = fits_.get(FitKey{cell.pair, cell.lookback, cell.method}, [&] {
      SharedFit f;
      const auto& train = g.split.train;
      const auto& test = g.split.test;
      const bool dump = cfg_.dump_models;
      switch (cell.method) {
      case Method::OLS:
      case Method::SVR:
      case Method::NNR: {
        const auto kind = cell.method == Method::OLS   ? RegressorKind::OLS
                          : cell.method == Method::SVR ? RegressorKind::SVR
                                                       : RegressorKind::NNR;
        std::shared_ptr<const KernelMatrix> kernel;
        if (kind == RegressorKind::SVR)
          kernel = g.rbf_kernel(cfg_.regressors.svr.gamma);
        const auto model = fit_regressor(kind, train.X, train.y_cont, seed, cfg_.regressors, kernel);
        f.test_output = model.predict(test.X);
        if (dump)
          f.model = model.to_json();
        break;
      }
      case Method::RC:
      case Method::LOF:
      case Method::PKDE: {
        const auto kind = cell.method == Method::RC    ? DetectorKind::RC
                          : cell.method == Method::LOF ? DetectorKind::LOF
                                                       : DetectorKind::PKDE;
        // the contamination only places the cutoff, which each cell recomputes
        const auto model = fit_detector(kind, train.X, ContaminationRule(0.5), seed, cfg_.detectors);
        f.train_scores = model.train_scores();
        f.test_output = model.score(test.X);
        if (dump)
          f.model = model.to_json();
        break;
      }
      default: throw Error("shared_fit: method is fitted per cell");
      }
      return f;
    });
    return *keep;
  }

  MetricsRecord execute(const CellDescriptor& cell, CellArtifacts* art)
  {
    auto g = group(cell.pair, cell.lookback);
    const ThresholdSpec thr(cell.k, g->sigma);
    const auto& train = g->split.train;
    const auto& test = g->split.test;
    const Labels y_train = label_significant(train.y_cont, thr);
    const Labels y_test = label_significant(test.y_cont, thr);

    Labels signal;
    std::shared_ptr<const SharedFit> keep;
    switch (group_of(cell.method)) {
    case MethodGroup::Regression: {
      const auto& f = shared_fit(cell, *g, keep);
      signal = regression_to_signal(f.test_output, thr);
      if (art) {
        art->model = f.model;
        art->scores.assign(f.test_output.data(), f.test_output.data() + f.test_output.size());
        art->cutoff = thr.level();
      }
      break;
    }
    case MethodGroup::Detection: {
      const auto& f = shared_fit(cell, *g, keep);
      double q = 0.0;
      if (cfg_.contamination) {
        q = *cfg_.contamination;
      } else {
        const double n = static_cast<double>(y_train.size());
        const double rate = static_cast<double>(std::count(y_train.begin(), y_train.end(), 1)) / n;
        q = std::clamp(rate, 1.0 / n, 1.0 - 1.0 / n);
      }
      const double cutoff =
          contamination_cutoff(std::span<const double>(f.train_scores.data(), f.train_scores.size()), q);
      signal = scores_to_signal(f.test_output, cutoff);
      if (art) {
        art->model = f.model;
        if (art->model.is_object()) {
          art->model["contamination"] = q;
          art->model["cutoff"] = cutoff;
        }
        art->scores.assign(f.test_output.data(), f.test_output.data() + f.test_output.size());
        art->cutoff = cutoff;
      }
      break;
    }
    case MethodGroup::Classification: {
      const auto kind = cell.method == Method::RF    ? ClassifierKind::RF
                        : cell.method == Method::SVC ? ClassifierKind::SVC
                                                     : ClassifierKind::NNC;
      std::shared_ptr<const KernelMatrix> kernel;
      if (kind == ClassifierKind::SVC)
        kernel = g->rbf_kernel(cfg_.classifiers.svc.gamma);
      const auto model = fit_classifier(kind, train.X, y_train, cell.seed, cfg_.classifiers, kernel);
      signal = model.predict(test.X);
      if (art) {
        if (cfg_.dump_models)
          art->model = model.to_json();
        if (kind == ClassifierKind::SVC && !model.is_constant()) {
          const Vector f = model.decision_values(test.X);
          art->scores.assign(f.data(), f.data() + f.size());
        } else if (kind == ClassifierKind::NNC && !model.is_constant()) {
          const Vector prob = model.probability(test.X);
          art->scores.assign(prob.data(), prob.data() + prob.size());
          art->cutoff = 0.5;
        }
      }
      break;
    }
    case MethodGroup::Financial: {
      RsiState state = cfg_.rsi;
      if (cfg_.rsi_lookback_from_p)
        state.lookback = cell.lookback;
      const Labels all = rsi_signal(*g->prices, state, WindowSpec(cell.lookback), cfg_.rsi_mode);
      const std::size_t offset = train.rows();
      if (all.size() != offset + test.rows())
        throw Error("RSI signal length does not match the windowed dataset");
      signal.assign(all.begin() + static_cast<std::ptrdiff_t>(offset), all.end());
      if (art && cfg_.dump_models)
        art->model = {{"kind", "RSI"},
                      {"lookback", state.lookback},
                      {"upper", state.upper},
                      {"lower", state.lower},
                      {"mode", cfg_.rsi_mode == RsiSignalMode::Level ? "level" : "crossing"}};
      break;
    }
    }
    if (art) {
      art->dates = test.dates;
      art->signal = signal;
    }
    return evaluate_signal(y_test, signal, cell.identity());
  }

  void release(const CellDescriptor& cell)
  {
    GroupKey key{cell.pair, cell.lookback};
    {
      std::lock_guard lock(remaining_mutex_);
      auto it = remaining_.find(key);
      if (it == remaining_.end() || --it->second > 0)
        return;
      remaining_.erase(it);
    }
    groups_.erase_if([&](const GroupKey& k) { return k == key; });
    fits_.erase_if([&](const FitKey& k) { return std::get<0>(k) == cell.pair && std::get<1>(k) == cell.lookback; });
  }

  ExperimentConfig cfg_;
  const DataCache& data_;
  detail::OnceMap<GroupKey, std::shared_ptr<Group>> groups_;
  detail::OnceMap<FitKey, SharedFit> fits_;
  std::mutex remaining_mutex_;
  std::map<GroupKey, int> remaining_;
};

/// Runs one cell in isolation.
inline MetricsRecord run_experiment_cell(const CellDescriptor& cell, const DataCache& data,
                                         const ExperimentConfig& cfg)
{
  ExperimentRunner runner(cfg, data);
  return runner.run_cell(cell);
}

inline std::string config_hash(const ExperimentConfig& cfg)
{
  return fmt::format("{:016x}", fnv1a64(cfg.to_json().dump()));
}

inline std::string utc_timestamp()
{
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto day = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::year_month_day ymd(day);
  const std::chrono::hh_mm_ss hms(now - day);
  return fmt::format("{}T{:02}:{:02}:{:02}Z", format_date(ymd), hms.hours().count(), hms.minutes().count(),
                     hms.seconds().count());
}

/// Expands and runs the whole grid.
inline ResultsTable run_grid(const ExperimentConfig& cfg, const DataCache& data,
                             const std::function<void(const CellDescriptor&, const MetricsRecord&,
                                                      const CellArtifacts*)>& on_done = {})
{
  const auto cells = expand_grid(cfg);
  ExperimentRunner runner(cfg, data);
  ResultsTable table;
  table.records = runner.run(cells, cfg.threads, on_done);
  const auto failed = std::count_if(table.records.begin(), table.records.end(),
                                    [](const MetricsRecord& r) { return r.failed(); });
  table.meta = {{"config", cfg.to_json()},
                {"config_hash", config_hash(cfg)},
                {"seed", cfg.seed},
                {"version", kVersion},
                {"timestamp", utc_timestamp()},
                {"cells", table.records.size()},
                {"failed_cells", failed}};
  return table;
}

} // namespace sigfx

#endif // SIGFX_RUNNER_HPP
