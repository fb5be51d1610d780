#ifndef SIGFX_CONFIG_HPP
#define SIGFX_CONFIG_HPP

#include "sigfx/classifiers.hpp"
#include "sigfx/common.hpp"
#include "sigfx/outlier_detectors.hpp"
#include "sigfx/regressors.hpp"
#include "sigfx/rsi.hpp"
#include "sigfx/toml_lite.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sigfx {

class ConfigError : public Error {
public:
  using Error::Error;
};

enum class Method { OLS, SVR, NNR, RF, SVC, NNC, RC, LOF, PKDE, RSI };
enum class MethodGroup { Regression, Classification, Detection, Financial };

inline constexpr std::array<Method, 10> kAllMethods{Method::OLS, Method::SVR, Method::NNR, Method::RF,  Method::SVC,
                                                    Method::NNC, Method::RC,  Method::LOF, Method::PKDE, Method::RSI};

inline std::string to_string(Method m)
{
  static constexpr std::array<const char*, 10> names{"OLS", "SVR", "NNR", "RF", "SVC",
                                                     "NNC", "RC",  "LOF", "PKDE", "RSI"};
  return names[static_cast<std::size_t>(m)];
}

inline std::optional<Method> try_parse_method(std::string_view name)
{
  for (Method m : kAllMethods)
    if (to_string(m) == name)
      return m;
  return std::nullopt;
}

inline Method parse_method(std::string_view name)
{
  if (auto m = try_parse_method(name))
    return *m;
  throw ConfigError(fmt::format("unknown method '{}'", name));
}

inline MethodGroup group_of(Method m)
{
  switch (m) {
  case Method::OLS:
  case Method::SVR:
  case Method::NNR: return MethodGroup::Regression;
  case Method::RF:
  case Method::SVC:
  case Method::NNC: return MethodGroup::Classification;
  case Method::RC:
  case Method::LOF:
  case Method::PKDE: return MethodGroup::Detection;
  case Method::RSI: return MethodGroup::Financial;
  }
  return MethodGroup::Financial;
}

/// Fits that see only X_train or y_cont give the same model for every k.
inline bool fit_is_threshold_free(Method m)
{
  const auto g = group_of(m);
  return g == MethodGroup::Regression || g == MethodGroup::Detection;
}

enum class SigmaScope { Full, Train };

inline const std::vector<std::string>& canonical_pairs()
{
  static const std::vector<std::string> pairs{"EURUSD", "GBPUSD", "JPYUSD", "AUDUSD"};
  return pairs;
}

struct ExperimentConfig {
  std::vector<std::string> pairs;
  std::map<std::string, std::filesystem::path> data;
  std::vector<int> lookbacks{7, 14, 30, 60};
  std::vector<double> thresholds{1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5};
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  double split_ratio = 0.7;
  SigmaScope sigma_scope = SigmaScope::Full;
  std::uint64_t seed = 42;
  /// 0 means one worker per hardware thread.
  int threads = 0;
  bool standardize = false;
  std::filesystem::path output_dir = "results";

  RegressorParams regressors;
  ClassifierParams classifiers;
  DetectorParams detectors;
  /// Unset: the training significant-label rate of the cell.
  std::optional<double> contamination;
  RsiState rsi;
  /// When set the RSI lookback follows the cell's p instead of rsi.lookback.
  bool rsi_lookback_from_p = true;
  RsiSignalMode rsi_mode = RsiSignalMode::Level;

  bool dump_models = false;
  bool dump_scores = false;
  bool svg = true;

  void validate() const
  {
    auto fail = [](std::string msg) { throw ConfigError(std::move(msg)); };
    if (pairs.empty())
      fail("config: 'pairs' must not be empty");
    if (lookbacks.empty())
      fail("config: 'lookbacks' must not be empty");
    if (thresholds.empty())
      fail("config: 'thresholds' must not be empty");
    if (methods.empty())
      fail("config: 'methods' must not be empty");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
      fail(fmt::format("config: split_ratio must lie in (0, 1) (got {})", split_ratio));
    if (threads < 0)
      fail("config: threads must be >= 0");
    std::set<std::string> seen_pairs;
    for (const auto& p : pairs) {
      if (!seen_pairs.insert(p).second)
        fail(fmt::format("config: pair '{}' listed twice", p));
      if (!data.count(p))
        fail(fmt::format("config: no data path for pair '{}' (add it under [data])", p));
    }
    std::set<int> seen_p;
    for (int p : lookbacks) {
      if (p < 1)
        fail(fmt::format("config: lookback must be >= 1 (got {})", p));
      if (!seen_p.insert(p).second)
        fail(fmt::format("config: lookback {} listed twice", p));
    }
    std::set<double> seen_k;
    for (double k : thresholds) {
      if (!(k > 0.0) || !std::isfinite(k))
        fail(fmt::format("config: threshold multiplier must be > 0 (got {})", k));
      if (!seen_k.insert(k).second)
        fail(fmt::format("config: threshold {} listed twice", k));
    }
    std::set<Method> seen_m;
    for (Method m : methods)
      if (!seen_m.insert(m).second)
        fail(fmt::format("config: method {} listed twice", to_string(m)));
    if (contamination && !(*contamination > 0.0 && *contamination < 1.0))
      fail(fmt::format("config: contamination must lie in (0, 1) (got {})", *contamination));
    try {
      rsi.validate();
    } catch (const Error& e) {
      fail(fmt::format("config: {}", e.what()));
    }
  }

  /// Canonical echo of every effective setting.
  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["pairs"] = pairs;
    auto& d = j["data"] = nlohmann::json::object();
    for (const auto& [pair, path] : data)
      d[pair] = path.generic_string();
    j["lookbacks"] = lookbacks;
    j["thresholds"] = thresholds;
    auto& ms = j["methods"] = nlohmann::json::array();
    for (Method m : methods)
      ms.push_back(to_string(m));
    j["split_ratio"] = split_ratio;
    j["sigma_scope"] = sigma_scope == SigmaScope::Full ? "full" : "train";
    j["seed"] = seed;
    j["standardize"] = standardize;
    j["contamination"] = contamination ? nlohmann::json(*contamination) : nlohmann::json("train_rate");
    const auto& svr = regressors.svr;
    j["svr"] = {{"C", svr.C}, {"epsilon", svr.epsilon}, {"gamma", svr.gamma ? nlohmann::json(*svr.gamma) : "scale"},
                {"tolerance", svr.tolerance}, {"max_passes", svr.max_passes}};
    const auto& svc = classifiers.svc;
    j["svc"] = {{"C", svc.C}, {"gamma", svc.gamma ? nlohmann::json(*svc.gamma) : "scale"},
                {"tolerance", svc.tolerance}, {"max_passes", svc.max_passes}};
    j["ols"] = {{"ridge", regressors.ols_ridge}};
    auto mlp = [](const MlpOptions& o) {
      return nlohmann::json{{"hidden", o.hidden}, {"learning_rate", o.learning_rate}, {"epochs", o.epochs},
                            {"batch_size", o.batch_size}};
    };
    j["nnr"] = mlp(regressors.nnr);
    j["nnc"] = mlp(classifiers.nnc);
    const auto& rf = classifiers.rf;
    j["rf"] = {{"trees", rf.trees}, {"max_features", rf.max_features}, {"min_samples_split", rf.min_samples_split},
               {"max_depth", rf.max_depth}, {"bootstrap", rf.bootstrap}};
    j["rc"] = {{"restarts", detectors.rc.restarts}, {"max_csteps", detectors.rc.max_csteps},
               {"reweight", detectors.rc.reweight}};
    j["lof"] = {{"k_neighbors", detectors.lof.k_neighbors ? nlohmann::json(*detectors.lof.k_neighbors) : "auto"}};
    j["pkde"] = {{"variance_ratio", detectors.pkde.variance_ratio}};
    j["rsi"] = {{"lookback", rsi_lookback_from_p ? nlohmann::json("p") : nlohmann::json(rsi.lookback)},
                {"upper", rsi.upper},
                {"lower", rsi.lower},
                {"mode", rsi_mode == RsiSignalMode::Level ? "level" : "crossing"}};
    return j;
  }
};

namespace detail {

class JsonReader {
public:
  JsonReader(const nlohmann::json& obj, std::string where) : obj_(obj), where_(std::move(where))
  {
    if (!obj_.is_object())
      throw ConfigError(fmt::format("config: [{}] must be a table", where_));
  }

  bool has(const char* key) const { return obj_.contains(key); }

  const nlohmann::json& raw(const char* key)
  {
    used_.insert(key);
    return obj_.at(key);
  }

  template <class T>
  void read(const char* key, T& out)
  {
    if (!has(key))
      return;
    const auto& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean())
          throw ConfigError("expected a boolean");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer())
          throw ConfigError("expected an integer");
        out = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number())
          throw ConfigError("expected a number");
        out = v.get<T>();
      } else {
        if (!v.is_string())
          throw ConfigError("expected a string");
        out = v.get<std::string>();
      }
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("config: {}{}: {}", prefix(), key, e.what()));
    }
  }

  template <class T>
  std::vector<T> list(const char* key)
  {
    const auto& v = raw(key);
    if (!v.is_array())
      throw ConfigError(fmt::format("config: {}{} must be an array", prefix(), key));
    std::vector<T> out;
    for (const auto& e : v) {
      bool ok = false;
      if constexpr (std::is_same_v<T, std::string>)
        ok = e.is_string();
      else if constexpr (std::is_integral_v<T>)
        ok = e.is_number_integer();
      else
        ok = e.is_number();
      if (!ok)
        throw ConfigError(fmt::format("config: {}{} has an element of the wrong type", prefix(), key));
      out.push_back(e.get<T>());
    }
    return out;
  }

  void finish() const
  {
    for (const auto& [key, value] : obj_.items())
      if (!used_.count(key))
        throw ConfigError(fmt::format("config: unknown key '{}{}'", prefix(), key));
  }

private:
  std::string prefix() const { return where_.empty() ? "" : where_ + "."; }

  const nlohmann::json& obj_;
  std::string where_;
  std::set<std::string> used_;
};

inline std::optional<double> read_gamma(JsonReader& r)
{
  if (!r.has("gamma"))
    return std::nullopt;
  const auto& g = r.raw("gamma");
  if (g.is_string() && g.get<std::string>() == "scale")
    return std::nullopt;
  if (!g.is_number() || !(g.get<double>() > 0.0))
    throw ConfigError("config: gamma must be a positive number or \"scale\"");
  return g.get<double>();
}

inline void read_mlp(JsonReader& r, MlpOptions& o)
{
  r.read("hidden", o.hidden);
  r.read("learning_rate", o.learning_rate);
  r.read("epochs", o.epochs);
  r.read("batch_size", o.batch_size);
  r.finish();
  if (o.hidden < 1 || o.epochs < 1 || o.batch_size < 1 || !(o.learning_rate > 0.0))
    throw ConfigError("config: network hidden, epochs and batch_size must be >= 1 and learning_rate > 0");
}

} // namespace detail

/// Builds a config from a parsed document. Relative data paths and the
/// output directory are resolved against `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {})
{
  using detail::JsonReader;
  ExperimentConfig cfg;
  JsonReader top(doc, "");

  if (top.has("data")) {
    const auto& d = top.raw("data");
    if (!d.is_object())
      throw ConfigError("config: [data] must be a table of pair = \"path\"");
    for (const auto& [pair, path] : d.items()) {
      if (!path.is_string())
        throw ConfigError(fmt::format("config: data.{} must be a path string", pair));
      std::filesystem::path pth = path.get<std::string>();
      cfg.data[pair] = pth.is_relative() && !base_dir.empty() ? base_dir / pth : pth;
    }
  }
  if (top.has("pairs"))
    cfg.pairs = top.list<std::string>("pairs");
  else
    for (const auto& [pair, path] : cfg.data)
      cfg.pairs.push_back(pair);
  for (const auto& p : cfg.pairs)
    if (std::find(canonical_pairs().begin(), canonical_pairs().end(), p) == canonical_pairs().end())
      log_warning(fmt::format("pair '{}' is not one of EURUSD, GBPUSD, JPYUSD, AUDUSD", p));

  if (top.has("lookbacks"))
    cfg.lookbacks = top.list<int>("lookbacks");
  if (top.has("thresholds"))
    cfg.thresholds = top.list<double>("thresholds");
  if (top.has("methods")) {
    cfg.methods.clear();
    for (const auto& name : top.list<std::string>("methods"))
      cfg.methods.push_back(parse_method(name));
  }
  top.read("split_ratio", cfg.split_ratio);
  if (top.has("sigma_scope")) {
    std::string scope;
    top.read("sigma_scope", scope);
    if (scope == "full")
      cfg.sigma_scope = SigmaScope::Full;
    else if (scope == "train")
      cfg.sigma_scope = SigmaScope::Train;
    else
      throw ConfigError(fmt::format("config: sigma_scope must be \"full\" or \"train\" (got '{}')", scope));
  }
  if (top.has("seed")) {
    const auto& s = top.raw("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<std::int64_t>() < 0))
      throw ConfigError("config: seed must be a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  top.read("threads", cfg.threads);
  top.read("standardize", cfg.standardize);
  if (top.has("output_dir")) {
    std::string out;
    top.read("output_dir", out);
    std::filesystem::path pth = out;
    cfg.output_dir = pth.is_relative() && !base_dir.empty() ? base_dir / pth : pth;
  }
  if (top.has("contamination")) {
    const auto& c = top.raw("contamination");
    if (c.is_string() && c.get<std::string>() == "train_rate")
      cfg.contamination.reset();
    else if (c.is_number())
      cfg.contamination = c.get<double>();
    else
      throw ConfigError("config: contamination must be a number or \"train_rate\"");
  }
  if (top.has("regression_rule")) {
    std::string rule;
    top.read("regression_rule", rule);
    if (rule != "abs_threshold")
      throw ConfigError(fmt::format("config: unsupported regression_rule '{}'", rule));
  }
  top.read("dump_models", cfg.dump_models);
  top.read("dump_scores", cfg.dump_scores);
  top.read("svg", cfg.svg);

  if (top.has("ols")) {
    JsonReader r(top.raw("ols"), "ols");
    r.read("ridge", cfg.regressors.ols_ridge);
    r.finish();
  }
  if (top.has("svr")) {
    JsonReader r(top.raw("svr"), "svr");
    auto& s = cfg.regressors.svr;
    r.read("C", s.C);
    r.read("epsilon", s.epsilon);
    s.gamma = detail::read_gamma(r);
    r.read("tolerance", s.tolerance);
    r.read("max_passes", s.max_passes);
    r.finish();
  }
  if (top.has("nnr")) {
    JsonReader r(top.raw("nnr"), "nnr");
    detail::read_mlp(r, cfg.regressors.nnr);
  }
  if (top.has("rf")) {
    JsonReader r(top.raw("rf"), "rf");
    auto& f = cfg.classifiers.rf;
    r.read("trees", f.trees);
    r.read("max_features", f.max_features);
    r.read("min_samples_split", f.min_samples_split);
    r.read("max_depth", f.max_depth);
    r.read("bootstrap", f.bootstrap);
    r.finish();
    if (f.trees < 1 || f.max_features < 0 || f.min_samples_split < 2 || f.max_depth < 0)
      throw ConfigError("config: invalid [rf] settings");
  }
  if (top.has("svc")) {
    JsonReader r(top.raw("svc"), "svc");
    auto& s = cfg.classifiers.svc;
    r.read("C", s.C);
    s.gamma = detail::read_gamma(r);
    r.read("tolerance", s.tolerance);
    r.read("max_passes", s.max_passes);
    r.finish();
  }
  if (top.has("nnc")) {
    JsonReader r(top.raw("nnc"), "nnc");
    detail::read_mlp(r, cfg.classifiers.nnc);
  }
  if (top.has("rc")) {
    JsonReader r(top.raw("rc"), "rc");
    auto& m = cfg.detectors.rc;
    r.read("restarts", m.restarts);
    r.read("max_csteps", m.max_csteps);
    r.read("reweight", m.reweight);
    r.finish();
    if (m.restarts < 1 || m.max_csteps < 1)
      throw ConfigError("config: [rc] restarts and max_csteps must be >= 1");
  }
  if (top.has("lof")) {
    JsonReader r(top.raw("lof"), "lof");
    if (r.has("k_neighbors")) {
      const auto& k = r.raw("k_neighbors");
      if (k.is_string() && k.get<std::string>() == "auto")
        cfg.detectors.lof.k_neighbors.reset();
      else if (k.is_number_integer() && k.get<int>() >= 1)
        cfg.detectors.lof.k_neighbors = k.get<int>();
      else
        throw ConfigError("config: lof.k_neighbors must be a positive integer or \"auto\"");
    }
    r.finish();
  }
  if (top.has("pkde")) {
    JsonReader r(top.raw("pkde"), "pkde");
    r.read("variance_ratio", cfg.detectors.pkde.variance_ratio);
    r.finish();
    const double v = cfg.detectors.pkde.variance_ratio;
    if (!(v > 0.0 && v <= 1.0))
      throw ConfigError("config: pkde.variance_ratio must lie in (0, 1]");
  }
  if (top.has("rsi")) {
    JsonReader r(top.raw("rsi"), "rsi");
    if (r.has("lookback")) {
      const auto& lb = r.raw("lookback");
      if (lb.is_string() && lb.get<std::string>() == "p")
        cfg.rsi_lookback_from_p = true;
      else if (lb.is_number_integer()) {
        cfg.rsi.lookback = lb.get<int>();
        cfg.rsi_lookback_from_p = false;
      }
      else
        throw ConfigError("config: rsi.lookback must be an integer or \"p\"");
    }
    r.read("upper", cfg.rsi.upper);
    r.read("lower", cfg.rsi.lower);
    if (r.has("mode")) {
      std::string mode;
      r.read("mode", mode);
      if (mode == "level")
        cfg.rsi_mode = RsiSignalMode::Level;
      else if (mode == "crossing")
        cfg.rsi_mode = RsiSignalMode::Crossing;
      else
        throw ConfigError(fmt::format("config: rsi.mode must be \"level\" or \"crossing\" (got '{}')", mode));
    }
    r.finish();
  }
  top.finish();
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {})
{
  nlohmann::json doc;
  try {
    doc = toml::parse(toml_text);
  } catch (const toml::ParseError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(doc, base_dir);
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
  nlohmann::json doc;
  try {
    doc = toml::parse_file(path);
  } catch (const Error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return config_from_json(doc, path.parent_path());
}

/// Applies SIGFX_SEED when set. Command-line flags are applied after this.
inline void apply_environment(ExperimentConfig& cfg)
{
  const char* env = std::getenv("SIGFX_SEED");
  if (!env || !*env)
    return;
  std::uint64_t v = 0;
  const std::string_view s(env);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError(fmt::format("SIGFX_SEED must be a non-negative integer (got '{}')", s));
  cfg.seed = v;
}

} // namespace sigfx

#endif // SIGFX_CONFIG_HPP
