#include "sigfx/config.hpp"
#include "sigfx/toml_lite.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace sigfx;
using sigfx::testing::TempDir;

namespace {

const char* kMinimal = R"(
pairs = ["EURUSD"]
data = { EURUSD = "eurusd.csv" }
)";

std::string config_error(const std::string& text)
{
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

} // namespace

TEST(Toml, ScalarsTablesAndArrays)
{
  const auto j = toml::parse(R"(
# comment
title = "grid"   # trailing comment
count = 1_000
ratio = 0.7
neg = -2.5e-3
flag = true
off = false
path = 'C:\raw\path'
list = [
  1, 2,
  3,   # inside
]
mixed = ["a", "b"]
inline = { a = 1, b = "x" }
dotted.key = 4

[section]
x = 1
[section.sub]
y = "z\tq"
)");
  EXPECT_EQ(j["title"], "grid");
  EXPECT_EQ(j["count"], 1000);
  EXPECT_DOUBLE_EQ(j["ratio"].get<double>(), 0.7);
  EXPECT_DOUBLE_EQ(j["neg"].get<double>(), -2.5e-3);
  EXPECT_EQ(j["flag"], true);
  EXPECT_EQ(j["off"], false);
  EXPECT_EQ(j["path"], "C:\\raw\\path");
  EXPECT_EQ(j["list"], nlohmann::json({1, 2, 3}));
  EXPECT_EQ(j["mixed"], nlohmann::json({"a", "b"}));
  EXPECT_EQ(j["inline"]["b"], "x");
  EXPECT_EQ(j["dotted"]["key"], 4);
  EXPECT_EQ(j["section"]["x"], 1);
  EXPECT_EQ(j["section"]["sub"]["y"], "z\tq");
}

TEST(Toml, Errors)
{
  EXPECT_THROW(toml::parse("a = 1\na = 2\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("[t]\n[t]\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("[[t]]\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("a = \"open\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("a = 1 2\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("a = 2020-01-01\n"), toml::ParseError);
  try {
    toml::parse("x = 1\ny = 1\nz = ?\n");
  } catch (const toml::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Config, DefaultsFromMinimalFile)
{
  const auto cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.pairs, std::vector<std::string>{"EURUSD"});
  EXPECT_EQ(cfg.lookbacks, (std::vector<int>{7, 14, 30, 60}));
  EXPECT_EQ(cfg.thresholds, (std::vector<double>{1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5}));
  EXPECT_EQ(cfg.methods.size(), 10u);
  EXPECT_DOUBLE_EQ(cfg.split_ratio, 0.7);
  EXPECT_EQ(cfg.sigma_scope, SigmaScope::Full);
  EXPECT_TRUE(cfg.rsi_lookback_from_p);
  EXPECT_FALSE(cfg.contamination.has_value());
  EXPECT_EQ(cfg.classifiers.rf.trees, 100);
  EXPECT_EQ(cfg.regressors.nnr.hidden, 100);
}

TEST(Config, Overrides)
{
  const auto cfg = parse_config(std::string(kMinimal) + R"(
lookbacks = [7]
thresholds = [1.5, 2.0]
methods = ["RC", "RSI"]
split_ratio = 0.6
sigma_scope = "train"
seed = 99
contamination = 0.1
[svr]
C = 2.0
gamma = 0.5
[rf]
trees = 10
[nnc]
epochs = 5
[lof]
k_neighbors = 5
[rsi]
lookback = 14
mode = "crossing"
)");
  EXPECT_EQ(cfg.lookbacks, std::vector<int>{7});
  EXPECT_EQ(cfg.methods, (std::vector<Method>{Method::RC, Method::RSI}));
  EXPECT_DOUBLE_EQ(cfg.split_ratio, 0.6);
  EXPECT_EQ(cfg.sigma_scope, SigmaScope::Train);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_DOUBLE_EQ(*cfg.contamination, 0.1);
  EXPECT_DOUBLE_EQ(cfg.regressors.svr.C, 2.0);
  EXPECT_DOUBLE_EQ(*cfg.regressors.svr.gamma, 0.5);
  EXPECT_EQ(cfg.classifiers.rf.trees, 10);
  EXPECT_EQ(cfg.classifiers.nnc.epochs, 5);
  EXPECT_EQ(*cfg.detectors.lof.k_neighbors, 5);
  EXPECT_FALSE(cfg.rsi_lookback_from_p);
  EXPECT_EQ(cfg.rsi.lookback, 14);
  EXPECT_EQ(cfg.rsi_mode, RsiSignalMode::Crossing);
}

TEST(Config, InvalidConfigurations)
{
  EXPECT_NE(config_error("pairs = []\n").find("pairs"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "lookbacks = []\n").find("lookbacks"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "thresholds = []\n").find("thresholds"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "methods = []\n").find("methods"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "split_ratio = 1.0\n").find("split_ratio"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "methods = [\"XGB\"]\n").find("XGB"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "lookback = [7]\n").find("unknown key"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "[svr]\nC = \"x\"\n").find("svr.C"), std::string::npos);
  EXPECT_NE(config_error("pairs = [\"GBPUSD\"]\n").find("no data path"), std::string::npos);
  EXPECT_FALSE(config_error("pairs = [\n").empty());
}

TEST(Config, PathsResolveAgainstConfigDirectory)
{
  TempDir dir("cfg");
  const auto path = dir.write("grid.toml", std::string(kMinimal) + "output_dir = \"out\"\n");
  const auto cfg = load_config(path);
  EXPECT_EQ(cfg.data.at("EURUSD"), dir.path() / "eurusd.csv");
  EXPECT_EQ(cfg.output_dir, dir.path() / "out");
}

TEST(Config, SeedEnvironmentOverride)
{
  auto cfg = parse_config(kMinimal);
  ::setenv("SIGFX_SEED", "12345", 1);
  apply_environment(cfg);
  EXPECT_EQ(cfg.seed, 12345u);
  ::setenv("SIGFX_SEED", "abc", 1);
  EXPECT_THROW(apply_environment(cfg), ConfigError);
  ::unsetenv("SIGFX_SEED");
}

TEST(Config, EchoIsStable)
{
  const auto a = parse_config(kMinimal).to_json().dump();
  const auto b = parse_config(kMinimal).to_json().dump();
  EXPECT_EQ(a, b);
}

TEST(Methods, NamesAndGroups)
{
  for (Method m : kAllMethods)
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(group_of(Method::PKDE), MethodGroup::Detection);
  EXPECT_EQ(group_of(Method::NNC), MethodGroup::Classification);
  EXPECT_EQ(group_of(Method::SVR), MethodGroup::Regression);
  EXPECT_EQ(group_of(Method::RSI), MethodGroup::Financial);
}
