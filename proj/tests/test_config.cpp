#include "frontdoor/config.hpp"
#include "frontdoor/errors.hpp"
#include "frontdoor/experiment.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace frontdoor;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(method = faft
epochs = 1
width = 2
batch_size = 32
image_size = 16
samples_per_class = 10
test_per_class = 5
)";

std::string error_of(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyFileGivesValidDefaults) {
  const ExperimentConfig c = parse_config_string("");
  EXPECT_EQ(c.method, Method::fast);
  EXPECT_EQ(c.alpha, 0.7);
  EXPECT_EQ(c.beta, 0.35);
  EXPECT_EQ(c.k, 3);
  EXPECT_EQ(c.sampling, Sampling::domain_balance);
  EXPECT_EQ(c.momentum, 0.9);
  EXPECT_EQ(c.weight_decay, 5e-4);
  EXPECT_EQ(c.data.num_domains, 4);
  EXPECT_EQ(c.data.image_size, 32);
  EXPECT_EQ(c.data.samples_per_class, 600);
  EXPECT_EQ(c.data.rho, 0.9);
  EXPECT_NO_THROW(validate_config(c));
  EXPECT_EQ(parse_config_string("# only a comment\n\n   \n").alpha, 0.7);
}

TEST(Config, RangeErrorCitesBounds) {
  const std::string msg = error_of("\nalpha = 1.5\n");
  EXPECT_NE(msg.find("[0, 1]"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
  EXPECT_NE(error_of("eta = -0.1").find("[0, 1]"), std::string::npos);
  EXPECT_NE(error_of("beta = 2").find("[0, 1]"), std::string::npos);
}

TEST(Config, NamedErrorsWithLineNumbers) {
  EXPECT_NE(error_of("alpha = 0.5\nbogus = 3\n").find(":2: unknown key 'bogus'"), std::string::npos);
  EXPECT_NE(error_of("k = 0").find("k = 0"), std::string::npos);
  EXPECT_NE(error_of("epochs = 0").find("epochs"), std::string::npos);
  EXPECT_NE(error_of("alpha = x").find("not a number"), std::string::npos);
  EXPECT_NE(error_of("alpha 0.5").find("expected 'key = value'"), std::string::npos);
  EXPECT_NE(error_of("k = 2\nk = 3").find(":2: duplicate key"), std::string::npos);
  EXPECT_NE(error_of("method = sgd").find("unknown method"), std::string::npos);
  EXPECT_NE(error_of("image_size = 20").find("multiple of 8"), std::string::npos);
  EXPECT_NE(error_of("momentum = 1").find("[0, 1)"), std::string::npos);
}

TEST(Config, ErmForbidsStyleParameters) {
  const std::string msg = error_of("method = erm\nepochs = 2\nbeta = 0.5\n");
  EXPECT_NE(msg.find("forbids style parameter 'beta'"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":3:"), std::string::npos) << msg;
  EXPECT_NO_THROW(parse_config_string("method = erm\nepochs = 2\n"));
  EXPECT_EQ(echo_config(parse_config_string("method = erm")).find("alpha"), std::string::npos);
}

TEST(Config, EchoRoundTrips) {
  const ExperimentConfig c = parse_config_string("method = fast\nalpha = 0.7\nbeta = 0.35\nfolds = domain1, domain3\n");
  const std::string echo = echo_config(c);
  EXPECT_NE(echo.find("alpha = 0.7\n"), std::string::npos);
  EXPECT_NE(echo.find("beta = 0.35\n"), std::string::npos);
  const ExperimentConfig back = parse_config_string(echo);
  EXPECT_EQ(echo_config(back), echo);
  EXPECT_EQ(back.folds, (std::vector<std::string>{"domain1", "domain3"}));
  EXPECT_EQ(back.alpha, 0.7);
  // Every key appears once in the echo.
  for (const auto& key : config_keys()) EXPECT_NE(echo.find(key + " = "), std::string::npos) << key;
}

TEST(Config, OddValuesSurviveEcho) {
  const ExperimentConfig c = parse_config_string("lr = 0.1234567890123\nseed = 18446744073709551615\n");
  const ExperimentConfig back = parse_config_string(echo_config(c));
  EXPECT_EQ(back.lr, c.lr);
  EXPECT_EQ(back.seed, 18446744073709551615ull);
}

TEST(Config, SeedStreamsAreIndependentAndStable) {
  ExperimentConfig a, b;
  b.seed = 1;
  EXPECT_NE(data_seed(a), data_seed(b));
  EXPECT_NE(nst_seed(a, "domain0"), nst_seed(a, "domain1"));
  EXPECT_NE(classifier_seed(a, "domain0"), style_seed(a, "domain0"));
  EXPECT_EQ(data_seed(a), stream_seed(0, "data"));
  EXPECT_EQ(dataset_config(b).seed, data_seed(b));
}

TEST(Config, LoadMissingFile) { EXPECT_THROW(load_config("/nonexistent/x.cfg"), IoError); }

// ---- experiment commands ------------------------------------------------------

TEST(GridSearch, SelectionRules) {
  EXPECT_EQ(select_best({{0.7, 0.35, 50.0, 40.0}}).alpha, 0.7);
  const auto dominant = select_best({{0.6, 0.25, 50, 0}, {0.7, 0.3, 61, 0}, {0.8, 0.45, 55, 0}});
  EXPECT_EQ(dominant.alpha, 0.7);
  EXPECT_EQ(dominant.beta, 0.3);
  const auto tie = select_best({{0.8, 0.3, 60, 0}, {0.6, 0.3, 60, 0}});
  EXPECT_EQ(tie.alpha, 0.6);
  EXPECT_EQ(tie.beta, 0.3);
  const auto beta_tie = select_best({{0.6, 0.4, 60, 0}, {0.6, 0.3, 60, 0}});
  EXPECT_EQ(beta_tie.beta, 0.3);
  EXPECT_THROW(select_best({}), ValidationError);
}

TEST(GridSearch, MakeGrid) {
  EXPECT_EQ(make_grid(0.6, 0.8, 0.05), (std::vector<double>{0.6, 0.65, 0.7, 0.75, 0.8}));
  EXPECT_EQ(make_grid(0.5, 0.5, 0.1), (std::vector<double>{0.5}));
  EXPECT_THROW(make_grid(0.5, 0.4, 0.1), ValidationError);
}

TEST(GridSearch, SingletonGridReturnsItsCell) {
  const ExperimentConfig c = parse_config_string(kTiny);
  NstCache nst;
  DatasetCache data;
  const auto r = cmd_gridsearch(c, {0.6}, {0.3}, 1, nst, data);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.best.alpha, 0.6);
  EXPECT_EQ(r.best.beta, 0.3);
  EXPECT_NE(grid_csv(r).find("0.6,0.3,"), std::string::npos);
}

TEST(Ablate, SingleValueSingleRepeatMatchesRun) {
  const ExperimentConfig c = parse_config_string(kTiny);
  NstCache nst;
  DatasetCache data;
  const auto rows = cmd_ablate(c, "alpha", {c.alpha}, 1, 1, nst, data);
  ASSERT_EQ(rows.size(), 1u);
  const auto report = cmd_run(c, data.get(c), 1, nst);
  EXPECT_EQ(rows[0].mean_test_acc, report.result.mean_test_acc);
  EXPECT_EQ(rows[0].mean_val_acc, report.result.mean_val_acc);
}

TEST(Ablate, KSweepCoversBothStrategies) {
  ExperimentConfig c = parse_config_string(kTiny);
  c.folds = {"domain0"};
  NstCache nst;
  DatasetCache data;
  const auto rows = cmd_ablate(c, "k", {1, 2}, 2, 1, nst, data);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].sampling, "random");
  EXPECT_EQ(rows[2].sampling, "domain-balance");
  EXPECT_EQ(rows[1].seed, c.seed + 1);
  EXPECT_EQ(ablation_csv(rows).substr(0, 20), "sweep,value,sampling");
  EXPECT_THROW(cmd_ablate(c, "k", {1.5}, 1, 1, nst, data), ValidationError);
  EXPECT_THROW(cmd_ablate(c, "beta", {0.5}, 1, 1, nst, data), ValidationError);
}

TEST(Run, SummaryIsDeterministicAndEchoReplays) {
  const ExperimentConfig c = parse_config_string(kTiny);
  NstCache nst;
  const auto data = bench::generate(dataset_config(c));
  const auto a = cmd_run(c, data, 1, nst);
  const auto b = cmd_run(c, data, 2, nst);
  EXPECT_EQ(a.summary, b.summary);
  const ExperimentConfig replay = parse_config_string(a.config_echo);
  EXPECT_EQ(cmd_run(replay, bench::generate(dataset_config(replay)), 1, nst).summary, a.summary);
  const auto j = nlohmann::json::parse(a.summary);
  ASSERT_EQ(j.at("folds").size(), 4u);
  for (const auto& f : j.at("folds")) {
    EXPECT_GE(f.at("test_acc").get<double>(), 0.0);
    EXPECT_LE(f.at("test_acc").get<double>(), 100.0);
  }
}

TEST(Run, NstCachePersistsCheckpoints) {
  ExperimentConfig c = parse_config_string(kTiny);
  c.method = Method::fast;
  c.nst_base_channels = 2;
  c.nst.ae_epochs = 1;
  c.nst.style_epochs = 1;
  c.folds = {"domain1"};
  const auto dir = fs::temp_directory_path() / "fd_nst_cache_test";
  fs::remove_all(dir);
  const auto data = bench::generate(dataset_config(c));
  std::string first;
  {
    NstCache cache(dir);
    first = cmd_run(c, data, 1, cache).summary;
    EXPECT_TRUE(fs::exists(cache.path_for(c, data, 1)));
  }
  NstCache reload(dir);
  EXPECT_EQ(cmd_run(c, data, 1, reload).summary, first);
  fs::remove_all(dir);
}

// ---- command line -------------------------------------------------------------

namespace {

struct Outcome {
  int status = -1;
  std::string output;
};

Outcome fdst(const std::string& args) {
  const std::string cmd = std::string(FDST_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p) != nullptr) o.output += buf.data();
  const int raw = pclose(p);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fd_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json error_line(const std::string& output) {
  const auto start = output.rfind("{\"error\"");
  if (start == std::string::npos) return {};
  return nlohmann::json::parse(output.substr(start, output.find('\n', start) - start));
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  auto o = fdst("");
  EXPECT_EQ(o.status, 2);
  EXPECT_EQ(error_line(o.output).value("error", ""), "usage");
  o = fdst("run --jobs 0");
  EXPECT_EQ(o.status, 2);
  o = fdst("nonsense");
  EXPECT_EQ(o.status, 2);
}

TEST(Cli, ConfigErrorIsMachineParsable) {
  const auto dir = scratch("badcfg");
  write_file(dir / "bad.cfg", "alpha = 1.5\n");
  const auto o = fdst("run --config " + (dir / "bad.cfg").string());
  EXPECT_EQ(o.status, 1);
  const auto j = error_line(o.output);
  EXPECT_EQ(j.value("error", ""), "validation");
  EXPECT_NE(j.value("message", "").find("[0, 1]"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, MissingFilesReportIoErrors) {
  auto o = fdst("scm-verify /nonexistent/model.scm");
  EXPECT_EQ(o.status, 1);
  EXPECT_EQ(error_line(o.output).value("error", ""), "io");
  o = fdst("run --config /nonexistent/x.cfg");
  EXPECT_EQ(o.status, 1);
  EXPECT_EQ(error_line(o.output).value("error", ""), "io");
}

TEST(Cli, ScmVerifyOnReferenceModel) {
  const auto o = fdst(std::string("scm-verify ") + FD_DATA_DIR + "/frontdoor_reference.scm");
  ASSERT_EQ(o.status, 0) << o.output;
  const auto j = nlohmann::json::parse(o.output);
  EXPECT_TRUE(j.at("criterion").at("passed").get<bool>());
  const auto& q1 = j.at("queries").at(1);
  EXPECT_NEAR(q1.at("frontdoor").at(1).get<double>(), 0.7, 1e-12);
  EXPECT_NEAR(q1.at("observational").at(1).get<double>(), 0.84 / 1.1, 1e-12);
  EXPECT_LT(q1.at("frontdoor_tv").get<double>(), 1e-12);
}

TEST(Cli, RunTwiceIsByteIdentical) {
  const auto dir = scratch("run");
  write_file(dir / "tiny.cfg", kTiny);
  const auto a = fdst("run --config " + (dir / "tiny.cfg").string() + " --seed 3 --out " + (dir / "a").string());
  ASSERT_EQ(a.status, 0) << a.output;
  const auto b = fdst("run --config " + (dir / "tiny.cfg").string() + " --seed 3 --out " + (dir / "b").string());
  ASSERT_EQ(b.status, 0) << b.output;
  EXPECT_EQ(read_file(dir / "a" / "summary.json"), read_file(dir / "b" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "run_report.json"));
  // The echoed config replays the run, seed override included.
  const auto c = fdst("run --config " + (dir / "a" / "config.txt").string() + " --out " + (dir / "c").string());
  ASSERT_EQ(c.status, 0) << c.output;
  EXPECT_EQ(read_file(dir / "c" / "summary.json"), read_file(dir / "a" / "summary.json"));
  fs::remove_all(dir);
}

TEST(Cli, DatasetGenWritesFdd) {
  const auto dir = scratch("gen");
  write_file(dir / "tiny.cfg", kTiny);
  const auto o = fdst("dataset gen --config " + (dir / "tiny.cfg").string() + " --out " + (dir / "data").string());
  ASSERT_EQ(o.status, 0) << o.output;
  EXPECT_TRUE(fs::exists(dir / "data" / "manifest.json"));
  const auto data = bench::read_dataset(dir / "data");
  EXPECT_EQ(data.domains.size(), 4u);
  EXPECT_EQ(data.domains[0].train.size(), 4u * 8);
  fs::remove_all(dir);
}
