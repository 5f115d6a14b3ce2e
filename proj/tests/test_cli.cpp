#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "support.hpp"
#include "wavestiff/commands.hpp"
#include "wavestiff/config.hpp"
#include "wavestiff/error.hpp"
#include "wavestiff/model.hpp"
#include "wavestiff/params.hpp"
#include "wavestiff/wavelet.hpp"

namespace cmd = wavestiff::commands;
namespace cfg = wavestiff::config;
namespace dg = wavestiff::datagen;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("wavestiff_cli_" + std::string(info->name()) + "_" + tag);
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

cfg::RunConfig small_run(std::uint64_t seed = 3) {
  cfg::RunConfig c;
  c.seed = seed;
  c.counts = {48, 16, 16};
  c.model.block_widths = {4};
  c.model.embed_width = 4;
  c.model.fusion_hidden = 16;
  c.model.head_hidden = 8;
  c.model.dense_hidden = 16;
  c.train.epochs = 3;
  c.train.batch_size = 8;
  cfg::finalize(c);
  return c;
}

}  // namespace

TEST(Config, UnknownKeyAndTypeRejected) {
  cfg::RunConfig c;
  EXPECT_THROW(cfg::apply_json(c, {{"model.colour", 1}}), wavestiff::ConfigError);
  EXPECT_THROW(cfg::apply_json(c, {{"model.levels", "three"}}), wavestiff::ConfigError);
  EXPECT_THROW(cfg::apply_value(c, "train.nonsense", "1"), wavestiff::ConfigError);
  EXPECT_THROW(cfg::apply_value(c, "train.epochs", "many"), wavestiff::ConfigError);
}

TEST(Config, ResolvedDumpCoversEveryKey) {
  cfg::RunConfig c;
  const auto j = cfg::resolved_json(c);
  for (const auto& k : cfg::keys()) EXPECT_TRUE(j.contains(k.key)) << k.key;
  cfg::RunConfig back;
  cfg::apply_json(back, j);
  EXPECT_EQ(cfg::resolved_json(back), j);
}

TEST(Config, ValuesAndLists) {
  cfg::RunConfig c;
  cfg::apply_value(c, "model.block_widths", "8,16,4");
  EXPECT_EQ(c.model.block_widths, (std::vector<std::size_t>{8, 16, 4}));
  cfg::apply_value(c, "model.block_widths", "[2, 2]");
  EXPECT_EQ(c.model.block_widths, (std::vector<std::size_t>{2, 2}));
  cfg::apply_value(c, "model.head", "lstm");
  EXPECT_EQ(c.model.head, wavestiff::head::HeadVariant::kLstm);
  cfg::apply_value(c, "model.learnable_stem", "false");
  EXPECT_FALSE(c.model.learnable_stem);
  cfg::apply_value(c, "train.learning_rate", "5e-4");
  EXPECT_EQ(c.train.learning_rate, 5e-4);
  cfg::apply_value(c, "model.levels", "0");
  EXPECT_THROW(cfg::finalize(c), wavestiff::ConfigError);
}

TEST(Config, FileThenFlagPrecedenceAndSeedPropagation) {
  const TempDir dir("cfg");
  cfg::write_json_file(dir.path() / "c.json", {{"train.epochs", 7}, {"seed", 11}});
  cfg::RunConfig c;
  cfg::apply_json(c, cfg::load_json_file(dir.path() / "c.json"));
  cfg::apply_value(c, "train.epochs", "9");
  cfg::finalize(c);
  EXPECT_EQ(c.train.epochs, 9u);
  EXPECT_EQ(c.train.seed, 11u);
  std::ofstream(dir.path() / "broken.json") << "{\"seed\": ";
  EXPECT_THROW(cfg::load_json_file(dir.path() / "broken.json"), wavestiff::ParseError);
  EXPECT_THROW(cfg::load_json_file(dir.path() / "missing.json"), wavestiff::IoError);
}

TEST(Config, SeedFromEnvironment) {
  std::uint64_t seed = 1;
  ::unsetenv("WAVESTIFF_SEED");
  EXPECT_FALSE(cfg::seed_from_env(seed));
  EXPECT_EQ(seed, 1u);
  ::setenv("WAVESTIFF_SEED", "42", 1);
  EXPECT_TRUE(cfg::seed_from_env(seed));
  EXPECT_EQ(seed, 42u);
  ::setenv("WAVESTIFF_SEED", "4x2", 1);
  EXPECT_THROW(cfg::seed_from_env(seed), wavestiff::ConfigError);
  ::unsetenv("WAVESTIFF_SEED");
}

TEST(Config, ParseCounts) {
  const auto c = cfg::parse_counts("100/20/24");
  EXPECT_EQ(c.train, 100u);
  EXPECT_EQ(c.val, 20u);
  EXPECT_EQ(c.test, 24u);
  EXPECT_THROW(cfg::parse_counts("100/20"), wavestiff::ConfigError);
  EXPECT_THROW(cfg::parse_counts("a/b/c"), wavestiff::ConfigError);
  EXPECT_THROW(cfg::parse_counts("0/1/1"), wavestiff::ConfigError);
}

TEST(Gen, ManifestAndReproducibility) {
  const TempDir a("a"), b("b");
  std::ostringstream log;
  const auto run = small_run();
  ASSERT_EQ(cmd::cmd_gen(run, {a.path()}, log), cmd::kOk);
  ASSERT_EQ(cmd::cmd_gen(run, {b.path()}, log), cmd::kOk);
  const auto manifest = cfg::load_json_file(a.path() / "manifest.json");
  EXPECT_EQ(manifest["counts"]["train"], 48);
  EXPECT_EQ(manifest["counts"]["val"], 16);
  EXPECT_EQ(manifest["files"]["train"]["fnv1a64"], cfg::load_json_file(b.path() / "manifest.json")["files"]["train"]["fnv1a64"]);
  EXPECT_EQ(slurp(a.path() / "test.jsonl"), slurp(b.path() / "test.jsonl"));
  EXPECT_TRUE(fs::exists(a.path() / "config.json"));
  EXPECT_EQ(dg::read_dataset(a.path() / "val.jsonl").size(), 16u);
}

class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "wavestiff_cli_trained";
    fs::remove_all(root_);
    std::ostringstream log;
    run_ = small_run();
    ASSERT_EQ(cmd::cmd_gen(run_, {root_ / "data"}, log), cmd::kOk);
    const auto start = std::chrono::steady_clock::now();
    ASSERT_EQ(cmd::cmd_train(run_, {root_ / "data", root_ / "run", true}, log), cmd::kOk);
    train_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static inline fs::path root_;
  static inline cfg::RunConfig run_;
  static inline double train_seconds_ = 0;
};

TEST_F(TrainedRun, Artifacts) {
  EXPECT_LT(train_seconds_, 120.0);
  for (const char* f : {"checkpoint.wibl", "train_log.csv", "config.json", "summary.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  }
  EXPECT_EQ(lines(slurp(root_ / "run" / "train_log.csv")).size(), 1 + run_.train.epochs);
  const auto summary = cfg::load_json_file(root_ / "run" / "summary.json");
  EXPECT_EQ(summary["epochs_run"], run_.train.epochs);
  EXPECT_FALSE(summary["diverged"].get<bool>());
}

TEST_F(TrainedRun, EvalReproducesValidationLoss) {
  const TempDir out("eval");
  std::ostringstream log;
  ASSERT_EQ(cmd::cmd_eval({{root_ / "run" / "checkpoint.wibl"}, root_ / "data" / "val.jsonl", out.path()}, log),
            cmd::kOk);
  const auto csv = lines(slurp(out.path() / "metrics.csv"));
  ASSERT_FALSE(csv.empty());
  EXPECT_EQ(csv[0], "scenario,kp_rmse,kp_mape,kb_rmse,kb_mape,overall_mape");
  EXPECT_EQ(csv.back().substr(0, 4), "all,");
  const auto metrics = cfg::load_json_file(out.path() / "metrics.json");
  const auto summary = cfg::load_json_file(root_ / "run" / "summary.json");
  EXPECT_NEAR(metrics["normalized_mse"].get<double>(), summary["best_val_loss"].get<double>(), 1e-9);
  EXPECT_GT(metrics["overall_mape"].get<double>(), 0.0);
}

TEST_F(TrainedRun, PredictTenPositiveDeterministic) {
  std::ostringstream a, b, log;
  const cmd::PredictOptions opts{{root_ / "run" / "checkpoint.wibl"}, root_ / "data" / "test.jsonl", 3, {}};
  ASSERT_EQ(cmd::cmd_predict(opts, a, log), cmd::kOk);
  ASSERT_EQ(cmd::cmd_predict(opts, b, log), cmd::kOk);
  EXPECT_EQ(a.str(), b.str());
  const auto j = nlohmann::json::parse(a.str());
  EXPECT_EQ(j["unit"], "N/m");
  ASSERT_EQ(j["sleepers"].size(), 10u);
  for (const auto& s : j["sleepers"]) {
    EXPECT_GT(s["k_p"].get<double>(), 0.0);
    EXPECT_GT(s["k_b"].get<double>(), 0.0);
  }
  cmd::PredictOptions bad = opts;
  bad.index = 1000;
  EXPECT_THROW(cmd::cmd_predict(bad, a, log), wavestiff::Error);
}

TEST_F(TrainedRun, ExportFiltersWithDrift) {
  const TempDir out("filters");
  std::ostringstream log;
  const int code = cmd::cmd_export_filters({{root_ / "run" / "checkpoint.wibl"}, out.path()}, log);
  EXPECT_TRUE(code == cmd::kOk || code == cmd::kFailure);
  const auto filters = lines(slurp(out.path() / "filters.csv"));
  EXPECT_EQ(filters.size(), 1u + 28u);
  const auto drift = lines(slurp(out.path() / "filter_drift.csv"));
  EXPECT_EQ(drift[0], "level,node,branch,initial_norm,trained_norm,norm_ratio,max_abs_change");
  EXPECT_EQ(drift.size(), 1u + 14u);
}

TEST(Train, LstmHeadVariant) {
  const TempDir dir("lstm");
  std::ostringstream log;
  auto run = small_run(5);
  run.counts = {16, 8, 8};
  run.train.epochs = 2;
  run.model.head = wavestiff::head::HeadVariant::kLstm;
  ASSERT_EQ(cmd::cmd_gen(run, {dir.path() / "data"}, log), cmd::kOk);
  ASSERT_EQ(cmd::cmd_train(run, {dir.path() / "data", dir.path() / "run", true}, log), cmd::kOk);
  const auto params = wavestiff::load_checkpoint(dir.path() / "run" / "checkpoint.wibl");
  EXPECT_EQ(wavestiff::infer_config(params).head, wavestiff::head::HeadVariant::kLstm);
  EXPECT_THROW(cmd::cmd_train(run, {dir.path() / "nowhere", dir.path() / "run2", true}, log), wavestiff::Error);
}

TEST(Eval, ConstantModelOnMatchingTargetsScoresZero) {
  const TempDir dir("const");
  auto run = small_run();
  wavestiff::Model model(run.model, 1);
  auto& dense = model.head().dense;
  for (auto& w : dense.w2.mutable_data()) w = 0.0;
  auto b = dense.b2.mutable_data();
  b[0] = 2.5;
  b[1] = 1.9;
  wavestiff::save_checkpoint(dir.path() / "model.wibl", model.parameters());
  auto records = dg::generate_split(2, 8, run.generator, 4);
  for (auto& r : records) r.targets.assign(dg::kSleepers, {2.5e8, 1.9e7});
  dg::write_dataset(dir.path() / "const.jsonl", records);
  std::ostringstream log;
  ASSERT_EQ(cmd::cmd_eval({{dir.path() / "model.wibl"}, dir.path() / "const.jsonl", dir.path() / "out"}, log),
            cmd::kOk);
  const auto metrics = cfg::load_json_file(dir.path() / "out" / "metrics.json");
  EXPECT_NEAR(metrics["overall_mape"].get<double>(), 0.0, 1e-12);
  EXPECT_NEAR(metrics["normalized_mse"].get<double>(), 0.0, 1e-24);
  for (const auto& row : metrics["rows"]) {
    EXPECT_NEAR(row["kp_rmse"].get<double>(), 0.0, 1e-6);
    EXPECT_NEAR(row["kb_rmse"].get<double>(), 0.0, 1e-6);
  }
}

TEST(Decompose, ConstantSignalAndHandCase) {
  const TempDir dir("dec");
  std::ofstream(dir.path() / "const.txt") << "1 1 1 1 1 1 1 1 1 1 1 1 1 1 1 1\n";
  std::ostringstream out, log;
  cmd::DecomposeOptions opts;
  opts.signal = dir.path() / "const.txt";
  opts.levels = 1;
  opts.boundary = wavestiff::wavelet::Boundary::kCircular;
  ASSERT_EQ(cmd::cmd_decompose(opts, out, log), cmd::kOk);
  const auto rows = lines(out.str());
  ASSERT_EQ(rows.size(), 1u + 16u);
  EXPECT_EQ(rows[0], "subband_index,time_index,value");
  for (std::size_t i = 9; i < rows.size(); ++i) EXPECT_EQ(rows[i].substr(rows[i].rfind(',') + 1), "0") << rows[i];

  std::ofstream(dir.path() / "hand.json") << "[1, 2, 3, 4]";
  std::ostringstream hand;
  opts.signal = dir.path() / "hand.json";
  opts.unnormalized = true;
  opts.boundary = wavestiff::wavelet::Boundary::kZero;
  ASSERT_EQ(cmd::cmd_decompose(opts, hand, log), cmd::kOk);
  EXPECT_EQ(lines(hand.str()), (std::vector<std::string>{"subband_index,time_index,value", "0,0,3", "0,1,7",
                                                          "1,0,-1", "1,1,-1"}));
  opts.wavelet = "db4";
  EXPECT_THROW(cmd::cmd_decompose(opts, hand, log), wavestiff::ConfigError);
}

TEST(Decompose, MatchesLibraryOnRecord) {
  const TempDir dir("rec");
  const auto records = dg::generate_split(0, 2, dg::GeneratorConfig{}, 6);
  dg::write_dataset(dir.path() / "r.jsonl", records);
  std::ostringstream out, log;
  cmd::DecomposeOptions opts;
  opts.signal = dir.path() / "r.jsonl";
  opts.index = 1;
  opts.wavelet = "db4";
  ASSERT_EQ(cmd::cmd_decompose(opts, out, log), cmd::kOk);
  const auto expect = wavestiff::wavelet::wpt_decompose(records[1].signal, wavestiff::wavelet::db4_filters(), 3,
                                                        wavestiff::wavelet::Boundary::kZero);
  const auto rows = lines(out.str());
  ASSERT_EQ(rows.size(), 1 + expect.numel());
  const auto data = expect.data();
  for (std::size_t i = 0; i < expect.numel(); ++i) {
    EXPECT_EQ(std::stod(rows[1 + i].substr(rows[1 + i].rfind(',') + 1)), data[i]) << i;
  }
  EXPECT_EQ(cmd::read_signal(dir.path() / "r.jsonl", 1), records[1].signal);
  EXPECT_THROW(cmd::read_signal(dir.path() / "r.jsonl", 2), wavestiff::Error);
}

TEST(Gradcheck, SuitePassesAndCorruptionFails) {
  const TempDir dir("gc");
  std::ostringstream out;
  EXPECT_EQ(cmd::cmd_gradcheck({7, false, dir.path() / "report.csv"}, out), cmd::kOk);
  const auto report = lines(slurp(dir.path() / "report.csv"));
  EXPECT_EQ(report[0], "operation,max_rel_error,elements_checked,passed");
  EXPECT_GE(report.size(), 1u + 8u);
  for (std::size_t i = 1; i < report.size(); ++i) EXPECT_EQ(report[i].substr(report[i].rfind(',') + 1), "true");
  std::ostringstream bad;
  EXPECT_EQ(cmd::cmd_gradcheck({7, true, {}}, bad), cmd::kFailure);
  EXPECT_NE(bad.str().find("FAIL corrupted_square"), std::string::npos);
}

TEST(FilterDrift, UntrainedStemHasUnitRatios) {
  const wavestiff::wavelet::LwptStem stem(3, wavestiff::wavelet::haar_filters(true), true);
  const auto rows = cmd::filter_drift(stem);
  EXPECT_EQ(rows.size(), 14u);
  for (const auto& r : rows) {
    EXPECT_DOUBLE_EQ(r.ratio, 1.0);
    EXPECT_EQ(r.max_abs_change, 0.0);
  }
}
