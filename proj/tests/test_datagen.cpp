#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "wavestiff/datagen.hpp"
#include "wavestiff/error.hpp"

namespace dg = wavestiff::datagen;
namespace fs = std::filesystem;
using wavestiff::Rng;

namespace {

double power(std::span<const double> x) {
  double p = 0;
  for (double v : x) p += v * v;
  return p / static_cast<double>(x.size());
}

wavestiff::head::StiffnessTargets constant_targets(double kp, double kb) {
  return wavestiff::head::StiffnessTargets(dg::kSleepers, {kp, kb});
}

wavestiff::head::StiffnessTargets mid_of(const dg::RangeSet& r) {
  return constant_targets((r.kp_min + r.kp_max) / 2, (r.kb_min + r.kb_max) / 2);
}

std::vector<int> classes(const wavestiff::head::StiffnessTargets& k, const dg::StiffnessRanges& ranges) {
  std::vector<int> c;
  for (const auto& row : k) c.push_back(ranges.classify(row[0], row[1]));
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("wavestiff_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                           "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

TEST(Ranges, ClassifyAndValidate) {
  const dg::StiffnessRanges r;
  EXPECT_NO_THROW(r.validate());
  EXPECT_EQ(r.classify(2.5e8, 1.9e7), 0);
  EXPECT_EQ(r.classify(1.5e8, 1.3e7), 1);
  EXPECT_EQ(r.classify(0.5e8, 0.7e7), 2);
  EXPECT_EQ(r.classify(2.5e8, 0.7e7), -1);
  auto bad = r;
  bad.sets[1].kp_max = 2.5e8;
  EXPECT_THROW(bad.validate(), wavestiff::ConfigError);
}

TEST(ScenarioNames, RoundTrip) {
  for (auto s : dg::kScenarios) EXPECT_EQ(dg::scenario_from_string(dg::to_string(s)), s);
  EXPECT_THROW(dg::scenario_from_string("drop2"), wavestiff::ConfigError);
}

TEST(SignalLength, Examples) {
  const dg::GeneratorConfig c;
  EXPECT_EQ(dg::signal_length(65, c), 665u);
  EXPECT_EQ(dg::signal_length(35, c), 1234u);
  EXPECT_EQ(dg::signal_length(50, c), 864u);
  EXPECT_EQ(dg::signal_length(55, c), 785u);
}

TEST(SampleScenario, UniformSingleSet) {
  const dg::StiffnessRanges ranges;
  Rng rng(1);
  bool saw_r1 = false;
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = classes(dg::sample_scenario(dg::Scenario::kUniform, ranges, rng), ranges);
    EXPECT_TRUE(c[0] == 0 || c[0] == 1);
    for (int v : c) EXPECT_EQ(v, c[0]);
    if (c[0] == 0) {
      saw_r1 = true;
    }
  }
  EXPECT_TRUE(saw_r1);
}

TEST(SampleScenario, DropRunsAreContiguousAndLower) {
  const dg::StiffnessRanges ranges;
  Rng rng(2);
  for (auto [kind, run] : {std::pair{dg::Scenario::kDrop1, 1u}, std::pair{dg::Scenario::kDrop3, 3u}}) {
    std::vector<int> starts(dg::kSleepers, 0);
    for (int trial = 0; trial < 200; ++trial) {
      const auto c = classes(dg::sample_scenario(kind, ranges, rng), ranges);
      const int base = *std::min_element(c.begin(), c.end());
      ASSERT_TRUE(base == 0 || base == 1);
      std::vector<std::size_t> lower;
      for (std::size_t i = 0; i < c.size(); ++i) {
        ASSERT_GE(c[i], 0);
        if (c[i] != base) {
          EXPECT_GT(c[i], base);
          lower.push_back(i);
        }
      }
      ASSERT_EQ(lower.size(), run);
      EXPECT_EQ(lower.back() - lower.front(), run - 1);
      ++starts[lower.front()];
    }
    for (std::size_t i = 0; i + run <= dg::kSleepers; ++i) EXPECT_GT(starts[i], 0) << "start " << i;
  }
}

TEST(SampleScenario, TransitionHalves) {
  const dg::StiffnessRanges ranges;
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = classes(dg::sample_scenario(dg::Scenario::kTransition, ranges, rng), ranges);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(c[i], c[0]);
      EXPECT_EQ(c[5 + i], c[5]);
    }
    EXPECT_NE(c[0], c[5]);
    EXPECT_TRUE(c[0] <= 1 && c[5] <= 1);
  }
}

TEST(EffectiveStiffness, SeriesAndSmoothing) {
  const auto k = constant_targets(2e8, 2e7);
  const std::vector<double> kernel{0.15, 0.70, 0.15};
  for (double v : dg::effective_stiffness(k, kernel)) EXPECT_NEAR(v, 1.0 / (1.0 / 2e8 + 1.0 / 2e7), 1e-6);
  auto dropped = k;
  dropped[4] = {0.5e8, 0.5e7};
  const auto a = dg::effective_stiffness(k, kernel), b = dg::effective_stiffness(dropped, kernel);
  EXPECT_LT(b[3], a[3]);
  EXPECT_LT(b[5], a[5]);
  EXPECT_EQ(b[2], a[2]);
  const std::vector<double> none{0.0, 1.0, 0.0};
  const auto c = dg::effective_stiffness(dropped, none);
  EXPECT_EQ(c[3], dg::effective_stiffness(k, none)[3]);
}

TEST(Synthesize, StiffnessMonotonicity) {
  const dg::GeneratorConfig cfg;
  for (double speed : dg::kSpeedsKmh) {
    double prev = INFINITY;
    for (const auto& set : cfg.ranges.sets) {
      Rng rng(4);
      const double p = power(dg::synthesize_signal(mid_of(set), speed, cfg, rng));
      EXPECT_LT(p, prev) << speed;
      prev = p;
    }
  }
}

TEST(Synthesize, SpeedMonotonicity) {
  const dg::GeneratorConfig cfg;
  const auto k = mid_of(cfg.ranges.sets[1]);
  Rng a(5), b(5);
  const auto slow = dg::synthesize_signal(k, 35, cfg, a), fast = dg::synthesize_signal(k, 65, cfg, b);
  EXPECT_LT(fast.size(), slow.size());
  EXPECT_GT(power(fast), power(slow));
  double prev = 0;
  for (double speed : dg::kSpeedsKmh) {
    Rng rng(6);
    const double p = power(dg::synthesize_signal(k, speed, cfg, rng));
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(Synthesize, NeighbourCoupling) {
  const dg::GeneratorConfig cfg;
  const auto k = mid_of(cfg.ranges.sets[0]);
  auto dropped = k;
  dropped[4] = mid_of(cfg.ranges.sets[2])[0];
  Rng a(7), b(7);
  const auto x = dg::synthesize_signal(k, 50, cfg, a), y = dg::synthesize_signal(dropped, 50, cfg, b);
  const std::size_t per = x.size() / dg::kSleepers;
  for (std::size_t i : {3u, 5u}) {
    const std::span<const double> wx(x.data() + i * per, per), wy(y.data() + i * per, per);
    EXPECT_GT(std::abs(power(wx) - power(wy)) / power(wx), 0.01) << "sleeper " << i;
  }
}

TEST(Synthesize, DeterministicAndValidated) {
  const dg::GeneratorConfig cfg;
  const auto k = mid_of(cfg.ranges.sets[0]);
  Rng a(8), b(8);
  EXPECT_EQ(dg::synthesize_signal(k, 55, cfg, a), dg::synthesize_signal(k, 55, cfg, b));
  EXPECT_THROW(dg::synthesize_signal(k, 0, cfg, a), wavestiff::ConfigError);
  auto bad = k;
  bad[2][1] = 0;
  EXPECT_THROW(dg::synthesize_signal(bad, 50, cfg, a), wavestiff::ConfigError);
  auto slow_rate = cfg;
  slow_rate.sampling_rate = 0.5;
  EXPECT_THROW(dg::synthesize_signal(k, 65, slow_rate, a), wavestiff::ConfigError);
}

TEST(AddNoise, Examples) {
  Rng rng(9);
  const std::vector<double> x{1.0, -2.0, 0.5};
  EXPECT_EQ(dg::add_noise(x, 0.0, rng), x);
  const std::vector<double> zero(100, 0.0);
  EXPECT_EQ(dg::add_noise(zero, 0.1, rng), zero);
  EXPECT_THROW(dg::add_noise(x, 1.0, rng), wavestiff::ConfigError);
  EXPECT_THROW(dg::add_noise(x, -0.1, rng), wavestiff::ConfigError);
}

TEST(AddNoise, VarianceMatchesRatio) {
  Rng rng(10);
  std::vector<double> x(100000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 ? 1.0 : -1.0;
  const auto y = dg::add_noise(x, 0.10, rng);
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mean += y[i] - x[i];
  mean /= static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) var += (y[i] - x[i] - mean) * (y[i] - x[i] - mean);
  var /= static_cast<double>(x.size());
  EXPECT_NEAR(var, 0.10, 0.005);
}

TEST(GenerateSplit, BalancedAndConsistent) {
  const dg::GeneratorConfig cfg;
  const auto records = dg::generate_split(0, 64, cfg, 11);
  std::map<double, int> per_speed;
  std::map<dg::Scenario, int> per_scenario;
  for (const auto& r : records) {
    ++per_speed[r.speed_kmh];
    ++per_scenario[r.scenario];
    EXPECT_EQ(r.signal.size(), dg::signal_length(r.speed_kmh, cfg));
    for (int c : classes(r.targets, cfg.ranges)) EXPECT_GE(c, 0);
  }
  for (double s : dg::kSpeedsKmh) EXPECT_EQ(per_speed[s], 16);
  for (auto s : dg::kScenarios) EXPECT_EQ(per_scenario[s], 16);
  EXPECT_NE(dg::child_seed(11, 0, 3), dg::child_seed(11, 1, 3));
  EXPECT_NE(dg::child_seed(11, 0, 3), dg::child_seed(12, 0, 3));
}

TEST(GenerateDataset, DeterministicFilesAndManifest) {
  const TempDir a("gen_a"), b("gen_b"), c("gen_c");
  const dg::GeneratorConfig cfg;
  const dg::SplitCounts counts{40, 8, 8};
  const auto ma = dg::generate_dataset(counts, cfg, 21, a.path());
  dg::generate_dataset(counts, cfg, 21, b.path());
  dg::generate_dataset(counts, cfg, 22, c.path());
  for (auto name : dg::kSplitNames) {
    const std::string file = std::string(name) + ".jsonl";
    EXPECT_EQ(slurp(a.path() / file), slurp(b.path() / file)) << file;
    EXPECT_NE(slurp(a.path() / file), slurp(c.path() / file)) << file;
    EXPECT_EQ(ma["files"][std::string(name)]["fnv1a64"], dg::file_digest(a.path() / file));
  }
  EXPECT_EQ(ma["counts"]["train"], 40);
  for (const auto& [speed, n] : ma["per_speed"]["train"].items()) EXPECT_EQ(n, 10) << speed;
  EXPECT_EQ(ma["seed"], 21);
  EXPECT_THROW(dg::generate_dataset({0, 1, 1}, cfg, 1, a.path()), wavestiff::ConfigError);
}

TEST(GenerateDataset, DefaultCountsKeepSpeedShare) {
  const dg::SplitCounts counts;
  for (std::size_t n : {counts.train, counts.val, counts.test}) EXPECT_EQ(n % 16, 0u);
}

TEST(Records, RoundTrip) {
  const dg::GeneratorConfig cfg;
  const auto records = dg::generate_split(1, 8, cfg, 31);
  std::stringstream buf;
  dg::write_records(buf, records);
  const auto back = dg::read_records(buf);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(back[i].signal, records[i].signal);
    EXPECT_EQ(back[i].speed_kmh, records[i].speed_kmh);
    EXPECT_EQ(back[i].targets, records[i].targets);
    EXPECT_EQ(back[i].scenario, records[i].scenario);
    EXPECT_EQ(back[i].seed, records[i].seed);
  }
}

TEST(Records, Errors) {
  const dg::GeneratorConfig cfg;
  const auto records = dg::generate_split(2, 2, cfg, 41);
  std::stringstream buf;
  dg::write_records(buf, records);
  std::string text = buf.str();
  text.resize(text.size() - 40);
  std::istringstream truncated(text);
  try {
    dg::read_records(truncated, "data.jsonl");
    FAIL() << "expected a parse error";
  } catch (const wavestiff::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("data.jsonl:2:"), std::string::npos) << e.what();
  }
  std::istringstream empty("");
  EXPECT_TRUE(dg::read_records(empty).empty());
  auto j = dg::record_to_json(records[0]);
  j.erase("speed_kmh");
  std::istringstream missing(j.dump() + "\n");
  EXPECT_THROW(dg::read_records(missing), wavestiff::SchemaError);
  EXPECT_THROW(dg::read_dataset("/nonexistent/file.jsonl"), wavestiff::IoError);
}
