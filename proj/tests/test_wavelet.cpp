#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "wavestiff/error.hpp"
#include "wavestiff/training.hpp"
#include "wavestiff/wavelet.hpp"

namespace ad = wavestiff::ad;
namespace wv = wavestiff::wavelet;
using ad::Tensor;
using testing_support::to_vector;
using testing_support::uniform;
using wavestiff::Rng;
using wv::Boundary;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

double energy(std::span<const double> x) {
  double e = 0;
  for (double v : x) e += v * v;
  return e;
}

// Plain recursion over dwt_step, rows in (low, high) child order.
std::vector<std::vector<double>> cascade(const std::vector<double>& x, const wv::FilterPair& f, std::size_t levels,
                                         Boundary b) {
  std::vector<std::vector<double>> nodes{x};
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<std::vector<double>> next;
    for (const auto& n : nodes) {
      auto out = wv::dwt_step(n, f, b);
      next.push_back(std::move(out.low));
      next.push_back(std::move(out.high));
    }
    nodes = std::move(next);
  }
  return nodes;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

}  // namespace

TEST(Filters, HaarUnnormalized) {
  const auto f = wv::haar_filters(false);
  EXPECT_EQ(f.low, (std::vector<double>{1, 1}));
  EXPECT_EQ(f.high, (std::vector<double>{1, -1}));
}

TEST(Filters, HaarNormalizedIsOrthonormal) {
  const auto f = wv::haar_filters(true);
  EXPECT_NEAR(energy(f.low), 1.0, 1e-15);
  EXPECT_NEAR(std::inner_product(f.low.begin(), f.low.end(), f.high.begin(), 0.0), 0.0, 1e-15);
  EXPECT_LT(wv::orthonormality_defect(f), 1e-10);
}

TEST(Filters, Db4Properties) {
  const auto f = wv::db4_filters();
  EXPECT_EQ(f.length(), 8u);
  EXPECT_NEAR(energy(f.low), 1.0, 1e-10);
  EXPECT_NEAR(std::accumulate(f.low.begin(), f.low.end(), 0.0), std::sqrt(2.0), 1e-10);
  EXPECT_NEAR(std::inner_product(f.low.begin(), f.low.end(), f.high.begin(), 0.0), 0.0, 1e-12);
  EXPECT_LT(wv::orthonormality_defect(f), 1e-10);
}

TEST(Filters, ByNameAndValidation) {
  EXPECT_EQ(wv::filters_by_name("haar").low, wv::haar_filters(true).low);
  EXPECT_EQ(wv::filters_by_name("db4").low, wv::db4_filters().low);
  EXPECT_THROW(wv::filters_by_name("sym5"), wavestiff::ConfigError);
  EXPECT_THROW(wv::validate({"odd", {1, 2, 3}, {1, 2, 3}}), wavestiff::ConfigError);
  EXPECT_THROW(wv::validate({"mismatch", {1, 2}, {1, 2, 3, 4}}), wavestiff::ConfigError);
}

TEST(DwtStep, HandCases) {
  const auto raw = wv::haar_filters(false);
  auto c = wv::dwt_step(std::vector<double>{1, 1, 1, 1}, raw, Boundary::kZero);
  EXPECT_EQ(c.low, (std::vector<double>{2, 2}));
  EXPECT_EQ(c.high, (std::vector<double>{0, 0}));
  auto r = wv::dwt_step(std::vector<double>{1, 2, 3, 4}, raw, Boundary::kZero);
  EXPECT_EQ(r.low, (std::vector<double>{3, 7}));
  EXPECT_EQ(r.high, (std::vector<double>{-1, -1}));
}

TEST(DwtStep, MatchesDirectSum) {
  const auto f = wv::db4_filters();
  const auto x = random_signal(40, 3);
  const auto out = wv::dwt_step(x, f, Boundary::kCircular);
  for (std::size_t n = 0; n < 20; ++n) {
    double lo = 0, hi = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      lo += f.low[j] * x[(2 * n + j) % 40];
      hi += f.high[j] * x[(2 * n + j) % 40];
    }
    EXPECT_NEAR(out.low[n], lo, 1e-14);
    EXPECT_NEAR(out.high[n], hi, 1e-14);
  }
}

TEST(DwtStep, OddLengthZeroBoundaryRoundsUp) {
  const auto out = wv::dwt_step(std::vector<double>{1, 2, 3, 4, 5}, wv::haar_filters(false), Boundary::kZero);
  EXPECT_EQ(out.low, (std::vector<double>{3, 7, 5}));
  EXPECT_EQ(out.high, (std::vector<double>{-1, -1, 5}));
  EXPECT_THROW(wv::dwt_step(std::vector<double>{1, 2, 3}, wv::haar_filters(true), Boundary::kCircular),
               wavestiff::InputError);
}

TEST(DwtStep, HaarCircularConservesEnergy) {
  const auto x = random_signal(64, 9);
  const auto out = wv::dwt_step(x, wv::haar_filters(true), Boundary::kCircular);
  EXPECT_NEAR(energy(out.low) + energy(out.high), energy(x), 1e-12 * energy(x));
}

TEST(WptDecompose, SingleLevelEqualsDwtStep) {
  const auto x = random_signal(16, 1);
  const auto f = wv::haar_filters(true);
  const Tensor bands = wv::wpt_decompose(x, f, 1, Boundary::kZero);
  const auto step = wv::dwt_step(x, f, Boundary::kZero);
  EXPECT_EQ(bands.shape(), (ad::Shape{2, 8}));
  EXPECT_EQ(to_vector(bands), flatten({step.low, step.high}));
}

TEST(WptDecompose, BitExactAgainstRecursiveCascade) {
  for (const char* name : {"haar", "db4"}) {
    const auto f = wv::filters_by_name(name);
    for (std::size_t levels : {1u, 2u, 3u}) {
      for (std::size_t n : {8u, 64u, 256u}) {
        for (Boundary b : {Boundary::kZero, Boundary::kCircular}) {
          if (b == Boundary::kZero && (n >> (levels - 1)) < f.length()) continue;  // too short to filter
          const auto x = random_signal(n, n + levels);
          const Tensor bands = wv::wpt_decompose(x, f, levels, b);
          EXPECT_EQ(bands.shape(), (ad::Shape{std::size_t{1} << levels, n >> levels}));
          EXPECT_EQ(to_vector(bands), flatten(cascade(x, f, levels, b)))
              << name << " L=" << levels << " T=" << n << " " << wv::to_string(b);
        }
      }
    }
  }
}

TEST(WptDecompose, ParsevalOrthonormalCircular) {
  for (const char* name : {"haar", "db4"}) {
    for (std::size_t levels : {1u, 2u, 3u, 4u}) {
      const auto x = random_signal(256, 40 + levels);
      const Tensor bands = wv::wpt_decompose(x, wv::filters_by_name(name), levels, Boundary::kCircular);
      EXPECT_LT(std::abs(energy(bands.data()) - energy(x)) / energy(x), 1e-10) << name << " L=" << levels;
    }
  }
}

TEST(WptReconstruct, PerfectReconstruction) {
  for (const char* name : {"haar", "db4"}) {
    const auto f = wv::filters_by_name(name);
    for (std::size_t levels : {1u, 2u, 3u}) {
      for (std::size_t n : {16u, 64u, 256u}) {
        const auto x = random_signal(n, n * 3 + levels);
        const auto back = wv::wpt_reconstruct(wv::wpt_decompose(x, f, levels, Boundary::kCircular), f);
        EXPECT_LT(testing_support::max_abs_diff(back, x), 1e-8) << name << " L=" << levels << " T=" << n;
      }
    }
  }
}

TEST(WptReconstruct, ZeroSubbandsGiveZeroSignal) {
  const auto back = wv::wpt_reconstruct(Tensor::zeros({8, 4}), wv::db4_filters());
  EXPECT_EQ(back, std::vector<double>(32, 0.0));
}

TEST(WptReconstruct, RejectsNonPowerOfTwoBands) {
  EXPECT_THROW(wv::wpt_reconstruct(Tensor::zeros({3, 4}), wv::haar_filters(true)), wavestiff::DimensionError);
}

TEST(LwptStem, InitializedFiltersEqualPair) {
  wv::LwptStem stem(3, wv::db4_filters(), true);
  const auto f = wv::db4_filters();
  for (std::size_t l = 1; l <= 3; ++l) {
    for (std::size_t n = 0; n < (std::size_t{1} << (l - 1)); ++n) {
      const auto d = to_vector(stem.filter(l, n));
      EXPECT_EQ(std::vector<double>(d.begin(), d.begin() + 8), f.low);
      EXPECT_EQ(std::vector<double>(d.begin() + 8, d.end()), f.high);
    }
  }
  EXPECT_EQ(stem.named_parameters().size(), 7u);
  EXPECT_EQ(stem.output_channels(), 8u);
}

TEST(LwptStem, InitialForwardBitExactAgainstCascade) {
  for (const char* name : {"haar", "db4"}) {
    for (std::size_t levels : {1u, 2u, 3u}) {
      for (Boundary b : {Boundary::kZero, Boundary::kCircular}) {
        wv::LwptStem stem(levels, wv::filters_by_name(name), true, b);
        const auto x = random_signal(128, levels * 17);
        const Tensor out = stem.forward(Tensor::from({1, 128}, x));
        EXPECT_EQ(to_vector(out), to_vector(wv::wpt_decompose(x, wv::filters_by_name(name), levels, b)));
      }
    }
  }
}

TEST(LwptStem, BatchedForwardMatchesPerRow) {
  wv::LwptStem stem(2, wv::db4_filters(), true);
  const auto a = random_signal(32, 1), b = random_signal(32, 2);
  std::vector<double> both(a);
  both.insert(both.end(), b.begin(), b.end());
  const Tensor batch = stem.forward(Tensor::from({2, 1, 32}, both));
  const auto ra = to_vector(stem.forward(Tensor::from({32}, a)));
  const auto rb = to_vector(stem.forward(Tensor::from({32}, b)));
  std::vector<double> expect(ra);
  expect.insert(expect.end(), rb.begin(), rb.end());
  EXPECT_EQ(to_vector(batch), expect);
}

TEST(LwptStem, FrozenStemHasNoFilterGradients) {
  wv::LwptStem stem(2, wv::haar_filters(true), false);
  Tensor x = Tensor::from({1, 16}, random_signal(16, 4), true);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  tape.backward(ad::sum(ad::mul(stem.forward(x), stem.forward(x))));
  for (const auto& [name, t] : stem.named_parameters()) {
    EXPECT_FALSE(t.requires_grad()) << name;
    for (double g : t.grad()) EXPECT_EQ(g, 0.0);
  }
  double gx = 0;
  for (double g : x.grad()) gx += std::abs(g);
  EXPECT_GT(gx, 0.0);
}

TEST(LwptStem, OneStepChangesLearnableFilters) {
  wv::LwptStem stem(2, wv::haar_filters(true), true);
  std::vector<wavestiff::NamedTensor> params;
  for (const auto& [name, t] : stem.named_parameters()) params.push_back({name, t});
  {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const Tensor out = stem.forward(Tensor::from({1, 16}, random_signal(16, 5)));
    tape.backward(ad::mse_loss(out, Tensor::zeros(out.shape())));
  }
  wavestiff::training::AdamState state;
  wavestiff::training::adam_step(params, state, 1e-2);
  bool changed = false;
  for (const auto& [name, t] : stem.named_parameters()) {
    const auto f0 = wv::haar_filters(true);
    const auto d = to_vector(t);
    for (std::size_t j = 0; j < 2; ++j) changed |= d[j] != f0.low[j] || d[2 + j] != f0.high[j];
  }
  EXPECT_TRUE(changed);
}

TEST(LwptStem, TrailingPadStability) {
  for (const char* name : {"haar", "db4"}) {
    wv::LwptStem stem(3, wv::filters_by_name(name), true);
    const std::size_t valid = 101;
    const auto x = random_signal(valid, 8);
    const std::size_t k = stem.filter_length();
    const std::size_t expected = stem.valid_steps(valid);
    EXPECT_EQ(expected, (valid - 1 - (k - 1) * 7) / 8 + 1);
    EXPECT_GE(expected, (valid - (k - 1) * 7) / 8);
    auto run = [&](std::size_t extra) {
      std::vector<double> padded(x);
      padded.resize(valid + extra, 0.0);
      return to_vector(stem.forward(Tensor::from({padded.size()}, padded)));
    };
    const auto base = run(3);
    const std::size_t cols = (valid + 3 + 7) / 8;
    for (std::size_t extra : {11u, 27u, 203u}) {
      const auto other = run(extra);
      const std::size_t other_cols = (valid + extra + 7) / 8;
      for (std::size_t r = 0; r < 8; ++r) {
        for (std::size_t c = 0; c < expected; ++c) {
          ASSERT_EQ(base[r * cols + c], other[r * other_cols + c]) << name << " extra " << extra;
        }
      }
    }
  }
}

TEST(LwptStem, GradientMatchesFiniteDifferences) {
  for (std::size_t shape = 0; shape < 3; ++shape) {
    const auto r = testing_support::check(
        [&](Rng& rng) {
          wv::LwptStem stem(1 + shape, shape == 1 ? wv::db4_filters() : wv::haar_filters(true), true,
                            shape == 2 ? Boundary::kCircular : Boundary::kZero);
          Tensor x = uniform({2, 1, 24 + 8 * shape}, -1, 1, rng, true);
          std::vector<Tensor> params{x};
          for (const auto& [_, t] : stem.named_parameters()) params.push_back(t);
          auto stem_ptr = std::make_shared<wv::LwptStem>(stem);
          return testing_support::Probe{testing_support::weighted([=] { return stem_ptr->forward(x); }, rng),
                                        params};
        },
        shape);
    EXPECT_LT(r.max_rel_error, 1e-4) << "shape " << shape;
  }
}

TEST(FilterExport, UntrainedHaarCoefficients) {
  wv::LwptStem stem(3, wv::haar_filters(true), true);
  const auto rows = wv::export_filter_distribution(stem);
  // One low and one high filter of K taps at every node of every level.
  EXPECT_EQ(rows.size(), (1u + 2u + 4u) * 2u * 2u);
  for (const auto& r : rows) EXPECT_DOUBLE_EQ(std::abs(r.value), 1.0 / std::sqrt(2.0));
  std::ostringstream csv;
  wv::write_filter_csv(csv, rows);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "level,node,branch,tap_index,value");
}

TEST(FilterExport, TrainedStemKeepsRowCountChangesValues) {
  wv::LwptStem stem(2, wv::db4_filters(), true);
  const auto before = wv::export_filter_distribution(stem);
  stem.filter(1, 0).mutable_data()[3] += 0.01;
  const auto after = wv::export_filter_distribution(stem);
  ASSERT_EQ(before.size(), after.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < before.size(); ++i) changed += before[i].value != after[i].value;
  EXPECT_EQ(changed, 1u);
}
