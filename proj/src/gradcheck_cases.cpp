#include <algorithm>
#include <array>
#include <random>

#include "wavestiff/error.hpp"
#include "wavestiff/fusion.hpp"
#include "wavestiff/gradcheck.hpp"
#include "wavestiff/head.hpp"
#include "wavestiff/inception.hpp"
#include "wavestiff/init.hpp"
#include "wavestiff/model.hpp"
#include "wavestiff/ops.hpp"
#include "wavestiff/recurrent.hpp"
#include "wavestiff/wavelet.hpp"

namespace wavestiff::gradcheck {

using ad::Tensor;

namespace {

Tensor uniform(ad::Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

// sum(out * w) with a fixed random w in [0.5, 1.5].
std::function<Tensor()> weighted(std::function<Tensor()> body, Rng& rng) {
  std::uniform_real_distribution<double> d(0.5, 1.5);
  auto w = std::make_shared<Tensor>();
  auto rng_copy = std::make_shared<Rng>(rng());
  return [body = std::move(body), w, rng_copy, d]() mutable {
    Tensor out = body();
    if (!w->defined()) {
      std::vector<double> v(out.numel());
      for (auto& x : v) x = d(*rng_copy);
      *w = Tensor::from(out.shape(), std::move(v));
    }
    return ad::sum(ad::mul(out, *w));
  };
}

void append(std::vector<Tensor>& dst, const std::vector<std::pair<std::string, Tensor>>& named) {
  for (const auto& [_, t] : named) dst.push_back(t);
}

// Distance kept between finite-difference probes and relu or max-pool kinks.
constexpr double kKinkMargin = 1e-2;

std::uint64_t derive(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(attempt)};
  std::array<std::uint32_t, 2> w{};
  seq.generate(w.begin(), w.end());
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

Case build(std::uint64_t seed, std::uint64_t index, const std::function<Case(Rng&)>& make) {
  Rng rng(derive(seed, index, 0));
  return make(rng);
}

// Redraws the case until no kink lies within kKinkMargin of the evaluation point.
Case clear_of_kinks(std::uint64_t seed, std::uint64_t index, const std::function<Case(Rng&)>& make) {
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    Rng rng(derive(seed, index, attempt));
    Case c = make(rng);
    ad::KinkProbe probe;
    {
      ad::NoGradScope no_grad;
      c.loss();
    }
    if (probe.min_gap() > kKinkMargin) return c;
  }
  throw ContractError("gradient check: no kink-free draw found");
}

}  // namespace

std::vector<Case> standard_cases(std::uint64_t seed) {
  std::vector<Case> cases;
  std::uint64_t index = 0;
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({2, 4, 12}, -1, 1, rng), w = uniform({6, 2, 3}, -1, 1, rng), b = uniform({6}, -1, 1, rng);
    return Case{"conv1d", weighted([=] { return ad::conv1d(x, w, b, 2, 2, 2); }, rng), {x, w, b}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({2, 4, 11}, -1, 1, rng), w = uniform({5, 4, 5}, -1, 1, rng), b = uniform({5}, -1, 1, rng);
    return Case{"conv1d.im2col", weighted([=] { return ad::conv1d(x, w, b, 1, 4); }, rng), {x, w, b}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({3, 5}, -1, 1, rng), w = uniform({5, 4}, -1, 1, rng), b = uniform({4}, -1, 1, rng);
    return Case{"linear", weighted([=] { return ad::linear(x, w, b); }, rng), {x, w, b}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({4, 5}, -3, 3, rng);
    return Case{"sigmoid", weighted([=] { return ad::sigmoid(x); }, rng), {x}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({4, 5}, -2, 2, rng);
    return Case{"tanh", weighted([=] { return ad::tanh(x); }, rng), {x}};
  }));
  cases.push_back(clear_of_kinks(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({4, 5}, -1, 1, rng);
    return Case{"relu", weighted([=] { return ad::relu(x); }, rng), {x}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor a = uniform({3, 4}, -1, 1, rng), b = uniform({3, 4}, -1, 1, rng);
    return Case{"add.sub.mul.scale",
                     weighted([=] { return ad::scale(ad::mul(ad::add(a, b), ad::sub(a, b)), 0.7); }, rng),
                     {a, b}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({2, 3, 4}, -1, 1, rng), y = uniform({2, 2, 4}, -1, 1, rng);
    return Case{"concat.narrow.permute.take",
                     weighted(
                         [=] {
                           Tensor c = ad::concat({x, y}, 1);                // [2, 5, 4]
                           Tensor n = ad::narrow(c, 2, 1, 3);               // [2, 5, 3]
                           Tensor p = ad::permute(n, {2, 0, 1});            // [3, 2, 5]
                           return ad::take(p, 2, {4, 0, 0, 2});             // [3, 2, 4]
                         },
                         rng),
                     {x, y}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({2, 3}, -1, 1, rng), seq = uniform({6, 2, 3}, -1, 1, rng);
    return Case{"repeat_steps.gather_steps",
                     weighted(
                         [=] {
                           Tensor r = ad::add(ad::repeat_steps(x, 6), seq);
                           return ad::gather_steps(r, {{0, 2, 5}, {1, 1, 4}});
                         },
                         rng),
                     {x, seq}};
  }));
  cases.push_back(clear_of_kinks(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({2, 3, 9}, -1, 1, rng);
    return Case{"max_pool1d", weighted([=] { return ad::max_pool1d(x, 3); }, rng), {x}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor x = uniform({5, 6}, -1, 1, rng);
    return Case{"dropout", weighted([=] { return ad::dropout(x, 0.3, true, 11); }, rng), {x}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    Tensor p = uniform({4, 3}, -1, 1, rng), t = uniform({4, 3}, -1, 1, rng);
    return Case{"mse_loss", [=] { return ad::mse_loss(p, t); }, {p, t}};
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    auto params = recurrent::LstmParams::init(3, 4, rng);
    Tensor x = uniform({2, 3}, -1, 1, rng), h = uniform({2, 4}, -1, 1, rng), c = uniform({2, 4}, -1, 1, rng);
    Case k{"lstm_cell", weighted(
                            [=] {
                              auto s = recurrent::lstm_cell_step(x, h, c, params);
                              return ad::concat({s.h, s.c}, 1);
                            },
                            rng),
           {x, h, c}};
    append(k.params, params.named_parameters("p"));
    return k;
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    auto params = recurrent::LstmParams::init(3, 4, rng);
    Tensor seq = uniform({3, 2, 3}, -1, 1, rng);
    Case k{"lstm", weighted([=] { return recurrent::lstm_forward(seq, params); }, rng), {seq}};
    append(k.params, params.named_parameters("p"));
    return k;
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    auto fwd = recurrent::LstmParams::init(3, 4, rng);
    auto bwd = recurrent::LstmParams::init(3, 4, rng);
    Tensor seq = uniform({3, 2, 3}, -1, 1, rng);
    Case k{"bilstm", weighted([=] { return recurrent::bilstm_forward(seq, fwd, bwd); }, rng), {seq}};
    append(k.params, fwd.named_parameters("f"));
    append(k.params, bwd.named_parameters("b"));
    return k;
  }));
  cases.push_back(clear_of_kinks(seed, index++, [&](Rng& rng) {
    auto block = inception::InceptionBlock::init({4, 2, 2, 2, 2}, rng);
    Tensor x = uniform({2, 4, 10}, -1, 1, rng);
    Case k{"inception_block", weighted([=] { return inception::inception_forward(x, block); }, rng), {x}};
    append(k.params, block.named_parameters("blk"));
    return k;
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    wavelet::LwptStem stem(2, wavelet::haar_filters(true), true);
    Tensor x = uniform({2, 1, 16}, -1, 1, rng);
    Case k{"lwpt_stem.haar", weighted([=] { return stem.forward(x); }, rng), {x}};
    append(k.params, stem.named_parameters());
    return k;
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    wavelet::LwptStem stem(2, wavelet::db4_filters(), true);
    Tensor x = uniform({1, 1, 32}, -1, 1, rng);
    Case k{"lwpt_stem.db4", weighted([=] { return stem.forward(x); }, rng), {x}};
    append(k.params, stem.named_parameters());
    return k;
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    wavelet::LwptStem stem(2, wavelet::haar_filters(true), true, wavelet::Boundary::kCircular);
    Tensor x = uniform({1, 1, 16}, -1, 1, rng);
    Case k{"lwpt_stem.circular", weighted([=] { return stem.forward(x); }, rng), {x}};
    append(k.params, stem.named_parameters());
    return k;
  }));
  cases.push_back(build(seed, index++, [&](Rng& rng) {
    auto emb = fusion::ConditionEmbedding::init(3, rng);
    const std::vector<double> speeds = {35, 65};
    Case k{"condition_embedding", weighted([=] { return fusion::embed_conditions(speeds, emb); }, rng), {}};
    append(k.params, emb.named_parameters("e"));
    return k;
  }));
  cases.push_back(clear_of_kinks(seed, index++, [&](Rng& rng) {
    auto hp = head::HeadParams::init(head::HeadVariant::kBiLstm, 3, 3, 1, 4, rng);
    Tensor beams = uniform({5, 2, 3}, -1, 1, rng);
    Case k{"estimator_head", weighted([=] { return head::head_forward(beams, hp); }, rng), {beams}};
    append(k.params, hp.named_parameters());
    return k;
  }));
  cases.push_back(clear_of_kinks(seed, index++, [&](Rng& rng) {
    ModelConfig mc;
    mc.levels = 2;
    mc.block_widths = {2};
    mc.embed_width = 2;
    mc.fusion_hidden = 3;
    mc.head_hidden = 3;
    mc.dense_hidden = 3;
    mc.beams = 3;
    mc.dropout = 0.0;
    auto model = std::make_shared<Model>(mc, rng());
    std::vector<std::vector<double>> signals;
    for (std::size_t len : {37, 44}) {
      std::vector<double> s(len);
      for (auto& v : s) v = std::uniform_real_distribution<double>(-1, 1)(rng);
      signals.push_back(std::move(s));
    }
    auto batch = fusion::pad_batch(signals, mc.levels);
    const std::vector<double> speeds = {50, 65};
    Case k{"model", weighted([=] { return model->forward(batch, speeds, false, 0); }, rng), {}};
    for (const auto& e : model->parameters().entries()) k.params.push_back(e.tensor);
    return k;
  }));
  return cases;
}

Case corrupted_case(std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = uniform({6}, 0.5, 1.5, rng);
  auto square = [x] {
    ad::Buffer out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
    Tensor y = ad::make_result(x.shape(), std::move(out));
    if (ad::Tape* tape = ad::active_tape()) {
      auto xi = x.impl();
      tape->record(y, {x}, [xi](std::span<const double> g) {
        auto dx = xi->grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 3.0 * xi->data[i] * g[i];
      });
    }
    return y;
  };
  return {"corrupted_square", weighted(square, rng), {x}};
}

std::vector<CaseResult> run_cases(const std::vector<Case>& cases, double eps, double tolerance) {
  std::vector<CaseResult> out;
  for (const auto& c : cases) {
    CaseResult r;
    r.name = c.name;
    r.check = ad::finite_difference_check(c.loss, c.params, eps);
    r.passed = r.check.max_rel_error < tolerance;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wavestiff::gradcheck
