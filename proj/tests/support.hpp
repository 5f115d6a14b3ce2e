#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "wavestiff/gradcheck.hpp"
#include "wavestiff/init.hpp"
#include "wavestiff/ops.hpp"
#include "wavestiff/recurrent.hpp"
#include "wavestiff/tensor.hpp"

namespace testing_support {

using wavestiff::Rng;
using wavestiff::ad::Tensor;

inline Tensor uniform(wavestiff::ad::Shape shape, double lo, double hi, Rng& rng, bool grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(wavestiff::ad::numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// sum(out * w), w fixed in [0.5, 1.5].
inline std::function<Tensor()> weighted(std::function<Tensor()> body, Rng& rng) {
  Tensor out;
  {
    wavestiff::ad::NoGradScope ng;
    out = body();
  }
  Tensor w = uniform(out.shape(), 0.5, 1.5, rng);
  return [body = std::move(body), w] { return wavestiff::ad::sum(wavestiff::ad::mul(body(), w)); };
}

struct Probe {
  std::function<Tensor()> loss;
  std::vector<Tensor> params;
};

// Worst finite-difference error of a draw that keeps relu and max-pool kinks
// at least 1e-2 away from the evaluation point.
inline wavestiff::ad::GradCheckResult check(const std::function<Probe(Rng&)>& make, std::uint64_t seed) {
  for (std::uint64_t attempt = 0; attempt < 500; ++attempt) {
    Rng rng(seed * 7919 + attempt);
    Probe p = make(rng);
    wavestiff::ad::KinkProbe probe;
    {
      wavestiff::ad::NoGradScope ng;
      p.loss();
    }
    if (probe.min_gap() <= 1e-2) continue;
    return wavestiff::ad::finite_difference_check(p.loss, p.params, 1e-3);
  }
  throw std::runtime_error("no kink-free draw");
}

// Scalar re-implementation of the LSTM recurrence: gates [i | f | g | o].
struct ScalarLstm {
  std::size_t d = 0, h = 0;
  std::vector<double> wx, wh, b;  // row-major [D, 4H], [H, 4H], [4H]

  static ScalarLstm from(const wavestiff::recurrent::LstmParams& p) {
    return {p.input_size, p.hidden_size, to_vector(p.wx), to_vector(p.wh), to_vector(p.bias)};
  }

  void step(const double* x, std::vector<double>& hs, std::vector<double>& cs) const {
    std::vector<double> z(4 * h);
    for (std::size_t k = 0; k < 4 * h; ++k) {
      double s = b[k];
      for (std::size_t i = 0; i < d; ++i) s += x[i] * wx[i * 4 * h + k];
      for (std::size_t i = 0; i < h; ++i) s += hs[i] * wh[i * 4 * h + k];
      z[k] = s;
    }
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sig(z[j]), fg = sig(z[h + j]), gg = std::tanh(z[2 * h + j]), og = sig(z[3 * h + j]);
      cs[j] = fg * cs[j] + ig * gg;
      hs[j] = og * std::tanh(cs[j]);
    }
  }

  // seq row-major [T, D] -> [T, H].
  std::vector<double> run(const std::vector<double>& seq, std::size_t steps) const {
    std::vector<double> hs(h, 0.0), cs(h, 0.0), out;
    for (std::size_t t = 0; t < steps; ++t) {
      step(&seq[t * d], hs, cs);
      out.insert(out.end(), hs.begin(), hs.end());
    }
    return out;
  }
};

// [T, 2H]: forward states, then backward states re-aligned to step t.
inline std::vector<double> scalar_bilstm(const ScalarLstm& fwd, const ScalarLstm& bwd, const std::vector<double>& seq,
                                         std::size_t steps) {
  const std::size_t d = fwd.d, h = fwd.h;
  std::vector<double> rev(seq.size());
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy(seq.begin() + (steps - 1 - t) * d, seq.begin() + (steps - t) * d, rev.begin() + t * d);
  }
  const auto f = fwd.run(seq, steps);
  const auto r = bwd.run(rev, steps);
  std::vector<double> out(steps * 2 * h);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < h; ++j) {
      out[t * 2 * h + j] = f[t * h + j];
      out[t * 2 * h + h + j] = r[(steps - 1 - t) * h + j];
    }
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing_support
