#include "wavestiff/recurrent.hpp"

#include <cmath>
#include <numeric>

#include "wavestiff/error.hpp"
#include "wavestiff/ops.hpp"

namespace wavestiff::recurrent {

LstmParams LstmParams::init(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  if (input_size == 0 || hidden_size == 0) throw ConfigError("LSTM sizes must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.wx = uniform_tensor({input_size, 4 * hidden_size}, bound, rng);
  p.wh = uniform_tensor({hidden_size, 4 * hidden_size}, bound, rng);
  p.bias = uniform_tensor({4 * hidden_size}, bound, rng);
  auto b = p.bias.mutable_data();
  for (std::size_t j = hidden_size; j < 2 * hidden_size; ++j) b[j] = 1.0;
  return p;
}

LstmParams LstmParams::zeros(std::size_t input_size, std::size_t hidden_size) {
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.wx = ad::Tensor::zeros({input_size, 4 * hidden_size}, true);
  p.wh = ad::Tensor::zeros({hidden_size, 4 * hidden_size}, true);
  p.bias = ad::Tensor::zeros({4 * hidden_size}, true);
  return p;
}

std::vector<std::pair<std::string, ad::Tensor>> LstmParams::named_parameters(const std::string& prefix) const {
  return {{prefix + ".wx", wx}, {prefix + ".wh", wh}, {prefix + ".b", bias}};
}

namespace {

// z: [B, 4H] pre-activations -> next (h, c).
LstmState apply_gates(const ad::Tensor& z, const ad::Tensor& c_prev, std::size_t hidden) {
  const ad::Tensor i = ad::sigmoid(ad::narrow(z, 1, 0, hidden));
  const ad::Tensor f = ad::sigmoid(ad::narrow(z, 1, hidden, hidden));
  const ad::Tensor g = ad::tanh(ad::narrow(z, 1, 2 * hidden, hidden));
  const ad::Tensor o = ad::sigmoid(ad::narrow(z, 1, 3 * hidden, hidden));
  ad::Tensor c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
  ad::Tensor h = ad::mul(o, ad::tanh(c));
  return {std::move(h), std::move(c)};
}

void check_params(const LstmParams& p) {
  const std::size_t h = p.hidden_size;
  if (p.wx.shape() != ad::Shape{p.input_size, 4 * h} || p.wh.shape() != ad::Shape{h, 4 * h} ||
      p.bias.shape() != ad::Shape{4 * h}) {
    throw DimensionError("LSTM parameters do not match input_size=" + std::to_string(p.input_size) +
                         ", hidden_size=" + std::to_string(h));
  }
}

ad::Tensor zeros_or(const ad::Tensor& t, std::size_t batch, std::size_t hidden) {
  if (!t.defined()) return ad::Tensor::zeros({batch, hidden});
  if (t.numel() != batch * hidden) {
    throw DimensionError("LSTM initial state shape " + ad::shape_str(t.shape()) + " does not match [" +
                         std::to_string(batch) + ", " + std::to_string(hidden) + "]");
  }
  return t.rank() == 2 ? t : ad::reshape(t, {batch, hidden});
}

}  // namespace

LstmState lstm_cell_step(const ad::Tensor& x_t, const ad::Tensor& h_prev, const ad::Tensor& c_prev,
                         const LstmParams& params) {
  check_params(params);
  const std::size_t hidden = params.hidden_size;
  const bool single = x_t.rank() == 1;
  const std::size_t batch = single ? 1 : x_t.dim(0);
  if (x_t.shape().back() != params.input_size || x_t.rank() > 2) {
    throw DimensionError("lstm_cell_step: input " + ad::shape_str(x_t.shape()) + " does not match input_size " +
                         std::to_string(params.input_size));
  }
  if (h_prev.numel() != batch * hidden || c_prev.numel() != batch * hidden) {
    throw DimensionError("lstm_cell_step: state shapes " + ad::shape_str(h_prev.shape()) + " / " +
                         ad::shape_str(c_prev.shape()) + " do not match hidden_size " + std::to_string(hidden));
  }
  const ad::Tensor x = single ? ad::reshape(x_t, {1, params.input_size}) : x_t;
  const ad::Tensor h = h_prev.rank() == 2 ? h_prev : ad::reshape(h_prev, {batch, hidden});
  const ad::Tensor c = c_prev.rank() == 2 ? c_prev : ad::reshape(c_prev, {batch, hidden});
  const ad::Tensor z = ad::add(ad::linear(x, params.wx, params.bias), ad::linear(h, params.wh, ad::Tensor()));
  LstmState next = apply_gates(z, c, hidden);
  if (single) {
    next.h = ad::reshape(next.h, {hidden});
    next.c = ad::reshape(next.c, {hidden});
  }
  return next;
}

ad::Tensor lstm_forward(const ad::Tensor& seq, const LstmParams& params, const ad::Tensor& h0,
                        const ad::Tensor& c0) {
  check_params(params);
  if (seq.rank() != 2 && seq.rank() != 3) {
    throw DimensionError("lstm_forward: expected [T, D] or [T, B, D], got " + ad::shape_str(seq.shape()));
  }
  if (seq.dim(0) == 0) throw InputError("lstm_forward: empty sequence");
  if (seq.shape().back() != params.input_size) {
    throw DimensionError("lstm_forward: feature axis " + std::to_string(seq.shape().back()) +
                         " does not match input_size " + std::to_string(params.input_size));
  }
  const bool single = seq.rank() == 2;
  const std::size_t steps = seq.dim(0);
  const std::size_t batch = single ? 1 : seq.dim(1);
  const std::size_t hidden = params.hidden_size;

  const ad::Tensor x = single ? ad::reshape(seq, {steps, 1, params.input_size}) : seq;
  const ad::Tensor projected = ad::linear(x, params.wx, params.bias);  // [T, B, 4H]

  LstmState state{zeros_or(h0, batch, hidden), zeros_or(c0, batch, hidden)};
  std::vector<ad::Tensor> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const ad::Tensor z = ad::add(ad::select(projected, 0, t), ad::linear(state.h, params.wh, ad::Tensor()));
    state = apply_gates(z, state.c, hidden);
    outputs.push_back(state.h);
  }
  ad::Tensor out = ad::stack(outputs, 0);  // [T, B, H]
  return single ? ad::reshape(out, {steps, hidden}) : out;
}

ad::Tensor reverse_time(const ad::Tensor& seq) {
  std::vector<std::size_t> order(seq.dim(0));
  std::iota(order.rbegin(), order.rend(), std::size_t{0});
  return ad::take(seq, 0, order);
}

ad::Tensor bilstm_forward(const ad::Tensor& seq, const LstmParams& fwd, const LstmParams& bwd) {
  const ad::Tensor forward = lstm_forward(seq, fwd);
  const ad::Tensor backward = reverse_time(lstm_forward(reverse_time(seq), bwd));
  return ad::concat({forward, backward}, seq.rank() - 1);
}

}  // namespace wavestiff::recurrent
