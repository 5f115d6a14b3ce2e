#include "wavestiff/head.hpp"

#include <cmath>

#include "wavestiff/error.hpp"
#include "wavestiff/ops.hpp"

namespace wavestiff::head {

HeadVariant variant_from_string(std::string_view name) {
  if (name == "bilstm") return HeadVariant::kBiLstm;
  if (name == "lstm") return HeadVariant::kLstm;
  throw ConfigError("unknown head variant '" + std::string(name) + "' (expected bilstm|lstm)");
}

std::string to_string(HeadVariant variant) { return variant == HeadVariant::kBiLstm ? "bilstm" : "lstm"; }

DenseStack DenseStack::init(std::size_t in, std::size_t hidden, Rng& rng) {
  DenseStack d;
  const double b_in = 1.0 / std::sqrt(static_cast<double>(in));
  const double b_h = 1.0 / std::sqrt(static_cast<double>(hidden));
  d.w1 = uniform_tensor({in, hidden}, b_in, rng);
  d.b1 = uniform_tensor({hidden}, b_in, rng);
  d.w2 = uniform_tensor({hidden, 2}, b_h, rng);
  d.b2 = uniform_tensor({2}, b_h, rng);
  return d;
}

ad::Tensor DenseStack::forward(const ad::Tensor& x) const {
  return ad::linear(ad::relu(ad::linear(x, w1, b1)), w2, b2);
}

std::vector<std::pair<std::string, ad::Tensor>> DenseStack::named_parameters(const std::string& prefix) const {
  return {{prefix + "1.w", w1}, {prefix + "1.b", b1}, {prefix + "2.w", w2}, {prefix + "2.b", b2}};
}

HeadParams HeadParams::init(HeadVariant variant, std::size_t input_size, std::size_t hidden, std::size_t layers,
                            std::size_t dense_hidden, Rng& rng) {
  if (layers == 0) throw ConfigError("estimator head needs at least one recurrent layer");
  HeadParams p;
  p.variant = variant;
  const std::size_t width = variant == HeadVariant::kBiLstm ? 2 * hidden : hidden;
  std::size_t in = input_size;
  for (std::size_t l = 0; l < layers; ++l) {
    RecurrentLayer layer;
    layer.fwd = recurrent::LstmParams::init(in, hidden, rng);
    if (variant == HeadVariant::kBiLstm) layer.bwd = recurrent::LstmParams::init(in, hidden, rng);
    p.layers.push_back(std::move(layer));
    in = width;
  }
  p.dense = DenseStack::init(width, dense_hidden, rng);
  return p;
}

std::vector<std::pair<std::string, ad::Tensor>> HeadParams::named_parameters() const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (variant == HeadVariant::kBiLstm) {
      const std::string prefix = "head.bilstm" + std::to_string(l);
      for (auto& e : layers[l].fwd.named_parameters(prefix + ".fwd")) out.push_back(std::move(e));
      for (auto& e : layers[l].bwd.named_parameters(prefix + ".bwd")) out.push_back(std::move(e));
    } else {
      for (auto& e : layers[l].fwd.named_parameters("head.lstm" + std::to_string(l))) out.push_back(std::move(e));
    }
  }
  for (auto& e : dense.named_parameters("head.dense")) out.push_back(std::move(e));
  return out;
}

namespace {

void check_features(const ad::Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("estimator head: expected [N, H] or [N, B, H], got " + ad::shape_str(x.shape()));
  }
  if (x.dim(0) == 0) throw InputError("estimator head: need at least one beam");
}

}  // namespace

ad::Tensor head_forward(const ad::Tensor& beam_features, const HeadParams& params) {
  if (params.variant == HeadVariant::kLstm) return head_forward_unidirectional(beam_features, params);
  check_features(beam_features);
  ad::Tensor h = beam_features;
  for (const auto& layer : params.layers) h = recurrent::bilstm_forward(h, layer.fwd, layer.bwd);
  return params.dense.forward(h);
}

ad::Tensor head_forward_unidirectional(const ad::Tensor& beam_features, const HeadParams& params) {
  check_features(beam_features);
  ad::Tensor h = beam_features;
  for (const auto& layer : params.layers) h = recurrent::lstm_forward(h, layer.fwd);
  return params.dense.forward(h);
}

StiffnessTargets denormalize(const ad::Tensor& estimates) {
  if (estimates.rank() != 2 || estimates.dim(1) != 2) {
    throw DimensionError("denormalize: expected [N, 2], got " + ad::shape_str(estimates.shape()));
  }
  StiffnessTargets out(estimates.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {estimates[2 * i] * kScaleKp, estimates[2 * i + 1] * kScaleKb};
  }
  return out;
}

ad::Tensor normalize(const StiffnessTargets& targets) {
  std::vector<double> data;
  data.reserve(targets.size() * 2);
  for (const auto& row : targets) {
    data.push_back(row[0] / kScaleKp);
    data.push_back(row[1] / kScaleKb);
  }
  return ad::Tensor::from({targets.size(), 2}, std::move(data));
}

}  // namespace wavestiff::head
