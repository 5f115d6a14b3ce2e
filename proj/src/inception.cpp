#include "wavestiff/inception.hpp"

#include <cmath>

#include "wavestiff/error.hpp"
#include "wavestiff/ops.hpp"

namespace wavestiff::inception {

std::vector<InceptionBlockConfig> default_blocks(std::size_t stem_channels) {
  return {{stem_channels, 8, 8, 8, 8}, {32, 16, 16, 16, 16}};
}

void validate_chain(const std::vector<InceptionBlockConfig>& configs, std::size_t in_channels) {
  std::size_t channels = in_channels;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& c = configs[i];
    if (c.b1 == 0 || c.b3 == 0 || c.b5 == 0 || c.bp == 0) {
      throw ConfigError("inception block " + std::to_string(i) + ": branch widths must be positive");
    }
    if (c.in_channels != channels) {
      throw ConfigError("inception block " + std::to_string(i) + " expects " + std::to_string(c.in_channels) +
                        " input channels but receives " + std::to_string(channels));
    }
    channels = c.out_channels();
  }
}

namespace {

ad::Tensor conv_weight(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  return uniform_tensor({out, in, k}, 1.0 / std::sqrt(static_cast<double>(in * k)), rng);
}

ad::Tensor conv_bias(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  return uniform_tensor({out}, 1.0 / std::sqrt(static_cast<double>(in * k)), rng);
}

ad::Tensor branch(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b) {
  const std::size_t k = w.dim(2);
  return ad::conv1d(x, w, b, 1, k - 1);
}

}  // namespace

InceptionBlock InceptionBlock::init(const InceptionBlockConfig& config, Rng& rng) {
  const std::size_t c = config.in_channels;
  InceptionBlock b;
  b.config = config;
  b.w1 = conv_weight(config.b1, c, 1, rng);
  b.bias1 = conv_bias(config.b1, c, 1, rng);
  b.w3_reduce = conv_weight(config.b3, c, 1, rng);
  b.bias3_reduce = conv_bias(config.b3, c, 1, rng);
  b.w3 = conv_weight(config.b3, config.b3, 3, rng);
  b.bias3 = conv_bias(config.b3, config.b3, 3, rng);
  b.w5_reduce = conv_weight(config.b5, c, 1, rng);
  b.bias5_reduce = conv_bias(config.b5, c, 1, rng);
  b.w5 = conv_weight(config.b5, config.b5, 5, rng);
  b.bias5 = conv_bias(config.b5, config.b5, 5, rng);
  b.wp = conv_weight(config.bp, c, 1, rng);
  b.biasp = conv_bias(config.bp, c, 1, rng);
  return b;
}

InceptionBlock InceptionBlock::zeros(const InceptionBlockConfig& config) {
  const std::size_t c = config.in_channels;
  InceptionBlock b;
  b.config = config;
  b.w1 = ad::Tensor::zeros({config.b1, c, 1}, true);
  b.bias1 = ad::Tensor::zeros({config.b1}, true);
  b.w3_reduce = ad::Tensor::zeros({config.b3, c, 1}, true);
  b.bias3_reduce = ad::Tensor::zeros({config.b3}, true);
  b.w3 = ad::Tensor::zeros({config.b3, config.b3, 3}, true);
  b.bias3 = ad::Tensor::zeros({config.b3}, true);
  b.w5_reduce = ad::Tensor::zeros({config.b5, c, 1}, true);
  b.bias5_reduce = ad::Tensor::zeros({config.b5}, true);
  b.w5 = ad::Tensor::zeros({config.b5, config.b5, 5}, true);
  b.bias5 = ad::Tensor::zeros({config.b5}, true);
  b.wp = ad::Tensor::zeros({config.bp, c, 1}, true);
  b.biasp = ad::Tensor::zeros({config.bp}, true);
  return b;
}

std::vector<std::pair<std::string, ad::Tensor>> InceptionBlock::named_parameters(const std::string& prefix) const {
  return {{prefix + ".b1.w", w1},
          {prefix + ".b1.b", bias1},
          {prefix + ".b3.reduce.w", w3_reduce},
          {prefix + ".b3.reduce.b", bias3_reduce},
          {prefix + ".b3.w", w3},
          {prefix + ".b3.b", bias3},
          {prefix + ".b5.reduce.w", w5_reduce},
          {prefix + ".b5.reduce.b", bias5_reduce},
          {prefix + ".b5.w", w5},
          {prefix + ".b5.b", bias5},
          {prefix + ".pool.w", wp},
          {prefix + ".pool.b", biasp}};
}

ad::Tensor inception_forward(const ad::Tensor& features, const InceptionBlock& block) {
  if (features.rank() != 2 && features.rank() != 3) {
    throw DimensionError("inception_forward: expected [C, T] or [B, C, T], got " + ad::shape_str(features.shape()));
  }
  const std::size_t channel_axis = features.rank() - 2;
  if (features.dim(channel_axis) != block.config.in_channels) {
    throw DimensionError("inception_forward: channel axis has " + std::to_string(features.dim(channel_axis)) +
                         " channels, block expects " + std::to_string(block.config.in_channels));
  }
  if (features.shape().back() < 5) {
    throw InputError("inception_forward: need at least 5 time steps, got " + std::to_string(features.shape().back()));
  }
  const ad::Tensor a = ad::relu(branch(features, block.w1, block.bias1));
  const ad::Tensor b =
      ad::relu(branch(branch(features, block.w3_reduce, block.bias3_reduce), block.w3, block.bias3));
  const ad::Tensor c =
      ad::relu(branch(branch(features, block.w5_reduce, block.bias5_reduce), block.w5, block.bias5));
  const ad::Tensor d = ad::relu(branch(ad::max_pool1d(features, 3), block.wp, block.biasp));
  return ad::concat({a, b, c, d}, channel_axis);
}

ad::Tensor stack_blocks(const ad::Tensor& features, const std::vector<InceptionBlock>& blocks) {
  if (!blocks.empty()) {
    std::vector<InceptionBlockConfig> configs;
    for (const auto& b : blocks) configs.push_back(b.config);
    validate_chain(configs, configs.front().in_channels);
  }
  ad::Tensor h = features;
  for (const auto& block : blocks) h = inception_forward(h, block);
  return h;
}

}  // namespace wavestiff::inception
