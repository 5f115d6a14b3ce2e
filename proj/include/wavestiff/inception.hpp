#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wavestiff/init.hpp"
#include "wavestiff/tensor.hpp"

namespace wavestiff::inception {

struct InceptionBlockConfig {
  std::size_t in_channels = 8;
  std::size_t b1 = 8;  // kernel-1 branch
  std::size_t b3 = 8;  // kernel-1 bottleneck -> kernel-3
  std::size_t b5 = 8;  // kernel-1 bottleneck -> kernel-5
  std::size_t bp = 8;  // max-pool(3) -> kernel-1

  std::size_t out_channels() const { return b1 + b3 + b5 + bp; }
  bool operator==(const InceptionBlockConfig&) const = default;
};

// Two blocks chaining 8 -> 32 -> 64 channels.
std::vector<InceptionBlockConfig> default_blocks(std::size_t stem_channels = 8);

// Throws ConfigError when adjacent blocks do not chain or a width is zero.
void validate_chain(const std::vector<InceptionBlockConfig>& configs, std::size_t in_channels);

struct InceptionBlock {
  InceptionBlockConfig config;
  ad::Tensor w1, bias1;                       // [b1, C, 1]
  ad::Tensor w3_reduce, bias3_reduce, w3, bias3;  // [b3, C, 1], [b3, b3, 3]
  ad::Tensor w5_reduce, bias5_reduce, w5, bias5;  // [b5, C, 1], [b5, b5, 5]
  ad::Tensor wp, biasp;                       // [bp, C, 1]

  static InceptionBlock init(const InceptionBlockConfig& config, Rng& rng);
  static InceptionBlock zeros(const InceptionBlockConfig& config);

  std::vector<std::pair<std::string, ad::Tensor>> named_parameters(const std::string& prefix) const;
};

// Steps past t that output step t can see, summed over a stack of blocks.
inline constexpr std::size_t kBlockRightRadius = 4;
inline std::size_t right_receptive_radius(std::size_t block_count) { return block_count * kBlockRightRadius; }

// features: [C, T] or [B, C, T] with T >= 5 -> [C_out, T] / [B, C_out, T].
// Branch outputs are relu'd and concatenated in the order (1, 3, 5, pool).
ad::Tensor inception_forward(const ad::Tensor& features, const InceptionBlock& block);

ad::Tensor stack_blocks(const ad::Tensor& features, const std::vector<InceptionBlock>& blocks);

}  // namespace wavestiff::inception
