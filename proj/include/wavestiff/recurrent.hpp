#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wavestiff/init.hpp"
#include "wavestiff/tensor.hpp"

namespace wavestiff::recurrent {

// Gate blocks are laid out [input | forget | candidate | output] along the
// 4H axis of every matrix.
struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  ad::Tensor wx;    // [D, 4H]
  ad::Tensor wh;    // [H, 4H]
  ad::Tensor bias;  // [4H]

  // Uniform in [-1/sqrt(H), 1/sqrt(H)], forget-gate bias 1.
  static LstmParams init(std::size_t input_size, std::size_t hidden_size, Rng& rng);
  static LstmParams zeros(std::size_t input_size, std::size_t hidden_size);

  std::size_t parameter_count() const { return wx.numel() + wh.numel() + bias.numel(); }
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters(const std::string& prefix) const;
};

struct LstmState {
  ad::Tensor h;
  ad::Tensor c;
};

// x_t: [D] or [B, D]; states [H] or [B, H].
LstmState lstm_cell_step(const ad::Tensor& x_t, const ad::Tensor& h_prev, const ad::Tensor& c_prev,
                         const LstmParams& params);

// seq: [T, D] or [T, B, D] -> hidden states [T, H] / [T, B, H]. Undefined
// h0 / c0 mean zero initial state.
ad::Tensor lstm_forward(const ad::Tensor& seq, const LstmParams& params, const ad::Tensor& h0 = {},
                        const ad::Tensor& c0 = {});

// Reverses the leading (time) axis.
ad::Tensor reverse_time(const ad::Tensor& seq);

// Per step [forward hidden | backward hidden]: [T, 2H] / [T, B, 2H].
ad::Tensor bilstm_forward(const ad::Tensor& seq, const LstmParams& fwd, const LstmParams& bwd);

}  // namespace wavestiff::recurrent
