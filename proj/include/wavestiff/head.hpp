#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wavestiff/init.hpp"
#include "wavestiff/recurrent.hpp"
#include "wavestiff/tensor.hpp"

namespace wavestiff::head {

enum class HeadVariant { kBiLstm, kLstm };

HeadVariant variant_from_string(std::string_view name);
std::string to_string(HeadVariant variant);

// Normalization scales for (k_p, k_b), N/m.
inline constexpr double kScaleKp = 1e8;
inline constexpr double kScaleKb = 1e7;

// Per-beam stiffness pairs (k_p, k_b).
using StiffnessRow = std::array<double, 2>;
using StiffnessTargets = std::vector<StiffnessRow>;

// Shared per-step dense stack: relu(x W1 + b1) W2 + b2 -> 2 outputs.
struct DenseStack {
  ad::Tensor w1, b1;  // [D_in, D_h], [D_h]
  ad::Tensor w2, b2;  // [D_h, 2], [2]

  static DenseStack init(std::size_t in, std::size_t hidden, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x) const;
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters(const std::string& prefix) const;
};

struct RecurrentLayer {
  recurrent::LstmParams fwd;
  recurrent::LstmParams bwd;  // unused by the unidirectional head
};

struct HeadParams {
  HeadVariant variant = HeadVariant::kBiLstm;
  std::vector<RecurrentLayer> layers;
  DenseStack dense;

  // `layers` recurrent layers of `hidden` units (per direction).
  static HeadParams init(HeadVariant variant, std::size_t input_size, std::size_t hidden, std::size_t layers,
                         std::size_t dense_hidden, Rng& rng);
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
};

// beam_features [N, H] or [N, B, H] -> normalized estimates [N, 2] / [N, B, 2].
// Dispatches on params.variant.
ad::Tensor head_forward(const ad::Tensor& beam_features, const HeadParams& params);

// Forward-only recurrence regardless of params.variant.
ad::Tensor head_forward_unidirectional(const ad::Tensor& beam_features, const HeadParams& params);

// Normalized [N, 2] -> N/m.
StiffnessTargets denormalize(const ad::Tensor& estimates);
// N/m -> normalized [N, 2].
ad::Tensor normalize(const StiffnessTargets& targets);

}  // namespace wavestiff::head
