#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wavestiff/inception.hpp"
#include "wavestiff/init.hpp"
#include "wavestiff/recurrent.hpp"
#include "wavestiff/tensor.hpp"
#include "wavestiff/wavelet.hpp"

namespace wavestiff::fusion {

struct PaddedBatch {
  ad::Tensor signals;                     // [B, T_max], trailing zeros
  std::vector<std::size_t> valid_lengths;  // original T_i
};

// Zero-pads every signal to the batch maximum rounded up to a multiple of
// 2^levels. `extra_steps` appends further blocks of 2^levels zeros.
PaddedBatch pad_batch(const std::vector<std::span<const double>>& signals, std::size_t levels,
                      std::size_t extra_steps = 0);
PaddedBatch pad_batch(const std::vector<std::vector<double>>& signals, std::size_t levels,
                      std::size_t extra_steps = 0);

// Speed normalization applied before the embedding.
inline constexpr double kSpeedScale = 100.0;

// tanh(w * speed / 100 + b) with w: [1, E], b: [E].
struct ConditionEmbedding {
  ad::Tensor weight;
  ad::Tensor bias;

  static ConditionEmbedding init(std::size_t width, Rng& rng);
  static ConditionEmbedding zeros(std::size_t width);
  std::size_t width() const { return bias.defined() ? bias.dim(0) : 0; }
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters(const std::string& prefix) const;
};

// One speed -> [E]; throws InputError for non-positive speeds.
ad::Tensor embed_conditions(double speed_kmh, const ConditionEmbedding& embedding);
// B speeds -> [B, E].
ad::Tensor embed_conditions(std::span<const double> speeds_kmh, const ConditionEmbedding& embedding);

struct FusedSequence {
  ad::Tensor rows;  // [T', C + E]
  std::size_t valid_len = 0;
};

// Transposes [C, T'] features to rows and appends the embedding at every step.
FusedSequence align_and_concat(const ad::Tensor& vib_features, const ad::Tensor& embedding,
                               std::size_t valid_len);
// Batched form: [B, C, T'] and [B, E] -> [T', B, C + E].
ad::Tensor align_and_concat_batch(const ad::Tensor& vib_features, const ad::Tensor& embeddings);

// idx_j = floor((j + 1) * valid_len / n) - 1 for j = 0..n-1.
std::vector<std::size_t> uniform_indices(std::size_t valid_len, std::size_t n);

// hidden: [T', H] -> [N, H] at uniform_indices(valid_len, n).
ad::Tensor select_uniform(const ad::Tensor& hidden, std::size_t valid_len, std::size_t n);

// Vibration feature extractor plus condition fusion.
struct FusionNetwork {
  wavelet::LwptStem stem;
  std::vector<inception::InceptionBlock> blocks;
  ConditionEmbedding embedding;
  recurrent::LstmParams lstm;
  double dropout_rate = 0.2;
  std::size_t beams = 10;

  // Stem steps whose receptive field, including the inception stack's
  // look-ahead, stays within the first `valid_len` input samples.
  std::size_t valid_steps(std::size_t valid_len) const;
};

// batch signals [B, T] -> selected beam features [N, B, H].
ad::Tensor fusion_forward(const PaddedBatch& batch, std::span<const double> speeds_kmh, const FusionNetwork& net,
                          bool training, std::uint64_t dropout_seed);

// Single record: signal [T_padded] -> [N, H].
ad::Tensor fusion_forward(const ad::Tensor& signal, std::size_t valid_len, double speed_kmh,
                          const FusionNetwork& net, bool training, std::uint64_t dropout_seed);

}  // namespace wavestiff::fusion
