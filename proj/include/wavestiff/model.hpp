#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavestiff/fusion.hpp"
#include "wavestiff/head.hpp"
#include "wavestiff/inception.hpp"
#include "wavestiff/params.hpp"
#include "wavestiff/wavelet.hpp"

namespace wavestiff {

struct ModelConfig {
  std::size_t levels = 3;
  std::string wavelet = "haar";  // haar | db4
  bool learnable_stem = true;
  wavelet::Boundary boundary = wavelet::Boundary::kZero;
  // One entry per inception block: the width of each of its four branches.
  std::vector<std::size_t> block_widths = {8, 16};
  std::size_t embed_width = 16;
  std::size_t fusion_hidden = 128;
  head::HeadVariant head = head::HeadVariant::kBiLstm;
  std::size_t head_hidden = 64;
  std::size_t head_layers = 1;
  std::size_t dense_hidden = 64;
  double dropout = 0.2;
  std::size_t beams = 10;

  void validate() const;
  std::vector<inception::InceptionBlockConfig> block_configs() const;
  std::size_t feature_channels() const;  // channels entering the fusion LSTM, excluding the embedding
};

nlohmann::json to_json(const ModelConfig& config);
// Rejects unknown keys.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Recovers the architecture from parameter names and shapes.
ModelConfig infer_config(const ModelParams& params);

// WaveletInception feature extractor, condition fusion and estimator head.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  // Builds the architecture described by `config` and loads `params` into it.
  static Model from_params(const ModelConfig& config, const ModelParams& params);
  static Model from_params(const ModelParams& params) { return from_params(infer_config(params), params); }

  const ModelConfig& config() const { return config_; }
  const fusion::FusionNetwork& fusion() const { return fusion_; }
  fusion::FusionNetwork& fusion() { return fusion_; }
  const head::HeadParams& head() const { return head_; }
  head::HeadParams& head() { return head_; }

  // Every tensor, frozen stem filters included.
  const ModelParams& parameters() const { return params_; }
  // Tensors the optimizer updates.
  std::vector<NamedTensor> trainable() const;

  // Normalized estimates [B, N, 2].
  ad::Tensor forward(const fusion::PaddedBatch& batch, std::span<const double> speeds_kmh, bool training,
                     std::uint64_t dropout_seed) const;

 private:
  ModelConfig config_;
  fusion::FusionNetwork fusion_;
  head::HeadParams head_;
  ModelParams params_;
};

}  // namespace wavestiff
