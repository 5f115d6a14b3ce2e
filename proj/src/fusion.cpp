#include "wavestiff/fusion.hpp"

#include <algorithm>

#include "wavestiff/error.hpp"
#include "wavestiff/ops.hpp"

namespace wavestiff::fusion {

PaddedBatch pad_batch(const std::vector<std::span<const double>>& signals, std::size_t levels,
                      std::size_t extra_steps) {
  if (signals.empty()) throw InputError("pad_batch: empty batch");
  const std::size_t block = std::size_t{1} << levels;
  std::size_t longest = 0;
  for (const auto& s : signals) longest = std::max(longest, s.size());
  if (longest == 0) throw InputError("pad_batch: all signals are empty");
  const std::size_t t_max = (longest + block - 1) / block * block + extra_steps * block;

  PaddedBatch out;
  std::vector<double> data(signals.size() * t_max, 0.0);
  for (std::size_t b = 0; b < signals.size(); ++b) {
    std::copy(signals[b].begin(), signals[b].end(), data.begin() + static_cast<std::ptrdiff_t>(b * t_max));
    out.valid_lengths.push_back(signals[b].size());
  }
  out.signals = ad::Tensor::from({signals.size(), t_max}, std::move(data));
  return out;
}

PaddedBatch pad_batch(const std::vector<std::vector<double>>& signals, std::size_t levels, std::size_t extra_steps) {
  std::vector<std::span<const double>> views(signals.begin(), signals.end());
  return pad_batch(views, levels, extra_steps);
}

ConditionEmbedding ConditionEmbedding::init(std::size_t width, Rng& rng) {
  return {uniform_tensor({1, width}, 1.0, rng), uniform_tensor({width}, 1.0, rng)};
}

ConditionEmbedding ConditionEmbedding::zeros(std::size_t width) {
  return {ad::Tensor::zeros({1, width}, true), ad::Tensor::zeros({width}, true)};
}

std::vector<std::pair<std::string, ad::Tensor>> ConditionEmbedding::named_parameters(const std::string& prefix) const {
  return {{prefix + ".w", weight}, {prefix + ".b", bias}};
}

ad::Tensor embed_conditions(std::span<const double> speeds_kmh, const ConditionEmbedding& embedding) {
  std::vector<double> normalized;
  normalized.reserve(speeds_kmh.size());
  for (double v : speeds_kmh) {
    if (!(v > 0.0)) throw InputError("embed_conditions: speed must be positive, got " + std::to_string(v));
    normalized.push_back(v / kSpeedScale);
  }
  const ad::Tensor x = ad::Tensor::from({speeds_kmh.size(), 1}, std::move(normalized));
  return ad::tanh(ad::linear(x, embedding.weight, embedding.bias));
}

ad::Tensor embed_conditions(double speed_kmh, const ConditionEmbedding& embedding) {
  const double speeds[] = {speed_kmh};
  const ad::Tensor e = embed_conditions(std::span<const double>(speeds), embedding);
  return ad::reshape(e, {embedding.width()});
}

FusedSequence align_and_concat(const ad::Tensor& vib_features, const ad::Tensor& embedding, std::size_t valid_len) {
  if (vib_features.rank() != 2) {
    throw DimensionError("align_and_concat: expected [C, T'], got " + ad::shape_str(vib_features.shape()));
  }
  const std::size_t steps = vib_features.dim(1);
  if (valid_len == 0 || valid_len > steps) {
    throw InputError("align_and_concat: valid length " + std::to_string(valid_len) + " outside [1, " +
                     std::to_string(steps) + "]");
  }
  const ad::Tensor rows = ad::permute(vib_features, {1, 0});
  if (!embedding.defined() || embedding.numel() == 0) return {rows, valid_len};
  const ad::Tensor e = ad::reshape(embedding, {1, embedding.numel()});
  const ad::Tensor repeated = ad::reshape(ad::repeat_steps(e, steps), {steps, embedding.numel()});
  return {ad::concat({rows, repeated}, 1), valid_len};
}

ad::Tensor align_and_concat_batch(const ad::Tensor& vib_features, const ad::Tensor& embeddings) {
  if (vib_features.rank() != 3) {
    throw DimensionError("align_and_concat_batch: expected [B, C, T'], got " + ad::shape_str(vib_features.shape()));
  }
  const ad::Tensor rows = ad::permute(vib_features, {2, 0, 1});
  if (!embeddings.defined() || embeddings.numel() == 0) return rows;
  if (embeddings.rank() != 2 || embeddings.dim(0) != vib_features.dim(0)) {
    throw DimensionError("align_and_concat_batch: embeddings " + ad::shape_str(embeddings.shape()) +
                         " do not match batch " + std::to_string(vib_features.dim(0)));
  }
  return ad::concat({rows, ad::repeat_steps(embeddings, vib_features.dim(2))}, 2);
}

std::vector<std::size_t> uniform_indices(std::size_t valid_len, std::size_t n) {
  if (n == 0) throw InputError("select_uniform: N must be positive");
  if (n > valid_len) {
    throw InputError("select_uniform: cannot pick " + std::to_string(n) + " steps from " + std::to_string(valid_len) +
                     " valid steps");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t j = 0; j < n; ++j) idx[j] = (j + 1) * valid_len / n - 1;
  return idx;
}

ad::Tensor select_uniform(const ad::Tensor& hidden, std::size_t valid_len, std::size_t n) {
  if (hidden.rank() != 2) throw DimensionError("select_uniform: expected [T', H], got " + ad::shape_str(hidden.shape()));
  if (valid_len > hidden.dim(0)) {
    throw InputError("select_uniform: valid length " + std::to_string(valid_len) + " exceeds " +
                     std::to_string(hidden.dim(0)) + " steps");
  }
  return ad::take(hidden, 0, uniform_indices(valid_len, n));
}

std::size_t FusionNetwork::valid_steps(std::size_t valid_len) const {
  const std::size_t stem_steps = stem.valid_steps(valid_len);
  const std::size_t guard = inception::right_receptive_radius(blocks.size());
  return stem_steps > guard ? stem_steps - guard : 0;
}

ad::Tensor fusion_forward(const PaddedBatch& batch, std::span<const double> speeds_kmh, const FusionNetwork& net,
                          bool training, std::uint64_t dropout_seed) {
  const std::size_t b = batch.signals.dim(0);
  const std::size_t t = batch.signals.dim(1);
  if (speeds_kmh.size() != b || batch.valid_lengths.size() != b) {
    throw DimensionError("fusion_forward: batch of " + std::to_string(b) + " signals with " +
                         std::to_string(speeds_kmh.size()) + " speeds");
  }
  const ad::Tensor features = inception::stack_blocks(net.stem.forward(ad::reshape(batch.signals, {b, 1, t})),
                                                      net.blocks);  // [B, C, T']
  const ad::Tensor embeddings =
      net.embedding.width() > 0 ? embed_conditions(speeds_kmh, net.embedding) : ad::Tensor();
  const ad::Tensor fused = align_and_concat_batch(features, embeddings);  // [T', B, C + E]
  const ad::Tensor hidden = recurrent::lstm_forward(fused, net.lstm);      // [T', B, H]

  std::vector<std::vector<std::size_t>> indices;
  indices.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t valid = net.valid_steps(batch.valid_lengths[i]);
    if (valid < net.beams) {
      throw InputError("fusion_forward: signal of " + std::to_string(batch.valid_lengths[i]) + " samples yields " +
                       std::to_string(valid) + " valid steps, fewer than " + std::to_string(net.beams) + " beams");
    }
    indices.push_back(uniform_indices(valid, net.beams));
  }
  return ad::dropout(ad::gather_steps(hidden, indices), net.dropout_rate, training, dropout_seed);
}

ad::Tensor fusion_forward(const ad::Tensor& signal, std::size_t valid_len, double speed_kmh, const FusionNetwork& net,
                          bool training, std::uint64_t dropout_seed) {
  if (signal.rank() != 1) throw DimensionError("fusion_forward: expected [T], got " + ad::shape_str(signal.shape()));
  if (valid_len > signal.dim(0)) throw InputError("fusion_forward: valid length exceeds the padded signal");
  PaddedBatch batch{ad::reshape(signal, {1, signal.dim(0)}), {valid_len}};
  const double speeds[] = {speed_kmh};
  const ad::Tensor out = fusion_forward(batch, speeds, net, training, dropout_seed);
  return ad::reshape(out, {out.dim(0), out.dim(2)});
}

}  // namespace wavestiff::fusion
