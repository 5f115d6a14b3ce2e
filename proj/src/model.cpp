#include "wavestiff/model.hpp"

#include <set>

#include "wavestiff/error.hpp"
#include "wavestiff/ops.hpp"

namespace wavestiff {

void ModelConfig::validate() const {
  if (levels < 1 || levels > 8) throw ConfigError("model.levels must lie in [1, 8]");
  wavelet::filters_by_name(wavelet);
  for (auto w : block_widths) {
    if (w == 0) throw ConfigError("model.block_widths entries must be positive");
  }
  if (fusion_hidden == 0 || head_hidden == 0 || head_layers == 0 || dense_hidden == 0) {
    throw ConfigError("model hidden sizes and head_layers must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (beams == 0) throw ConfigError("model.beams must be positive");
}

std::vector<inception::InceptionBlockConfig> ModelConfig::block_configs() const {
  std::vector<inception::InceptionBlockConfig> out;
  std::size_t channels = std::size_t{1} << levels;
  for (auto w : block_widths) {
    out.push_back({channels, w, w, w, w});
    channels = 4 * w;
  }
  return out;
}

std::size_t ModelConfig::feature_channels() const {
  return block_widths.empty() ? (std::size_t{1} << levels) : 4 * block_widths.back();
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"levels", c.levels},
          {"wavelet", c.wavelet},
          {"learnable_stem", c.learnable_stem},
          {"boundary", wavelet::to_string(c.boundary)},
          {"block_widths", c.block_widths},
          {"embed_width", c.embed_width},
          {"fusion_hidden", c.fusion_hidden},
          {"head", head::to_string(c.head)},
          {"head_hidden", c.head_hidden},
          {"head_layers", c.head_layers},
          {"dense_hidden", c.dense_hidden},
          {"dropout", c.dropout},
          {"beams", c.beams}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"levels",       "wavelet",       "learnable_stem", "boundary",
                                              "block_widths", "embed_width",   "fusion_hidden",  "head",
                                              "head_hidden",  "head_layers",   "dense_hidden",   "dropout",
                                              "beams"};
  if (!j.is_object()) throw SchemaError("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw SchemaError("unknown model config key '" + key + "'");
  }
  ModelConfig c;
  try {
    if (j.contains("levels")) c.levels = j.at("levels").get<std::size_t>();
    if (j.contains("wavelet")) c.wavelet = j.at("wavelet").get<std::string>();
    if (j.contains("learnable_stem")) c.learnable_stem = j.at("learnable_stem").get<bool>();
    if (j.contains("boundary")) c.boundary = wavelet::boundary_from_string(j.at("boundary").get<std::string>());
    if (j.contains("block_widths")) c.block_widths = j.at("block_widths").get<std::vector<std::size_t>>();
    if (j.contains("embed_width")) c.embed_width = j.at("embed_width").get<std::size_t>();
    if (j.contains("fusion_hidden")) c.fusion_hidden = j.at("fusion_hidden").get<std::size_t>();
    if (j.contains("head")) c.head = head::variant_from_string(j.at("head").get<std::string>());
    if (j.contains("head_hidden")) c.head_hidden = j.at("head_hidden").get<std::size_t>();
    if (j.contains("head_layers")) c.head_layers = j.at("head_layers").get<std::size_t>();
    if (j.contains("dense_hidden")) c.dense_hidden = j.at("dense_hidden").get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    if (j.contains("beams")) c.beams = j.at("beams").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig infer_config(const ModelParams& params) {
  ModelConfig c;
  c.levels = 0;
  while (params.find("stem.l" + std::to_string(c.levels + 1) + ".n0")) ++c.levels;
  if (c.levels == 0) throw SchemaError("checkpoint has no stem filters");
  const std::size_t k = params.at("stem.l1.n0").dim(2);
  if (k == 2) {
    c.wavelet = "haar";
  } else if (k == 8) {
    c.wavelet = "db4";
  } else {
    throw SchemaError("checkpoint stem filter length " + std::to_string(k) + " matches no known wavelet");
  }
  c.block_widths.clear();
  for (std::size_t i = 0;; ++i) {
    const ad::Tensor* w = params.find("inception." + std::to_string(i) + ".b1.w");
    if (!w) break;
    c.block_widths.push_back(w->dim(0));
  }
  const ad::Tensor* embed = params.find("embed.w");
  c.embed_width = embed ? embed->dim(1) : 0;
  c.fusion_hidden = params.at("fusion.lstm.wh").dim(0);
  if (params.find("head.bilstm0.fwd.wx")) {
    c.head = head::HeadVariant::kBiLstm;
    c.head_hidden = params.at("head.bilstm0.fwd.wh").dim(0);
    c.head_layers = 0;
    while (params.find("head.bilstm" + std::to_string(c.head_layers) + ".fwd.wx")) ++c.head_layers;
  } else {
    c.head = head::HeadVariant::kLstm;
    c.head_hidden = params.at("head.lstm0.wh").dim(0);
    c.head_layers = 0;
    while (params.find("head.lstm" + std::to_string(c.head_layers) + ".wx")) ++c.head_layers;
  }
  c.dense_hidden = params.at("head.dense1.w").dim(1);
  c.validate();
  return c;
}

namespace {

fusion::FusionNetwork build_fusion(const ModelConfig& config, Rng& rng) {
  wavelet::LwptStem stem(config.levels, wavelet::filters_by_name(config.wavelet), config.learnable_stem,
                         config.boundary);
  std::vector<inception::InceptionBlock> blocks;
  for (const auto& bc : config.block_configs()) blocks.push_back(inception::InceptionBlock::init(bc, rng));
  fusion::ConditionEmbedding embedding = config.embed_width > 0 ? fusion::ConditionEmbedding::init(config.embed_width, rng)
                                                                : fusion::ConditionEmbedding{};
  auto lstm = recurrent::LstmParams::init(config.feature_channels() + config.embed_width, config.fusion_hidden, rng);
  return fusion::FusionNetwork{std::move(stem), std::move(blocks), std::move(embedding), std::move(lstm),
                               config.dropout, config.beams};
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config), fusion_([&] {
        config.validate();
        Rng rng(seed);
        return build_fusion(config, rng);
      }()) {
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  head_ = head::HeadParams::init(config.head, config.fusion_hidden, config.head_hidden, config.head_layers,
                                 config.dense_hidden, rng);

  for (auto& [name, t] : fusion_.stem.named_parameters()) params_.add(name, t);
  for (std::size_t i = 0; i < fusion_.blocks.size(); ++i) {
    for (auto& [name, t] : fusion_.blocks[i].named_parameters("inception." + std::to_string(i))) params_.add(name, t);
  }
  if (fusion_.embedding.width() > 0) {
    for (auto& [name, t] : fusion_.embedding.named_parameters("embed")) params_.add(name, t);
  }
  for (auto& [name, t] : fusion_.lstm.named_parameters("fusion.lstm")) params_.add(name, t);
  for (auto& [name, t] : head_.named_parameters()) params_.add(name, t);
}

Model Model::from_params(const ModelConfig& config, const ModelParams& params) {
  Model model(config, 0);
  model.params_.assign_from(params);
  return model;
}

std::vector<NamedTensor> Model::trainable() const {
  std::vector<NamedTensor> out;
  for (const auto& e : params_.entries()) {
    if (e.tensor.requires_grad()) out.push_back(e);
  }
  return out;
}

ad::Tensor Model::forward(const fusion::PaddedBatch& batch, std::span<const double> speeds_kmh, bool training,
                          std::uint64_t dropout_seed) const {
  const ad::Tensor beams = fusion::fusion_forward(batch, speeds_kmh, fusion_, training, dropout_seed);  // [N, B, H]
  return ad::permute(head::head_forward(beams, head_), {1, 0, 2});                                      // [B, N, 2]
}

}  // namespace wavestiff
