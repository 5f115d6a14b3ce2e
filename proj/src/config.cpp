#include "wavestiff/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "wavestiff/error.hpp"

namespace wavestiff::config {

namespace {

using nlohmann::json;

struct Entry {
  KeyInfo info;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T, typename Field>
Entry entry(std::string key, ValueKind kind, std::string help, Field field) {
  return {{std::move(key), kind, std::move(help)},
          [field](const RunConfig& c) { return json(field(const_cast<RunConfig&>(c))); },
          [field](RunConfig& c, const json& v) { field(c) = v.get<T>(); }};
}

bool kind_matches(ValueKind kind, const json& v) {
  switch (kind) {
    case ValueKind::kInt: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case ValueKind::kFloat: return v.is_number();
    case ValueKind::kBool: return v.is_boolean();
    case ValueKind::kString: return v.is_string();
    case ValueKind::kIntList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) {
               return e.is_number_unsigned() || (e.is_number_integer() && e.get<std::int64_t>() >= 0);
             });
    case ValueKind::kFloatList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
  }
  return false;
}

const char* kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::kInt: return "a non-negative integer";
    case ValueKind::kFloat: return "a number";
    case ValueKind::kBool: return "true or false";
    case ValueKind::kString: return "a string";
    case ValueKind::kIntList: return "a list of non-negative integers";
    case ValueKind::kFloatList: return "a list of numbers";
  }
  return "?";
}

std::vector<Entry> build_entries() {
  using V = ValueKind;
  std::vector<Entry> e;
  e.push_back(entry<std::uint64_t>("seed", V::kInt, "master seed", [](RunConfig& c) -> auto& { return c.seed; }));

  e.push_back(entry<std::size_t>("model.levels", V::kInt, "packet tree depth L",
                                 [](RunConfig& c) -> auto& { return c.model.levels; }));
  e.push_back(entry<std::string>("model.wavelet", V::kString, "stem initialization: haar | db4",
                                 [](RunConfig& c) -> auto& { return c.model.wavelet; }));
  e.push_back(entry<bool>("model.learnable_stem", V::kBool, "train the stem filters",
                          [](RunConfig& c) -> auto& { return c.model.learnable_stem; }));
  e.push_back({{"model.boundary", V::kString, "stem boundary: zero | circular"},
               [](const RunConfig& c) { return json(wavelet::to_string(c.model.boundary)); },
               [](RunConfig& c, const json& v) { c.model.boundary = wavelet::boundary_from_string(v.get<std::string>()); }});
  e.push_back(entry<std::vector<std::size_t>>("model.block_widths", V::kIntList,
                                              "branch width of each inception block",
                                              [](RunConfig& c) -> auto& { return c.model.block_widths; }));
  e.push_back(entry<std::size_t>("model.embed_width", V::kInt, "speed embedding width E",
                                 [](RunConfig& c) -> auto& { return c.model.embed_width; }));
  e.push_back(entry<std::size_t>("model.fusion_hidden", V::kInt, "fusion LSTM hidden size",
                                 [](RunConfig& c) -> auto& { return c.model.fusion_hidden; }));
  e.push_back({{"model.head", V::kString, "estimator head: bilstm | lstm"},
               [](const RunConfig& c) { return json(head::to_string(c.model.head)); },
               [](RunConfig& c, const json& v) { c.model.head = head::variant_from_string(v.get<std::string>()); }});
  e.push_back(entry<std::size_t>("model.head_hidden", V::kInt, "head LSTM hidden size",
                                 [](RunConfig& c) -> auto& { return c.model.head_hidden; }));
  e.push_back(entry<std::size_t>("model.head_layers", V::kInt, "stacked head recurrent layers",
                                 [](RunConfig& c) -> auto& { return c.model.head_layers; }));
  e.push_back(entry<std::size_t>("model.dense_hidden", V::kInt, "dense stack hidden width",
                                 [](RunConfig& c) -> auto& { return c.model.dense_hidden; }));
  e.push_back(entry<double>("model.dropout", V::kFloat, "dropout rate on beam features",
                            [](RunConfig& c) -> auto& { return c.model.dropout; }));
  e.push_back(entry<std::size_t>("model.beams", V::kInt, "sleepers estimated per record",
                                 [](RunConfig& c) -> auto& { return c.model.beams; }));

  e.push_back(entry<std::size_t>("train.epochs", V::kInt, "training epochs",
                                 [](RunConfig& c) -> auto& { return c.train.epochs; }));
  e.push_back(entry<std::size_t>("train.batch_size", V::kInt, "records per batch",
                                 [](RunConfig& c) -> auto& { return c.train.batch_size; }));
  e.push_back(entry<double>("train.learning_rate", V::kFloat, "base Adam learning rate",
                            [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
  e.push_back(entry<double>("train.factor", V::kFloat, "plateau reduction factor",
                            [](RunConfig& c) -> auto& { return c.train.factor; }));
  e.push_back(entry<std::size_t>("train.patience", V::kInt, "plateau patience in epochs",
                                 [](RunConfig& c) -> auto& { return c.train.patience; }));

  e.push_back(entry<std::size_t>("gen.train", V::kInt, "training records",
                                 [](RunConfig& c) -> auto& { return c.counts.train; }));
  e.push_back(entry<std::size_t>("gen.val", V::kInt, "validation records",
                                 [](RunConfig& c) -> auto& { return c.counts.val; }));
  e.push_back(entry<std::size_t>("gen.test", V::kInt, "test records",
                                 [](RunConfig& c) -> auto& { return c.counts.test; }));
  e.push_back(entry<double>("generator.sampling_rate", V::kFloat, "Hz",
                            [](RunConfig& c) -> auto& { return c.generator.sampling_rate; }));
  e.push_back(entry<double>("generator.sleeper_spacing", V::kFloat, "m",
                            [](RunConfig& c) -> auto& { return c.generator.sleeper_spacing; }));
  e.push_back(entry<double>("generator.modal_mass", V::kFloat, "kg",
                            [](RunConfig& c) -> auto& { return c.generator.modal_mass; }));
  e.push_back(entry<double>("generator.damping_ratio", V::kFloat, "burst damping ratio",
                            [](RunConfig& c) -> auto& { return c.generator.damping_ratio; }));
  e.push_back(entry<double>("generator.speed_exponent", V::kFloat, "amplitude speed exponent",
                            [](RunConfig& c) -> auto& { return c.generator.speed_exponent; }));
  e.push_back(entry<double>("generator.stiffness_exponent", V::kFloat, "amplitude stiffness exponent",
                            [](RunConfig& c) -> auto& { return c.generator.stiffness_exponent; }));
  e.push_back(entry<double>("generator.reference_speed_kmh", V::kFloat, "amplitude reference speed",
                            [](RunConfig& c) -> auto& { return c.generator.reference_speed_kmh; }));
  e.push_back(entry<double>("generator.reference_stiffness", V::kFloat, "amplitude reference stiffness, N/m",
                            [](RunConfig& c) -> auto& { return c.generator.reference_stiffness; }));
  e.push_back(entry<std::vector<double>>("generator.coupling_kernel", V::kFloatList, "neighbour smoothing weights",
                                         [](RunConfig& c) -> auto& { return c.generator.coupling_kernel; }));
  e.push_back(entry<double>("generator.noise_ratio", V::kFloat, "noise power over signal power",
                            [](RunConfig& c) -> auto& { return c.generator.noise_ratio; }));
  e.push_back(entry<double>("generator.roughness", V::kFloat, "broadband roughness level",
                            [](RunConfig& c) -> auto& { return c.generator.roughness; }));
  e.push_back(entry<double>("generator.pad_mode_gain", V::kFloat, "railpad resonance gain, 0 disables",
                            [](RunConfig& c) -> auto& { return c.generator.pad_mode_gain; }));
  e.push_back(entry<double>("generator.pad_mass", V::kFloat, "railpad resonance mass, kg",
                            [](RunConfig& c) -> auto& { return c.generator.pad_mass; }));
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = build_entries();
  return table;
}

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.info.key == key) return e;
  }
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void set_checked(RunConfig& config, const Entry& e, const json& v) {
  if (!kind_matches(e.info.kind, v)) {
    throw ConfigError("configuration key '" + e.info.key + "' expects " + kind_name(e.info.kind) + ", got " +
                      v.dump());
  }
  e.set(config, v);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<KeyInfo>& keys() {
  static const std::vector<KeyInfo> list = [] {
    std::vector<KeyInfo> out;
    for (const auto& e : entries()) out.push_back(e.info);
    return out;
  }();
  return list;
}

void apply_json(RunConfig& config, const json& flat) {
  if (!flat.is_object()) throw ConfigError("configuration must be a flat JSON object of dotted keys");
  for (const auto& [key, value] : flat.items()) set_checked(config, find_entry(key), value);
}

void apply_value(RunConfig& config, std::string_view key, std::string_view text) {
  const Entry& e = find_entry(key);
  const std::string t = trim(text);
  json v;
  switch (e.info.kind) {
    case ValueKind::kString:
      v = t;
      break;
    case ValueKind::kIntList:
    case ValueKind::kFloatList: {
      std::string body = t;
      if (!body.empty() && body.front() == '[') {
        v = json::parse(body, nullptr, false);
      } else {
        v = json::array();
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
          json x = json::parse(trim(item), nullptr, false);
          v.push_back(x);
        }
      }
      break;
    }
    default:
      v = json::parse(t, nullptr, false);
  }
  if (v.is_discarded()) {
    throw ConfigError("cannot parse value '" + std::string(text) + "' for '" + e.info.key + "'");
  }
  set_checked(config, e, v);
}

json resolved_json(const RunConfig& config) {
  json out = json::object();
  for (const auto& e : entries()) out[e.info.key] = e.get(config);
  return out;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void finalize(RunConfig& config) {
  config.train.seed = config.seed;
  config.model.validate();
  config.train.validate();
  config.generator.validate();
}

datagen::SplitCounts parse_counts(std::string_view text) {
  datagen::SplitCounts c;
  std::size_t values[3];
  std::stringstream ss{std::string(text)};
  std::string part;
  int n = 0;
  while (std::getline(ss, part, '/')) {
    if (n == 3) throw ConfigError("counts must look like TRAIN/VAL/TEST");
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(part, &pos);
      if (pos != part.size() || v <= 0) throw ConfigError("");
      values[n++] = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("counts must look like TRAIN/VAL/TEST with positive integers, got '" + std::string(text) +
                        "'");
    }
  }
  if (n != 3) throw ConfigError("counts must look like TRAIN/VAL/TEST");
  c.train = values[0];
  c.val = values[1];
  c.test = values[2];
  return c;
}

bool seed_from_env(std::uint64_t& seed) {
  const char* raw = std::getenv("WAVESTIFF_SEED");
  if (!raw || !*raw) return false;
  try {
    std::size_t pos = 0;
    const std::string s(raw);
    if (s.front() == '-') throw std::invalid_argument("negative");
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    seed = v;
    return true;
  } catch (const std::exception&) {
    throw ConfigError(std::string("WAVESTIFF_SEED must be a non-negative integer, got '") + raw + "'");
  }
}

}  // namespace wavestiff::config
