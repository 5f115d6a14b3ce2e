#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavestiff/datagen.hpp"
#include "wavestiff/model.hpp"
#include "wavestiff/training.hpp"

namespace wavestiff::config {

// Everything a command needs besides file paths.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  training::TrainConfig train;
  datagen::GeneratorConfig generator;
  datagen::SplitCounts counts;
};

enum class ValueKind { kInt, kFloat, kBool, kString, kIntList, kFloatList };

struct KeyInfo {
  std::string key;  // dotted, e.g. "model.levels"
  ValueKind kind;
  std::string help;
};

// Every accepted dotted key, in dump order.
const std::vector<KeyInfo>& keys();

// Flat JSON object of dotted keys. ConfigError on unknown keys or values of
// the wrong type.
void apply_json(RunConfig& config, const nlohmann::json& flat);

// Applies one textual value, as given on the command line. Lists accept
// "8,16" or "[8,16]".
void apply_value(RunConfig& config, std::string_view key, std::string_view text);

// Flat object holding every key with its resolved value.
nlohmann::json resolved_json(const RunConfig& config);

nlohmann::json load_json_file(const std::filesystem::path& path);  // IoError / ParseError
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

// Runs every validate() and ties the seed into train.seed.
void finalize(RunConfig& config);

// Parses "100/20/20".
datagen::SplitCounts parse_counts(std::string_view text);

// Value of WAVESTIFF_SEED, if set and well formed. ConfigError when malformed.
bool seed_from_env(std::uint64_t& seed);

}  // namespace wavestiff::config
