#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavestiff/head.hpp"
#include "wavestiff/init.hpp"

namespace wavestiff::datagen {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kSleepers = 10;
inline constexpr std::array<double, 4> kSpeedsKmh = {35.0, 50.0, 55.0, 65.0};

enum class Scenario { kUniform, kDrop1, kDrop3, kTransition };
inline constexpr std::array<Scenario, 4> kScenarios = {Scenario::kUniform, Scenario::kDrop1, Scenario::kDrop3,
                                                       Scenario::kTransition};

Scenario scenario_from_string(std::string_view name);  // ConfigError on unknown names
std::string to_string(Scenario scenario);

// Bounds of one range set, N/m.
struct RangeSet {
  double kp_min, kp_max, kb_min, kb_max;
  bool contains(double kp, double kb) const {
    return kp >= kp_min && kp <= kp_max && kb >= kb_min && kb <= kb_max;
  }
};

// Three ordered range sets: sets[0] is R1 (stiffest), sets[2] is R3.
struct StiffnessRanges {
  std::array<RangeSet, 3> sets = {{{2.0e8, 3.0e8, 1.6e7, 2.2e7},
                                   {1.0e8, 2.0e8, 1.0e7, 1.6e7},
                                   {0.1e8, 1.0e8, 0.4e7, 1.0e7}}};

  void validate() const;
  // Index of the range set containing (kp, kb), or -1.
  int classify(double kp, double kb) const;
};

struct GeneratorConfig {
  double sampling_rate = 2000.0;  // Hz
  double sleeper_spacing = 0.6;   // m
  double modal_mass = 300.0;      // kg
  double damping_ratio = 0.3;
  double speed_exponent = 1.0;
  double stiffness_exponent = 1.0;
  double reference_speed_kmh = 50.0;
  double reference_stiffness = 2.0e7;  // N/m
  std::vector<double> coupling_kernel = {0.15, 0.70, 0.15};
  double noise_ratio = 0.10;
  double roughness = 0.02;
  // Rail-on-pad resonance driven by k_p alone. Zero disables it.
  double pad_mode_gain = 0.0;
  double pad_mass = 30.0;  // kg
  std::size_t levels = 3;  // signals must hold at least 2^levels samples
  StiffnessRanges ranges;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& config);

struct Record {
  std::vector<double> signal;
  double speed_kmh = 0.0;
  head::StiffnessTargets targets;  // [10] x (k_p, k_b), N/m
  Scenario scenario = Scenario::kUniform;
  std::uint64_t seed = 0;
};

// round(f_s * 10 d / v).
std::size_t signal_length(double speed_kmh, const GeneratorConfig& config);

head::StiffnessTargets sample_scenario(Scenario kind, const StiffnessRanges& ranges, Rng& rng);

// Series combination of k_p and k_b, smoothed over neighbours with edge clamping.
std::vector<double> effective_stiffness(const head::StiffnessTargets& k, std::span<const double> kernel);

std::vector<double> synthesize_signal(const head::StiffnessTargets& k, double speed_kmh, const GeneratorConfig& config,
                                      Rng& rng);

// Gaussian noise with variance ratio * mean(signal^2).
std::vector<double> add_noise(std::span<const double> signal, double ratio, Rng& rng);

Record generate_record(double speed_kmh, Scenario scenario, const GeneratorConfig& config, std::uint64_t seed);

struct SplitCounts {
  std::size_t train = 2000;
  std::size_t val = 400;
  std::size_t test = 400;
};

inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

// Child seed of record `index` in split `split` (0 train, 1 val, 2 test).
std::uint64_t child_seed(std::uint64_t master_seed, std::size_t split, std::size_t index);

// Record i cycles speeds with i % 4 and scenarios with (i / 4) % 4.
std::vector<Record> generate_split(std::size_t split, std::size_t count, const GeneratorConfig& config,
                                   std::uint64_t master_seed);

// Writes train/val/test JSONL plus manifest.json into `dir`; returns the manifest.
nlohmann::json generate_dataset(const SplitCounts& counts, const GeneratorConfig& config, std::uint64_t master_seed,
                                const std::filesystem::path& dir);

nlohmann::json record_to_json(const Record& record);
Record record_from_json(const nlohmann::json& j);  // SchemaError / DataError

void write_records(std::ostream& out, const std::vector<Record>& records);
void write_dataset(const std::filesystem::path& path, const std::vector<Record>& records);
std::vector<Record> read_records(std::istream& in, const std::string& source = "<stream>");
std::vector<Record> read_dataset(const std::filesystem::path& path);

// FNV-1a over the file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace wavestiff::datagen
