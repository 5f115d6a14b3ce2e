#include "wavestiff/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "wavestiff/error.hpp"

namespace wavestiff::datagen {

Scenario scenario_from_string(std::string_view name) {
  if (name == "uniform") return Scenario::kUniform;
  if (name == "drop1") return Scenario::kDrop1;
  if (name == "drop3") return Scenario::kDrop3;
  if (name == "transition") return Scenario::kTransition;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (expected uniform|drop1|drop3|transition)");
}

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::kUniform: return "uniform";
    case Scenario::kDrop1: return "drop1";
    case Scenario::kDrop3: return "drop3";
    case Scenario::kTransition: return "transition";
  }
  throw ConfigError("invalid scenario value");
}

void StiffnessRanges::validate() const {
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto& r = sets[s];
    if (!(r.kp_min > 0 && r.kp_min < r.kp_max && r.kb_min > 0 && r.kb_min < r.kb_max)) {
      throw ConfigError("stiffness range set R" + std::to_string(s + 1) + " is empty or non-positive");
    }
    if (s > 0 && (r.kp_max > sets[s - 1].kp_min || r.kb_max > sets[s - 1].kb_min)) {
      throw ConfigError("stiffness range sets must be ordered R3 < R2 < R1");
    }
  }
}

int StiffnessRanges::classify(double kp, double kb) const {
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (sets[s].contains(kp, kb)) return static_cast<int>(s);
  }
  return -1;
}

void GeneratorConfig::validate() const {
  if (!(sampling_rate > 0)) throw ConfigError("generator.sampling_rate must be positive");
  if (!(sleeper_spacing > 0)) throw ConfigError("generator.sleeper_spacing must be positive");
  if (!(modal_mass > 0) || !(pad_mass > 0)) throw ConfigError("generator masses must be positive");
  if (!(damping_ratio > 0 && damping_ratio < 1)) throw ConfigError("generator.damping_ratio must lie in (0, 1)");
  if (!(reference_speed_kmh > 0) || !(reference_stiffness > 0)) {
    throw ConfigError("generator reference speed and stiffness must be positive");
  }
  if (coupling_kernel.empty() || coupling_kernel.size() % 2 == 0) {
    throw ConfigError("generator.coupling_kernel must have odd length");
  }
  const double total = std::accumulate(coupling_kernel.begin(), coupling_kernel.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("generator.coupling_kernel must sum to 1");
  if (std::any_of(coupling_kernel.begin(), coupling_kernel.end(), [](double w) { return w < 0; })) {
    throw ConfigError("generator.coupling_kernel weights must be non-negative");
  }
  if (!(noise_ratio >= 0 && noise_ratio < 1)) throw ConfigError("generator.noise_ratio must lie in [0, 1)");
  if (!(roughness >= 0)) throw ConfigError("generator.roughness must be non-negative");
  if (!(pad_mode_gain >= 0)) throw ConfigError("generator.pad_mode_gain must be non-negative");
  ranges.validate();
}

nlohmann::json to_json(const GeneratorConfig& c) {
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& r : c.ranges.sets) ranges.push_back({r.kp_min, r.kp_max, r.kb_min, r.kb_max});
  return {{"sampling_rate", c.sampling_rate},
          {"sleeper_spacing", c.sleeper_spacing},
          {"modal_mass", c.modal_mass},
          {"damping_ratio", c.damping_ratio},
          {"speed_exponent", c.speed_exponent},
          {"stiffness_exponent", c.stiffness_exponent},
          {"reference_speed_kmh", c.reference_speed_kmh},
          {"reference_stiffness", c.reference_stiffness},
          {"coupling_kernel", c.coupling_kernel},
          {"noise_ratio", c.noise_ratio},
          {"roughness", c.roughness},
          {"pad_mode_gain", c.pad_mode_gain},
          {"pad_mass", c.pad_mass},
          {"levels", c.levels},
          {"ranges", ranges}};
}

std::size_t signal_length(double speed_kmh, const GeneratorConfig& config) {
  if (!(speed_kmh > 0)) throw ConfigError("speed must be positive");
  const double v = speed_kmh / 3.6;
  return static_cast<std::size_t>(
      std::llround(config.sampling_rate * static_cast<double>(kSleepers) * config.sleeper_spacing / v));
}

namespace {

head::StiffnessRow draw(const RangeSet& r, Rng& rng) {
  std::uniform_real_distribution<double> kp(r.kp_min, r.kp_max);
  std::uniform_real_distribution<double> kb(r.kb_min, r.kb_max);
  const double p = kp(rng);
  return {p, kb(rng)};
}

std::size_t pick(std::size_t lo, std::size_t hi, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

head::StiffnessTargets sample_scenario(Scenario kind, const StiffnessRanges& ranges, Rng& rng) {
  head::StiffnessTargets k(kSleepers);
  const std::size_t base = pick(0, 1, rng);
  switch (kind) {
    case Scenario::kUniform:
      for (auto& row : k) row = draw(ranges.sets[base], rng);
      break;
    case Scenario::kDrop1:
    case Scenario::kDrop3: {
      const std::size_t run = kind == Scenario::kDrop1 ? 1 : 3;
      const std::size_t lower = base == 0 ? pick(1, 2, rng) : 2;
      const std::size_t start = pick(0, kSleepers - run, rng);
      for (std::size_t i = 0; i < kSleepers; ++i) {
        const bool dropped = i >= start && i < start + run;
        k[i] = draw(ranges.sets[dropped ? lower : base], rng);
      }
      break;
    }
    case Scenario::kTransition: {
      const std::size_t other = 1 - base;
      for (std::size_t i = 0; i < kSleepers; ++i) k[i] = draw(ranges.sets[i < kSleepers / 2 ? base : other], rng);
      break;
    }
    default:
      throw ConfigError("unknown scenario kind");
  }
  return k;
}

std::vector<double> effective_stiffness(const head::StiffnessTargets& k, std::span<const double> kernel) {
  const std::size_t n = k.size();
  std::vector<double> series(n);
  for (std::size_t i = 0; i < n; ++i) series[i] = 1.0 / (1.0 / k[i][0] + 1.0 / k[i][1]);
  const auto centre = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  std::vector<double> smooth(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kernel.size(); ++j) {
      const auto src = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i + j) - centre, 0,
                                                  static_cast<std::ptrdiff_t>(n) - 1);
      smooth[i] += kernel[j] * series[static_cast<std::size_t>(src)];
    }
  }
  return smooth;
}

std::vector<double> synthesize_signal(const head::StiffnessTargets& k, double speed_kmh, const GeneratorConfig& config,
                                      Rng& rng) {
  if (!(speed_kmh > 0)) throw ConfigError("speed must be positive");
  for (const auto& row : k) {
    if (!(row[0] > 0 && row[1] > 0)) throw ConfigError("stiffness values must be positive");
  }
  const std::size_t T = signal_length(speed_kmh, config);
  const std::size_t min_len = std::size_t{1} << config.levels;
  if (T < min_len) {
    throw ConfigError("signal of " + std::to_string(T) + " samples is shorter than 2^" +
                      std::to_string(config.levels) + "; raise the sampling rate");
  }
  const double v = speed_kmh / 3.6;
  const double dt = 1.0 / config.sampling_rate;
  const double speed_gain = std::pow(speed_kmh / config.reference_speed_kmh, config.speed_exponent);
  const auto ks = effective_stiffness(k, config.coupling_kernel);

  std::vector<double> x(T, 0.0);
  auto add_burst = [&](double t0, double omega, double amp) {
    const auto first = static_cast<std::size_t>(std::ceil(t0 / dt - 1e-9));
    for (std::size_t n = first; n < T; ++n) {
      const double tau = static_cast<double>(n) * dt - t0;
      x[n] += amp * std::exp(-config.damping_ratio * omega * tau) * std::sin(omega * tau);
    }
  };
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double t0 = static_cast<double>(i) * config.sleeper_spacing / v;
    const double omega = std::sqrt(ks[i] / config.modal_mass);
    const double amp = speed_gain * std::pow(ks[i] / config.reference_stiffness, config.stiffness_exponent);
    add_burst(t0, omega, amp);
    if (config.pad_mode_gain > 0) {
      const double omega_p = std::sqrt(k[i][0] / config.pad_mass);
      const double amp_p = config.pad_mode_gain * speed_gain *
                           std::pow(k[i][0] / (5.0 * config.reference_stiffness), config.stiffness_exponent);
      add_burst(t0, omega_p, amp_p);
    }
  }
  if (config.roughness > 0) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& s : x) s += config.roughness * speed_gain * n01(rng);
  }
  return x;
}

std::vector<double> add_noise(std::span<const double> signal, double ratio, Rng& rng) {
  if (!(ratio >= 0 && ratio < 1)) throw ConfigError("noise ratio must lie in [0, 1)");
  std::vector<double> out(signal.begin(), signal.end());
  if (ratio == 0 || signal.empty()) return out;
  double power = 0;
  for (double s : signal) power += s * s;
  power /= static_cast<double>(signal.size());
  if (power == 0) return out;
  std::normal_distribution<double> noise(0.0, std::sqrt(ratio * power));
  for (auto& s : out) s += noise(rng);
  return out;
}

Record generate_record(double speed_kmh, Scenario scenario, const GeneratorConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  Record r;
  r.speed_kmh = speed_kmh;
  r.scenario = scenario;
  r.seed = seed;
  r.targets = sample_scenario(scenario, config.ranges, rng);
  const auto clean = synthesize_signal(r.targets, speed_kmh, config, rng);
  r.signal = add_noise(clean, config.noise_ratio, rng);
  return r;
}

std::uint64_t child_seed(std::uint64_t master_seed, std::size_t split, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<Record> generate_split(std::size_t split, std::size_t count, const GeneratorConfig& config,
                                   std::uint64_t master_seed) {
  config.validate();
  std::vector<Record> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_record(kSpeedsKmh[i % 4], kScenarios[(i / 4) % 4], config,
                                  child_seed(master_seed, split, i)));
  }
  return out;
}

nlohmann::json record_to_json(const Record& r) {
  std::vector<double> kp, kb;
  for (const auto& row : r.targets) {
    kp.push_back(row[0]);
    kb.push_back(row[1]);
  }
  return {{"schema_version", kSchemaVersion},
          {"speed_kmh", r.speed_kmh},
          {"scenario", to_string(r.scenario)},
          {"signal", r.signal},
          {"targets_kp", kp},
          {"targets_kb", kb},
          {"seed", r.seed}};
}

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
  return *it;
}

std::vector<double> numbers(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_array()) throw SchemaError(std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) throw SchemaError(std::string("field '") + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

Record record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("record must be a JSON object");
  const auto& version = field(j, "schema_version");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    throw SchemaError("unsupported schema_version " + version.dump());
  }
  Record r;
  const auto& speed = field(j, "speed_kmh");
  if (!speed.is_number()) throw SchemaError("field 'speed_kmh' must be a number");
  r.speed_kmh = speed.get<double>();
  const auto& scenario = field(j, "scenario");
  if (!scenario.is_string()) throw SchemaError("field 'scenario' must be a string");
  try {
    r.scenario = scenario_from_string(scenario.get<std::string>());
  } catch (const ConfigError&) {
    throw DataError("unknown scenario tag '" + scenario.get<std::string>() + "'");
  }
  r.signal = numbers(j, "signal");
  const auto kp = numbers(j, "targets_kp");
  const auto kb = numbers(j, "targets_kb");
  if (kp.size() != kSleepers || kb.size() != kSleepers) {
    throw SchemaError("targets_kp and targets_kb must each hold " + std::to_string(kSleepers) + " values");
  }
  for (std::size_t i = 0; i < kSleepers; ++i) r.targets.push_back({kp[i], kb[i]});
  const auto& seed = field(j, "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    throw SchemaError("field 'seed' must be a non-negative integer");
  }
  r.seed = seed.get<std::uint64_t>();
  return r;
}

void write_records(std::ostream& out, const std::vector<Record>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_dataset(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_records(out, records);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Record> read_records(std::istream& in, const std::string& source) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + "malformed JSON (" + e.what() + ")");
    }
    try {
      out.push_back(record_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

std::vector<Record> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_records(in, path.string());
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

nlohmann::json generate_dataset(const SplitCounts& counts, const GeneratorConfig& config, std::uint64_t master_seed,
                                const std::filesystem::path& dir) {
  config.validate();
  const std::array<std::size_t, 3> sizes = {counts.train, counts.val, counts.test};
  if (std::any_of(sizes.begin(), sizes.end(), [](std::size_t n) { return n == 0; })) {
    throw ConfigError("split counts must be positive");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["seed"] = master_seed;
  manifest["generator"] = to_json(config);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string name(kSplitNames[s]);
    const auto records = generate_split(s, sizes[s], config, master_seed);
    const auto path = dir / (name + ".jsonl");
    write_dataset(path, records);
    nlohmann::json per_speed = nlohmann::json::object(), per_scenario = nlohmann::json::object();
    for (const auto& r : records) {
      const std::string speed = std::to_string(static_cast<int>(r.speed_kmh));
      per_speed[speed] = per_speed.value(speed, 0) + 1;
      const std::string sc = to_string(r.scenario);
      per_scenario[sc] = per_scenario.value(sc, 0) + 1;
    }
    manifest["counts"][name] = sizes[s];
    manifest["per_speed"][name] = per_speed;
    manifest["per_scenario"][name] = per_scenario;
    manifest["files"][name] = {{"path", name + ".jsonl"}, {"fnv1a64", file_digest(path)}};
  }
  const auto manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot open " + manifest_path.string() + " for writing");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + manifest_path.string());
  return manifest;
}

}  // namespace wavestiff::datagen
