#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wavestiff/config.hpp"
#include "wavestiff/wavelet.hpp"

namespace wavestiff::commands {

namespace fs = std::filesystem;

// Exit codes shared by every command.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;    // check failed (gradcheck)
inline constexpr int kUsage = 2;      // bad configuration or input
inline constexpr int kDiverged = 3;   // training stopped on a non-finite gradient

struct GenOptions {
  fs::path out_dir;
};
int cmd_gen(const config::RunConfig& config, const GenOptions& options, std::ostream& log);

struct TrainOptions {
  fs::path data_dir;  // holds train.jsonl and val.jsonl
  fs::path out_dir;
  bool quiet = false;
};
// Writes checkpoint.wibl, train_log.csv, config.json and summary.json.
int cmd_train(const config::RunConfig& config, const TrainOptions& options, std::ostream& log);

struct ModelSource {
  fs::path checkpoint;
  // Model config to rebuild the network with. When empty, config.json beside
  // the checkpoint is used if present, else the architecture is inferred.
  std::optional<config::RunConfig> config;
};

struct EvalOptions {
  ModelSource model;
  fs::path dataset;  // JSONL
  fs::path out_dir;  // metrics.csv, metrics.json
};
int cmd_eval(const EvalOptions& options, std::ostream& log);

struct PredictOptions {
  ModelSource model;
  fs::path records;  // JSONL
  std::size_t index = 0;
  fs::path out;  // stdout when empty
};
int cmd_predict(const PredictOptions& options, std::ostream& out, std::ostream& log);

struct DecomposeOptions {
  fs::path signal;  // JSONL record file, JSON array, or whitespace/comma separated numbers
  std::size_t index = 0;
  std::string wavelet = "haar";
  bool unnormalized = false;  // haar only: f_l = [1, 1], f_h = [1, -1]
  std::size_t levels = 3;
  wavelet::Boundary boundary = wavelet::Boundary::kZero;
  fs::path out;  // stdout when empty
};
int cmd_decompose(const DecomposeOptions& options, std::ostream& out, std::ostream& log);

struct GradcheckOptions {
  std::uint64_t seed = 7;
  bool include_corrupted = false;
  fs::path report;  // optional CSV
};
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

struct ExportFiltersOptions {
  ModelSource model;
  fs::path out_dir;  // filters.csv, filter_drift.csv
  double min_ratio = 0.5;
  double max_ratio = 2.0;
};
int cmd_export_filters(const ExportFiltersOptions& options, std::ostream& log);

// Reads a signal in any format cmd_decompose accepts.
std::vector<double> read_signal(const fs::path& path, std::size_t index = 0);

struct FilterDrift {
  std::size_t level = 0;
  std::size_t node = 0;
  bool high = false;
  double initial_norm = 0;
  double trained_norm = 0;
  double ratio = 0;
  double max_abs_change = 0;
};
std::vector<FilterDrift> filter_drift(const wavelet::LwptStem& stem);
void write_drift_csv(std::ostream& out, const std::vector<FilterDrift>& rows);

}  // namespace wavestiff::commands
