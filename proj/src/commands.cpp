#include "wavestiff/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavestiff/datagen.hpp"
#include "wavestiff/error.hpp"
#include "wavestiff/gradcheck.hpp"
#include "wavestiff/metrics.hpp"
#include "wavestiff/model.hpp"
#include "wavestiff/params.hpp"
#include "wavestiff/training.hpp"

namespace wavestiff::commands {

namespace {

using nlohmann::json;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  return out;
}

struct LoadedModel {
  Model model;
  std::string config_source;
};

LoadedModel load_model(const ModelSource& source) {
  ModelParams params = load_checkpoint(source.checkpoint);
  if (source.config) {
    return {Model::from_params(source.config->model, params), "--config"};
  }
  const fs::path beside = source.checkpoint.parent_path() / "config.json";
  if (fs::exists(beside)) {
    config::RunConfig rc;
    config::apply_json(rc, config::load_json_file(beside));
    rc.model.validate();
    return {Model::from_params(rc.model, params), beside.string()};
  }
  return {Model::from_params(params), "inferred from checkpoint"};
}

void write_text(const fs::path& path, std::ostream& fallback, const std::string& text) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

double l2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

int cmd_gen(const config::RunConfig& config, const GenOptions& options, std::ostream& log) {
  ensure_dir(options.out_dir);
  datagen::generate_dataset(config.counts, config.generator, config.seed, options.out_dir);
  config::write_json_file(options.out_dir / "config.json", config::resolved_json(config));
  log << "wrote " << config.counts.train << "/" << config.counts.val << "/" << config.counts.test
      << " records to " << options.out_dir.string() << " (seed " << config.seed << ")\n";
  return kOk;
}

int cmd_train(const config::RunConfig& config, const TrainOptions& options, std::ostream& log) {
  const auto train = datagen::read_dataset(options.data_dir / "train.jsonl");
  const auto val = datagen::read_dataset(options.data_dir / "val.jsonl");
  if (train.empty()) throw InputError("training split is empty");
  if (val.empty()) throw InputError("validation split is empty");
  ensure_dir(options.out_dir);
  config::write_json_file(options.out_dir / "config.json", config::resolved_json(config));

  Model model(config.model, config.seed);
  log << "training on " << train.size() << " records, validating on " << val.size() << ", "
      << model.parameters().scalar_count() << " parameters\n";
  const auto on_epoch = [&](const training::EpochLog& e) {
    if (options.quiet) return;
    log << "epoch " << e.epoch << "  train " << std::setprecision(6) << e.train_loss << "  val " << e.val_loss
        << "  lr " << e.lr << std::endl;
  };
  const training::FitResult result = training::fit(model, train, val, config.train, on_epoch);

  {
    auto out = open_out(options.out_dir / "train_log.csv");
    training::write_log_csv(out, result.log);
  }
  if (result.best.size() > 0) save_checkpoint(options.out_dir / "checkpoint.wibl", result.best);

  json summary = {{"epochs_run", result.log.size()},
                  {"best_epoch", result.best_epoch},
                  {"best_val_loss", result.best_val_loss},
                  {"diverged", result.diverged},
                  {"checkpoint", result.best.size() > 0 ? "checkpoint.wibl" : ""}};
  if (result.diverged) summary["divergence"] = result.divergence_message;
  config::write_json_file(options.out_dir / "summary.json", summary);

  if (result.diverged) {
    log << "error: training diverged: " << result.divergence_message << "\n";
    if (result.best.size() > 0) {
      log << "last good checkpoint (epoch " << result.best_epoch << ") kept at "
          << (options.out_dir / "checkpoint.wibl").string() << "\n";
    }
    return kDiverged;
  }
  log << "best validation loss " << std::setprecision(10) << result.best_val_loss << " at epoch "
      << result.best_epoch << "\n";
  return kOk;
}

int cmd_eval(const EvalOptions& options, std::ostream& log) {
  const LoadedModel loaded = load_model(options.model);
  const auto records = datagen::read_dataset(options.dataset);
  if (records.empty()) throw InputError(options.dataset.string() + " holds no records");
  const auto predictions = training::predict(loaded.model, records);
  const auto rows = metrics::evaluate_by_scenario(predictions, records);
  const double loss = training::evaluate_loss(loaded.model, records);

  ensure_dir(options.out_dir);
  {
    auto out = open_out(options.out_dir / "metrics.csv");
    metrics::write_metrics_csv(out, rows);
  }
  json summary = metrics::metrics_json(rows);
  summary["normalized_mse"] = loss;
  summary["dataset"] = options.dataset.string();
  summary["checkpoint"] = options.model.checkpoint.string();
  config::write_json_file(options.out_dir / "metrics.json", summary);

  log << std::setprecision(6);
  for (const auto& r : rows) {
    log << std::left << std::setw(11) << r.scenario << " kp " << r.kp_mape << "%  kb " << r.kb_mape
        << "%  overall " << r.overall_mape << "%\n";
  }
  log << "normalized mse " << std::setprecision(10) << loss << "\n";
  return kOk;
}

int cmd_predict(const PredictOptions& options, std::ostream& out, std::ostream& log) {
  const LoadedModel loaded = load_model(options.model);
  const auto records = datagen::read_dataset(options.records);
  if (options.index >= records.size()) {
    throw InputError("record index " + std::to_string(options.index) + " out of range; " +
                     options.records.string() + " holds " + std::to_string(records.size()));
  }
  const std::vector<datagen::Record> one{records[options.index]};
  const auto pred = training::predict(loaded.model, one).front();

  json sleepers = json::array();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sleepers.push_back({{"sleeper", i}, {"k_p", pred[i][0]}, {"k_b", pred[i][1]}});
  }
  const json doc = {{"speed_kmh", one[0].speed_kmh}, {"unit", "N/m"}, {"sleepers", sleepers}};
  write_text(options.out, out, doc.dump(2) + "\n");
  if (!options.out.empty()) log << "wrote " << pred.size() << " sleeper estimates to " << options.out.string() << "\n";
  return kOk;
}

std::vector<double> read_signal(const fs::path& path, std::size_t index) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  if (path.extension() == ".jsonl") {
    const auto records = datagen::read_records(in, path.string());
    if (index >= records.size()) {
      throw InputError("record index " + std::to_string(index) + " out of range; " + path.string() + " holds " +
                       std::to_string(records.size()));
    }
    return records[index].signal;
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw InputError(path.string() + " holds no samples");
  std::vector<double> signal;
  if (text[first] == '[' || text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    const json& arr = j.is_object() && j.contains("signal") ? j.at("signal") : j;
    if (!arr.is_array()) throw SchemaError(path.string() + ": expected an array of numbers or an object with 'signal'");
    for (const auto& v : arr) {
      if (!v.is_number()) throw SchemaError(path.string() + ": signal holds a non-numeric value");
      signal.push_back(v.get<double>());
    }
  } else {
    std::string token;
    std::stringstream ss(text);
    std::size_t line = 1;
    for (char c; ss.get(c);) {
      if (c == ',' || c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        if (!token.empty()) {
          std::size_t pos = 0;
          try {
            signal.push_back(std::stod(token, &pos));
          } catch (const std::exception&) {
            pos = 0;
          }
          if (pos != token.size()) {
            throw ParseError(path.string() + ":line " + std::to_string(line) + ": not a number: '" + token + "'");
          }
          token.clear();
        }
        if (c == '\n') ++line;
      } else {
        token += c;
      }
    }
    if (!token.empty()) {
      std::size_t pos = 0;
      try {
        signal.push_back(std::stod(token, &pos));
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != token.size()) {
        throw ParseError(path.string() + ":line " + std::to_string(line) + ": not a number: '" + token + "'");
      }
    }
  }
  if (signal.empty()) throw InputError(path.string() + " holds no samples");
  return signal;
}

int cmd_decompose(const DecomposeOptions& options, std::ostream& out, std::ostream& log) {
  if (options.unnormalized && options.wavelet != "haar") {
    throw ConfigError("--unnormalized applies to the haar wavelet only");
  }
  const wavelet::FilterPair filters =
      options.unnormalized ? wavelet::haar_filters(false) : wavelet::filters_by_name(options.wavelet);
  const auto signal = read_signal(options.signal, options.index);
  const ad::Tensor bands = wavelet::wpt_decompose(signal, filters, options.levels, options.boundary);
  const std::size_t rows = bands.shape()[0];
  const std::size_t cols = bands.shape()[1];
  std::ostringstream csv;
  csv << std::setprecision(17) << "subband_index,time_index,value\n";
  const auto data = bands.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) csv << r << ',' << c << ',' << data[r * cols + c] << '\n';
  }
  write_text(options.out, out, csv.str());
  if (!options.out.empty()) {
    log << "wrote " << rows << " subbands x " << cols << " samples to " << options.out.string() << "\n";
  }
  return kOk;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  auto cases = gradcheck::standard_cases(options.seed);
  if (options.include_corrupted) cases.push_back(gradcheck::corrupted_case(options.seed));
  const auto results = gradcheck::run_cases(cases);

  std::size_t failures = 0;
  std::ostringstream csv;
  csv << std::setprecision(17) << "operation,max_rel_error,elements_checked,passed\n";
  out << std::setprecision(3);
  for (const auto& r : results) {
    if (!r.passed) ++failures;
    out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(32) << r.name << " max rel error "
        << std::scientific << r.check.max_rel_error << std::defaultfloat << "\n";
    csv << r.name << ',' << r.check.max_rel_error << ',' << r.check.elements_checked << ','
        << (r.passed ? "true" : "false") << '\n';
  }
  out << results.size() - failures << "/" << results.size() << " operations within " << gradcheck::kTolerance
      << "\n";
  if (!options.report.empty()) write_text(options.report, out, csv.str());
  return failures == 0 ? kOk : kFailure;
}

std::vector<FilterDrift> filter_drift(const wavelet::LwptStem& stem) {
  const auto& init = stem.initial_filters();
  const std::size_t k = stem.filter_length();
  std::vector<FilterDrift> rows;
  for (std::size_t level = 1; level <= stem.levels(); ++level) {
    const std::size_t nodes = std::size_t{1} << (level - 1);
    for (std::size_t node = 0; node < nodes; ++node) {
      const auto data = stem.filter(level, node).data();
      for (int branch = 0; branch < 2; ++branch) {
        const std::vector<double>& ref = branch == 0 ? init.low : init.high;
        const std::vector<double> cur(data.begin() + branch * k, data.begin() + (branch + 1) * k);
        FilterDrift d;
        d.level = level;
        d.node = node;
        d.high = branch == 1;
        d.initial_norm = l2(ref);
        d.trained_norm = l2(cur);
        d.ratio = d.trained_norm / d.initial_norm;
        for (std::size_t j = 0; j < k; ++j) d.max_abs_change = std::max(d.max_abs_change, std::abs(cur[j] - ref[j]));
        rows.push_back(d);
      }
    }
  }
  return rows;
}

void write_drift_csv(std::ostream& out, const std::vector<FilterDrift>& rows) {
  out << std::setprecision(17) << "level,node,branch,initial_norm,trained_norm,norm_ratio,max_abs_change\n";
  for (const auto& d : rows) {
    out << d.level << ',' << d.node << ',' << (d.high ? "high" : "low") << ',' << d.initial_norm << ','
        << d.trained_norm << ',' << d.ratio << ',' << d.max_abs_change << '\n';
  }
}

int cmd_export_filters(const ExportFiltersOptions& options, std::ostream& log) {
  const LoadedModel loaded = load_model(options.model);
  const auto& stem = loaded.model.fusion().stem;
  ensure_dir(options.out_dir);
  {
    auto out = open_out(options.out_dir / "filters.csv");
    wavelet::write_filter_csv(out, wavelet::export_filter_distribution(stem));
  }
  const auto drift = filter_drift(stem);
  {
    auto out = open_out(options.out_dir / "filter_drift.csv");
    write_drift_csv(out, drift);
  }
  double lo = drift.front().ratio, hi = lo, change = 0;
  for (const auto& d : drift) {
    lo = std::min(lo, d.ratio);
    hi = std::max(hi, d.ratio);
    change = std::max(change, d.max_abs_change);
  }
  const bool in_band = lo >= options.min_ratio && hi <= options.max_ratio;
  log << std::setprecision(6) << drift.size() << " filters, norm ratio in [" << lo << ", " << hi
      << "], max coefficient change " << change << (in_band ? "" : "  (outside the expected band)") << "\n";
  return kOk;
}

}  // namespace wavestiff::commands
