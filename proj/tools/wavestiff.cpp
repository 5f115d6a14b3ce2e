// wavestiff: dataset generation, training, evaluation and inspection.

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wavestiff/commands.hpp"
#include "wavestiff/config.hpp"
#include "wavestiff/error.hpp"

namespace {

namespace cfg = wavestiff::config;
namespace cmd = wavestiff::commands;

// Dotted keys that also answer to a short flag.
const std::map<std::string, std::string> kAliases = {
    {"train.epochs", "--epochs"}, {"model.head", "--head"}, {"model.levels", "--levels"},
    {"model.wavelet", "--wavelet"}, {"train.batch_size", "--batch-size"}, {"train.learning_rate", "--lr"},
};

struct ConfigFlags {
  std::string config_file;
  std::string counts;
  std::map<std::string, std::string> values;  // key -> raw text
  std::vector<std::pair<std::string, CLI::Option*>> options;
};

void add_config_flags(CLI::App& app, ConfigFlags& flags, bool with_counts) {
  app.add_option("--config", flags.config_file, "flat JSON file of dotted keys")->check(CLI::ExistingFile);
  if (with_counts) app.add_option("--counts", flags.counts, "split sizes TRAIN/VAL/TEST, e.g. 100/20/20");
  for (const auto& info : cfg::keys()) {
    std::string names = "--" + info.key;
    if (auto it = kAliases.find(info.key); it != kAliases.end()) names += "," + it->second;
    CLI::Option* opt = app.add_option(names, flags.values[info.key], info.help);
    opt->group("Configuration keys");
    flags.options.emplace_back(info.key, opt);
  }
}

// Defaults, then --config, then WAVESTIFF_SEED, then flags.
cfg::RunConfig resolve(const ConfigFlags& flags) {
  cfg::RunConfig rc;
  if (!flags.config_file.empty()) cfg::apply_json(rc, cfg::load_json_file(flags.config_file));
  std::uint64_t env_seed = 0;
  if (cfg::seed_from_env(env_seed)) rc.seed = env_seed;
  for (const auto& [key, opt] : flags.options) {
    if (opt->count() > 0) cfg::apply_value(rc, key, flags.values.at(key));
  }
  if (!flags.counts.empty()) rc.counts = cfg::parse_counts(flags.counts);
  cfg::finalize(rc);
  return rc;
}

std::optional<cfg::RunConfig> optional_config(const std::string& path) {
  if (path.empty()) return std::nullopt;
  cfg::RunConfig rc;
  cfg::apply_json(rc, cfg::load_json_file(path));
  rc.model.validate();
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet-inception track stiffness estimation from axle-box acceleration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "wavestiff 1.0");

  ConfigFlags gen_flags;
  cmd::GenOptions gen_opts;
  auto* gen = app.add_subcommand("gen", "generate a seeded surrogate dataset");
  gen->add_option("--out", gen_opts.out_dir, "output directory")->required();
  add_config_flags(*gen, gen_flags, true);

  ConfigFlags train_flags;
  cmd::TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", train_opts.data_dir, "directory holding train.jsonl and val.jsonl")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", train_opts.out_dir, "output directory")->required();
  train->add_flag("--quiet", train_opts.quiet, "no per-epoch progress");
  add_config_flags(*train, train_flags, false);

  std::string eval_config;
  cmd::EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "per-scenario metrics of a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_opts.model.checkpoint, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", eval_opts.dataset, "JSONL dataset")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_opts.out_dir, "output directory")->required();
  eval->add_option("--config", eval_config, "model config; defaults to config.json beside the checkpoint")
      ->check(CLI::ExistingFile);

  std::string predict_config;
  cmd::PredictOptions predict_opts;
  auto* predict = app.add_subcommand("predict", "per-sleeper stiffness of one record");
  predict->add_option("--checkpoint", predict_opts.model.checkpoint, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--record", predict_opts.records, "JSONL file")->required()->check(CLI::ExistingFile);
  predict->add_option("--index", predict_opts.index, "record index within the file");
  predict->add_option("--out", predict_opts.out, "output JSON file; stdout when omitted");
  predict->add_option("--config", predict_config, "model config; defaults to config.json beside the checkpoint")
      ->check(CLI::ExistingFile);

  cmd::DecomposeOptions dec_opts;
  std::string dec_boundary = "zero";
  auto* decompose = app.add_subcommand("decompose", "wavelet packet subbands of a signal as CSV");
  decompose->add_option("--signal", dec_opts.signal, "JSONL record file, JSON array or plain numbers")
      ->required()
      ->check(CLI::ExistingFile);
  decompose->add_option("--index", dec_opts.index, "record index for JSONL input");
  decompose->add_option("--wavelet", dec_opts.wavelet, "haar | db4")->check(CLI::IsMember({"haar", "db4"}));
  decompose->add_flag("--unnormalized", dec_opts.unnormalized, "haar with unit taps [1, 1] / [1, -1]");
  decompose->add_option("--levels,-L", dec_opts.levels, "tree depth")->check(CLI::Range(1, 16));
  decompose->add_option("--boundary", dec_boundary, "zero | circular")->check(CLI::IsMember({"zero", "circular"}));
  decompose->add_option("--out", dec_opts.out, "output CSV; stdout when omitted");

  cmd::GradcheckOptions gc_opts;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every registered operation");
  gradcheck->add_option("--seed", gc_opts.seed, "input seed");
  gradcheck->add_flag("--include-corrupted", gc_opts.include_corrupted,
                      "append an operation with a deliberately wrong backward rule");
  gradcheck->add_option("--report", gc_opts.report, "CSV report path");

  std::string export_config;
  cmd::ExportFiltersOptions exp_opts;
  auto* exportf = app.add_subcommand("export-filters", "stem filter coefficients and drift from initialization");
  exportf->add_option("--checkpoint", exp_opts.model.checkpoint, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  exportf->add_option("--out", exp_opts.out_dir, "output directory")->required();
  exportf->add_option("--config", export_config, "model config; defaults to config.json beside the checkpoint")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd::cmd_gen(resolve(gen_flags), gen_opts, std::cerr);
    if (*train) return cmd::cmd_train(resolve(train_flags), train_opts, std::cerr);
    if (*eval) {
      eval_opts.model.config = optional_config(eval_config);
      return cmd::cmd_eval(eval_opts, std::cerr);
    }
    if (*predict) {
      predict_opts.model.config = optional_config(predict_config);
      return cmd::cmd_predict(predict_opts, std::cout, std::cerr);
    }
    if (*decompose) {
      dec_opts.boundary = wavestiff::wavelet::boundary_from_string(dec_boundary);
      return cmd::cmd_decompose(dec_opts, std::cout, std::cerr);
    }
    if (*gradcheck) return cmd::cmd_gradcheck(gc_opts, std::cout);
    if (*exportf) {
      exp_opts.model.config = optional_config(export_config);
      return cmd::cmd_export_filters(exp_opts, std::cerr);
    }
  } catch (const wavestiff::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmd::kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmd::kFailure;
  }
  return cmd::kUsage;
}
