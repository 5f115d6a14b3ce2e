#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavestiff/datagen.hpp"
#include "wavestiff/model.hpp"
#include "wavestiff/params.hpp"

namespace wavestiff::training {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double factor = 0.8;
  std::size_t patience = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// Bias-corrected Adam update of every tensor in `params` from its gradient.
// TrainingError names the first parameter holding a non-finite gradient; no
// tensor is modified in that case.
void adam_step(const std::vector<NamedTensor>& params, AdamState& state, double lr);

// Reduce-on-plateau: the rate is multiplied by `factor` once the validation
// loss has failed to improve strictly for `patience` consecutive epochs, and
// the counter restarts after every reduction or new best.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, std::size_t patience);
  double step(double val_loss, double lr);
  std::size_t bad_epochs() const { return bad_; }
  double best() const { return best_; }

 private:
  double factor_;
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

// Replays `history` through a fresh scheduler starting at `lr`.
double lr_plateau_update(std::span<const double> history, double lr, double factor, std::size_t patience);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;  // rate used during the epoch
};

struct FitResult {
  ModelParams best;  // snapshot at the lowest validation loss
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string divergence_message;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains `model` in place. On divergence training stops and `best` holds the
// last good checkpoint.
FitResult fit(Model& model, const std::vector<datagen::Record>& train, const std::vector<datagen::Record>& val,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

// Mean squared error on normalized targets, inference mode.
double evaluate_loss(const Model& model, const std::vector<datagen::Record>& records, std::size_t batch_size = 16);

// Denormalized per-sleeper estimates, inference mode.
std::vector<head::StiffnessTargets> predict(const Model& model, const std::vector<datagen::Record>& records,
                                            std::size_t batch_size = 16);

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log);

}  // namespace wavestiff::training
