#include "wavestiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "wavestiff/error.hpp"
#include "wavestiff/fusion.hpp"
#include "wavestiff/ops.hpp"

namespace wavestiff::training {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be positive");
  if (!(factor > 0 && factor < 1)) throw ConfigError("train.factor must lie in (0, 1)");
  if (patience < 1) throw ConfigError("train.patience must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"factor", c.factor},       {"patience", c.patience},     {"seed", c.seed}};
}

void adam_step(const std::vector<NamedTensor>& params, AdamState& state, double lr) {
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: parameter list changed between steps");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != params[k].tensor.numel()) {
      throw DimensionError("adam_step: moment size mismatch for '" + params[k].name + "'");
    }
    const auto g = params[k].tensor.grad();
    ad::Tensor t = params[k].tensor;
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

PlateauScheduler::PlateauScheduler(double factor, std::size_t patience) : factor_(factor), patience_(patience) {
  if (!(factor > 0 && factor < 1)) throw ConfigError("scheduler factor must lie in (0, 1)");
  if (patience < 1) throw ConfigError("scheduler patience must be at least 1");
}

double PlateauScheduler::step(double val_loss, double lr) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_ = 0;
    return lr;
  }
  if (++bad_ >= patience_) {
    bad_ = 0;
    return lr * factor_;
  }
  return lr;
}

double lr_plateau_update(std::span<const double> history, double lr, double factor, std::size_t patience) {
  PlateauScheduler s(factor, patience);
  for (double loss : history) lr = s.step(loss, lr);
  return lr;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Batch {
  fusion::PaddedBatch inputs;
  std::vector<double> speeds;
  ad::Tensor targets;  // [B, N, 2], normalized
};

Batch make_batch(const std::vector<datagen::Record>& records, std::span<const std::size_t> idx, const Model& model) {
  Batch b;
  std::vector<std::span<const double>> signals;
  std::vector<double> target;
  const std::size_t beams = model.config().beams;
  for (auto i : idx) {
    const auto& r = records[i];
    if (r.targets.size() != beams) {
      throw InputError("record " + std::to_string(i) + " has " + std::to_string(r.targets.size()) +
                       " targets, model estimates " + std::to_string(beams));
    }
    signals.emplace_back(r.signal);
    b.speeds.push_back(r.speed_kmh);
    for (const auto& row : r.targets) {
      target.push_back(row[0] / head::kScaleKp);
      target.push_back(row[1] / head::kScaleKb);
    }
  }
  b.inputs = fusion::pad_batch(signals, model.config().levels);
  b.targets = ad::Tensor::from({idx.size(), beams, 2}, std::move(target));
  return b;
}

template <typename Fn>
void for_each_batch(std::size_t n, std::size_t batch_size, const std::vector<std::size_t>& order, Fn&& fn) {
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    fn(std::span<const std::size_t>(order.data() + start, len));
  }
}

bool is_output_bias(const std::string& name) { return name == "head.dense2.b"; }

}  // namespace

double evaluate_loss(const Model& model, const std::vector<datagen::Record>& records, std::size_t batch_size) {
  if (records.empty()) throw InputError("evaluate_loss: empty record set");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  ad::NoGradScope no_grad;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0;
  for_each_batch(records.size(), batch_size, order, [&](std::span<const std::size_t> idx) {
    const auto b = make_batch(records, idx, model);
    const auto pred = model.forward(b.inputs, b.speeds, false, 0);
    total += ad::mse_loss(pred, b.targets).item() * static_cast<double>(idx.size());
  });
  return total / static_cast<double>(records.size());
}

std::vector<head::StiffnessTargets> predict(const Model& model, const std::vector<datagen::Record>& records,
                                            std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  ad::NoGradScope no_grad;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<head::StiffnessTargets> out;
  const std::size_t beams = model.config().beams;
  for_each_batch(records.size(), batch_size, order, [&](std::span<const std::size_t> idx) {
    std::vector<std::span<const double>> signals;
    std::vector<double> speeds;
    for (auto i : idx) {
      signals.emplace_back(records[i].signal);
      speeds.push_back(records[i].speed_kmh);
    }
    const auto pred = model.forward(fusion::pad_batch(signals, model.config().levels), speeds, false, 0);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      out.push_back(head::denormalize(ad::reshape(ad::select(pred, 0, b), {beams, 2})));
    }
  });
  return out;
}

FitResult fit(Model& model, const std::vector<datagen::Record>& train, const std::vector<datagen::Record>& val,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty() || val.empty()) throw InputError("fit: training and validation splits must be non-empty");

  auto params = model.trainable();
  for (auto& p : params) {
    if (!is_output_bias(p.name)) continue;
    double mean[2] = {0, 0};
    for (const auto& r : train) {
      for (const auto& row : r.targets) {
        mean[0] += row[0] / head::kScaleKp;
        mean[1] += row[1] / head::kScaleKb;
      }
    }
    const double n = static_cast<double>(train.size() * model.config().beams);
    auto b = p.tensor.mutable_data();
    b[0] = mean[0] / n;
    b[1] = mean[1] / n;
  }

  FitResult result;
  result.best = model.parameters().snapshot();
  AdamState adam;
  PlateauScheduler scheduler(config.factor, config.patience);
  Rng shuffle_rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double lr = config.learning_rate;
  std::uint64_t batch_counter = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double train_total = 0;
    try {
      for_each_batch(train.size(), config.batch_size, order, [&](std::span<const std::size_t> idx) {
        const auto b = make_batch(train, idx, model);
        for (auto& p : params) p.tensor.zero_grad();
        ad::Tape tape;
        double loss_value = 0;
        {
          ad::TapeScope scope(tape);
          const auto pred = model.forward(b.inputs, b.speeds, true, mix(config.seed ^ mix(++batch_counter)));
          const auto loss = ad::mse_loss(pred, b.targets);
          loss_value = loss.item();
          if (!std::isfinite(loss_value)) {
            throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
          }
          tape.backward(loss);
        }
        adam_step(params, adam, lr);
        train_total += loss_value * static_cast<double>(idx.size());
      });
    } catch (const TrainingError& e) {
      result.diverged = true;
      result.divergence_message = e.what();
      break;
    }
    EpochLog entry{epoch, train_total / static_cast<double>(train.size()), evaluate_loss(model, val, config.batch_size),
                   lr};
    if (!std::isfinite(entry.val_loss)) {
      result.diverged = true;
      result.divergence_message = "non-finite validation loss at epoch " + std::to_string(epoch);
      break;
    }
    result.log.push_back(entry);
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      result.best = model.parameters().snapshot();
    }
    lr = scheduler.step(entry.val_loss, lr);
    if (on_epoch) on_epoch(entry);
  }
  for (auto& p : params) p.tensor.zero_grad();
  return result;
}

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,train_loss,val_loss,lr\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(17);
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << '\n';
  out.flags(flags);
  out.precision(precision);
}

}  // namespace wavestiff::training
