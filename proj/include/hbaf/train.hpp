#pragma once

#include "hbaf/feature_store.hpp"
#include "hbaf/metrics.hpp"
#include "hbaf/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace hbaf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. `weight_decay` > 0 applies the decoupled form
/// theta -= lr * weight_decay * theta after the moment update.
class Adam {
 public:
  Adam(double learning_rate, AdamConfig config = {}, double weight_decay = 0.0);

  void step(ParameterStore& params);
  int steps() const { return t_; }

 private:
  double lr_;
  AdamConfig cfg_;
  double weight_decay_;
  int t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;  // dialogues
  double l2_weight = 3e-4;
  bool decoupled_l2 = false;
  int patience = 15;
  int max_epochs = 300;
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat64;
  AdamConfig adam;
  LossConfig loss;
  /// Also evaluate the train split after each epoch (costs one forward pass).
  bool track_train_metrics = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  LossReport train;  // utterance-weighted mean over the epoch's batches
  LossReport val;
  double val_weighted_f1 = 0.0;
  double val_accuracy = 0.0;
  double train_weighted_f1 = 0.0;
  double train_accuracy = 0.0;
  double l2_penalty = 0.0;  // l2_weight * sum theta^2 at the end of the epoch
  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_total = 0.0;
  bool early_stopped = false;
};

struct EvalResult {
  EvalReport metrics;
  LossReport loss;  // utterance-weighted mean over batches
  std::vector<int> predictions;
  std::vector<int> labels;
};

/// Forward-only pass over `records` in order, batch_size dialogues at a time.
EvalResult evaluate(HbafModel& model, const std::vector<const DialogueRecord*>& records,
                    const LossConfig& loss, int batch_size,
                    Precision precision = Precision::kFloat64);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place. On return the model holds the parameters of the epoch
/// with the lowest validation L_total. Throws NumericError naming the first
/// non-finite tensor if training diverges.
TrainResult train(HbafModel& model, const std::vector<const DialogueRecord*>& train_set,
                  const std::vector<const DialogueRecord*>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace hbaf
