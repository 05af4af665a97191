#pragma once

// Full HBAF graph for a batch of dialogues: per-dialogue audio and text
// context networks, fusion, then pooled classification and contrastive terms.

#include "hbaf/contrastive.hpp"
#include "hbaf/feature_store.hpp"
#include "hbaf/fusion.hpp"
#include "hbaf/model_config.hpp"
#include "hbaf/parameters.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hbaf {

struct LossConfig {
  double mu = 0.2;
  contrastive::ContrastiveConfig contrastive;
};

struct LossReport {
  double ce = 0.0;
  double inter = 0.0;
  double total = 0.0;  // ce + mu_effective * inter
  double audio_fused = 0.0;
  double text_fused = 0.0;
  double relative = 0.0;
  double mu_effective = 0.0;

  bool operator==(const LossReport&) const = default;
};

class HbafModel {
 public:
  /// Registers and initializes every parameter the config uses.
  HbafModel(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters (e.g. a checkpoint); names and shapes must match.
  HbafModel(ModelConfig config, ParameterStore params);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 private:
  ModelConfig config_;
  ParameterStore params_;
};

/// Registers parameters for `config` into `store` in canonical order.
void register_model_params(ParameterStore& store, const ModelConfig& config, Rng& rng);

/// Row-wise logits h_m W + b from `clf.w` / `clf.b`.
ad::Var classify_logits(Graph& g, ad::Var h_m);
/// Mean over rows of -log softmax(logits)[label], via log-sum-exp.
ad::Var cross_entropy(ad::Var logits, std::span<const int> labels);
/// ce + mu * inter.
double total_loss(double ce, double inter, double mu);

struct BatchForward {
  std::vector<fusion::FusionState> states;  // one per dialogue
  ad::Var h_a, h_l, h_m;                   // pooled over the batch
  ad::Var logits;
  ad::Var ce;
  contrastive::InterModalTerms inter;  // invalid members when K < 2
  ad::Var total;
  std::vector<int> labels;
  LossReport report;
};

BatchForward forward_batch(Graph& g, const ModelConfig& config,
                           std::span<const DialogueRecord* const> batch, const LossConfig& loss);

}  // namespace hbaf
