#pragma once

// Inter-modal contrastive losses over a pooled batch of K utterances.
//
// For anchors X and candidates Y (both K x d), with s_ik = cos(X_i, Y_k):
//   loss = mean_i -log( exp(s_ii/tau) / (exp(s_ii/tau) + sum_{k != i} exp(s_ik/tau)) )
// With `literal_denominator` the sum runs over every k (the positive appears twice).

#include "hbaf/model_config.hpp"
#include "hbaf/parameters.hpp"

#include <span>

namespace hbaf::contrastive {

struct ContrastiveConfig {
  double tau = 0.1;
  double lambda1 = 1.0 / 3.0;  // audio anchor vs fused
  double lambda2 = 1.0 / 3.0;  // text anchor vs fused
  double lambda3 = 1.0 / 3.0;  // audio vs text
  bool literal_denominator = false;

  void validate() const;
};

/// x.y / (|x| |y|). Throws NumericError when either vector has zero norm.
double cosine_sim(std::span<const double> x, std::span<const double> y);

/// Registers `con.proj` (2d x d), the map from fused h_m into the unimodal space.
void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
ad::Var project_fused(Graph& g, ad::Var h_m);

/// InfoNCE with the positive for anchor i at candidate i.
ad::Var info_nce(ad::Var anchors, ad::Var candidates, const ContrastiveConfig& cfg);

/// Unimodal anchor (h_a or h_l) against the projected fused representation.
ad::Var absolute_loss(ad::Var unimodal, ad::Var fused_projected, const ContrastiveConfig& cfg);
/// Audio anchors against text candidates.
ad::Var relative_loss(ad::Var h_a, ad::Var h_l, const ContrastiveConfig& cfg);

struct InterModalTerms {
  ad::Var audio_fused;
  ad::Var text_fused;
  ad::Var relative;
  ad::Var total;  // lambda1 * audio_fused + lambda2 * text_fused + lambda3 * relative
};

InterModalTerms inter_modal_loss(ad::Var h_a, ad::Var h_l, ad::Var fused_projected,
                                 const ContrastiveConfig& cfg);

}  // namespace hbaf::contrastive
