#pragma once

// Multi-modal fusion: parallel self/cross scaled-dot attention, a sigmoid
// filter gate mixing each modality's self-attended features with the
// cross-attended ones, and a residual block per modality.
//
// Stream wiring (per modality m, other modality o):
//   self_m  = softmax(Q_m K_m^T / sqrt(d)) V_m
//   cross_m = softmax(Q_m K_o^T / sqrt(d)) V_o
//   G_m     = sigmoid(self_m W_s,m + cross_m W_c,m + b_m)
//   star_m  = G_m * self_m + (1 - G_m) * cross_m
//   H_LN    = LN(P(concat(H_m, star_m)))
//   h_m     = LN(H_LN + FF(H_LN))
// and h_m (fused) = concat(h_a, h_l).

#include "hbaf/model_config.hpp"
#include "hbaf/parameters.hpp"

namespace hbaf::fusion {

struct FusionState {
  ad::Var self_a, self_l;    // zeta H_a, zeta H_l
  ad::Var cross_a, cross_l;  // cross_a: audio queries over text (zeta H_{a-l}); cross_l: reverse
  ad::Var gate_a, gate_l;
  ad::Var star_a, star_l;
  ad::Var h_a, h_l;
  ad::Var h_m;  // N x 2d
};

struct GateOutput {
  ad::Var gate;  // invalid under the no_gate ablation
  ad::Var star;
};

/// Registers `fus.attn.{a|l}.{q|k|v}` (plus `fus.xattn.*` when cross projections
/// are separate), `fus.gate.*`, `fus.res.{a|l}.*`, skipping ablated parts.
void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

ad::Var self_attention(Graph& g, ad::Var h, Modality m);
/// Queries from `src`, keys/values from `tgt`. Throws on mismatched row counts.
ad::Var cross_attention(Graph& g, ad::Var src, ad::Var tgt, Modality src_modality,
                        const ModelConfig& cfg);
GateOutput dynamic_filter_gate(Graph& g, ad::Var self, ad::Var cross, Modality m,
                               const Ablations& ablations);
ad::Var residual_block(Graph& g, ad::Var original, ad::Var star, Modality m);

FusionState fuse(Graph& g, ad::Var h_audio, ad::Var h_text, const ModelConfig& cfg);

}  // namespace hbaf::fusion
