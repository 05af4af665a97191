#include "hbaf/fusion.hpp"

#include "hbaf/layers.hpp"

#include <stdexcept>
#include <string>

namespace hbaf::fusion {

namespace {

std::string attn_name(bool cross, Modality m, const char* which) {
  return std::string(cross ? "fus.xattn." : "fus.attn.") + modality_tag(m) + "." + which;
}

std::string res_prefix(Modality m) { return std::string("fus.res.") + modality_tag(m); }

Modality other(Modality m) { return m == Modality::kAudio ? Modality::kText : Modality::kAudio; }

}  // namespace

void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const Ablations& ab = cfg.ablations;
  if (ab.no_fusion) return;
  const Index d = cfg.d_model;
  if (!ab.no_attention) {
    for (bool cross : {false, true}) {
      if (cross && !cfg.separate_cross_projections) continue;
      for (Modality m : {Modality::kAudio, Modality::kText}) {
        for (const char* which : {"q", "k", "v"}) {
          store.create_glorot(attn_name(cross, m, which), d, d, rng);
        }
      }
    }
  }
  if (!ab.no_gate) {
    for (const char* w : {"fus.gate.w_sa", "fus.gate.w_ca", "fus.gate.w_sl", "fus.gate.w_cl"}) {
      store.create_glorot(w, d, d, rng);
    }
    store.create("fus.gate.b_a", 1, d);
    store.create("fus.gate.b_l", 1, d);
  }
  if (!ab.no_residual) {
    for (Modality m : {Modality::kAudio, Modality::kText}) {
      const std::string p = res_prefix(m);
      layers::register_linear(store, p + ".proj", 2 * d, d, rng);
      layers::register_layer_norm(store, p + ".ln1", d);
      layers::register_linear(store, p + ".ff1", d, cfg.fusion_ff, rng);
      layers::register_linear(store, p + ".ff2", cfg.fusion_ff, d, rng);
      layers::register_layer_norm(store, p + ".ln2", d);
    }
  }
}

ad::Var self_attention(Graph& g, ad::Var h, Modality m) {
  ad::Var q = ad::matmul(h, g.param(attn_name(false, m, "q")));
  ad::Var k = ad::matmul(h, g.param(attn_name(false, m, "k")));
  ad::Var v = ad::matmul(h, g.param(attn_name(false, m, "v")));
  return layers::scaled_dot_attention(g, q, k, v);
}

ad::Var cross_attention(Graph& g, ad::Var src, ad::Var tgt, Modality src_modality,
                        const ModelConfig& cfg) {
  if (src.rows() != tgt.rows()) {
    throw std::invalid_argument("cross_attention: modalities cover " + std::to_string(src.rows()) +
                                " and " + std::to_string(tgt.rows()) + " utterances");
  }
  const bool cross = cfg.separate_cross_projections;
  const Modality tgt_modality = other(src_modality);
  ad::Var q = ad::matmul(src, g.param(attn_name(cross, src_modality, "q")));
  ad::Var k = ad::matmul(tgt, g.param(attn_name(cross, tgt_modality, "k")));
  ad::Var v = ad::matmul(tgt, g.param(attn_name(cross, tgt_modality, "v")));
  return layers::scaled_dot_attention(g, q, k, v);
}

GateOutput dynamic_filter_gate(Graph& g, ad::Var self, ad::Var cross, Modality m,
                               const Ablations& ablations) {
  if (ablations.no_gate) return {ad::Var{}, ad::scale(ad::add(self, cross), 0.5)};
  const bool audio = m == Modality::kAudio;
  ad::Var pre = ad::add(ad::matmul(self, g.param(audio ? "fus.gate.w_sa" : "fus.gate.w_sl")),
                        ad::matmul(cross, g.param(audio ? "fus.gate.w_ca" : "fus.gate.w_cl")));
  ad::Var gate = ad::sigmoid(ad::add_row(pre, g.param(audio ? "fus.gate.b_a" : "fus.gate.b_l")));
  g.log_gate(gate);
  ad::Var star = ad::add(ad::mul(gate, self), ad::mul(ad::one_minus(gate), cross));
  return {gate, star};
}

ad::Var residual_block(Graph& g, ad::Var original, ad::Var star, Modality m) {
  const std::string p = res_prefix(m);
  ad::Var joined = layers::linear(g, ad::concat_cols({original, star}), p + ".proj");
  ad::Var h_ln = layers::layer_norm(g, joined, p + ".ln1");
  ad::Var ff = layers::linear(g, ad::relu(layers::linear(g, h_ln, p + ".ff1")), p + ".ff2");
  return layers::layer_norm(g, ad::add(h_ln, ff), p + ".ln2");
}

FusionState fuse(Graph& g, ad::Var h_audio, ad::Var h_text, const ModelConfig& cfg) {
  if (h_audio.rows() != h_text.rows()) {
    throw std::invalid_argument("fuse: audio and text cover different utterance counts");
  }
  const Ablations& ab = cfg.ablations;
  FusionState s;
  if (ab.no_fusion) {
    s.h_a = h_audio;
    s.h_l = h_text;
    s.h_m = ad::concat_cols({s.h_a, s.h_l});
    return s;
  }
  if (ab.no_attention) {
    s.self_a = h_audio;
    s.self_l = h_text;
    s.cross_a = h_text;
    s.cross_l = h_audio;
  } else {
    s.self_a = self_attention(g, h_audio, Modality::kAudio);
    s.self_l = self_attention(g, h_text, Modality::kText);
    s.cross_a = cross_attention(g, h_audio, h_text, Modality::kAudio, cfg);
    s.cross_l = cross_attention(g, h_text, h_audio, Modality::kText, cfg);
  }
  const GateOutput ga = dynamic_filter_gate(g, s.self_a, s.cross_a, Modality::kAudio, ab);
  const GateOutput gl = dynamic_filter_gate(g, s.self_l, s.cross_l, Modality::kText, ab);
  s.gate_a = ga.gate;
  s.gate_l = gl.gate;
  s.star_a = ga.star;
  s.star_l = gl.star;
  if (ab.no_residual) {
    s.h_a = s.star_a;
    s.h_l = s.star_l;
  } else {
    s.h_a = residual_block(g, h_audio, s.star_a, Modality::kAudio);
    s.h_l = residual_block(g, h_text, s.star_l, Modality::kText);
  }
  s.h_m = ad::concat_cols({s.h_a, s.h_l});
  return s;
}

}  // namespace hbaf::fusion
