#pragma once

// Text context network: builds H_l from utterance-level context vectors (l^r)
// and the three commonsense relation vectors (external, internal, purpose).
//
// For utterance t (1-based):
//   l_c_t = sum_{i<t} alpha_i * R_i,  alpha = softmax_i(v . tanh(R_i W_s + b_s))
//   s^x_t = GRU_x(s^x_{t-1}, P_x(l^x_t) + l_c_t)          for x in {e, i, p}
//   H_l[t] = P_out(concat(s^e_t, s^i_t, s^p_t))
// where R = P_r(l^r) and l_c_1 = 0.

#include "hbaf/model_config.hpp"
#include "hbaf/parameters.hpp"

#include <string>

namespace hbaf::txt {

/// Per-dialogue text inputs, each N x D_text.
struct TextInputs {
  ad::Var context;    // l^r
  ad::Var external;   // l^e
  ad::Var internal;   // l^i
  ad::Var purpose;    // l^p
};

/// Registers `txt.attn.*`, `txt.gru.{e|i|p}.*`, `txt.proj.{in_r|in_e|in_i|in_p|out}.*`.
void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

struct AttentionContext {
  ad::Var context;  // 1 x d
  ad::Var weights;  // 1 x (t-1); invalid when t == 1
};

/// Attention over rows [0, t-1) of the projected context matrix.
/// t is 1-based; t == 1 yields the zero vector.
AttentionContext soft_attention_context(Graph& g, ad::Var projected_context, Index t);

/// Gated recurrent update with parameters `<prefix>.w_x/.w_h/.b`,
/// column blocks [update, reset, candidate]:
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + (r * h) Un + bn),  h' = (1 - z) * h + z * n
ad::Var gru_step(Graph& g, ad::Var prev_state, ad::Var input, const std::string& prefix);

/// Returns H_l, N x d_model.
ad::Var text_context_forward(Graph& g, const TextInputs& in, const ModelConfig& cfg);

}  // namespace hbaf::txt
