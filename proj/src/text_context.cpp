#include "hbaf/text_context.hpp"

#include "hbaf/layers.hpp"

#include <array>
#include <vector>

namespace hbaf::txt {

namespace {

constexpr std::array<const char*, 3> kRelations = {"e", "i", "p"};

}  // namespace

void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const Index d = cfg.d_model;
  for (const char* which : {"in_r", "in_e", "in_i", "in_p"}) {
    layers::register_linear(store, std::string("txt.proj.") + which, cfg.text_dim, d, rng);
  }
  store.create_glorot("txt.attn.w", d, cfg.attn_hidden, rng);
  store.create("txt.attn.b", 1, cfg.attn_hidden);
  store.create_glorot("txt.attn.v", cfg.attn_hidden, 1, rng);
  for (const char* rel : kRelations) {
    const std::string p = std::string("txt.gru.") + rel;
    store.create_glorot(p + ".w_x", d, 3 * d, rng);
    store.create_glorot(p + ".w_h", d, 3 * d, rng);
    store.create(p + ".b", 1, 3 * d);
  }
  layers::register_linear(store, "txt.proj.out", 3 * d, d, rng);
}

namespace {

// N x 1 attention logits; row i depends on row i of the input only.
ad::Var attention_scores(Graph& g, ad::Var projected_context) {
  ad::Var u = ad::tanh(ad::add_row(ad::matmul(projected_context, g.param("txt.attn.w")),
                                   g.param("txt.attn.b")));
  return ad::matmul(u, g.param("txt.attn.v"));
}

AttentionContext attend(Graph& g, ad::Var projected_context, ad::Var scores, Index t) {
  const Index priors = t - 1;
  if (priors <= 0) return {g.zeros(1, projected_context.cols()), ad::Var{}};
  ad::Var alpha = ad::softmax_rows(ad::transpose(ad::slice_rows(scores, 0, priors)));
  g.log_attention(alpha);
  return {ad::matmul(alpha, ad::slice_rows(projected_context, 0, priors)), alpha};
}

}  // namespace

AttentionContext soft_attention_context(Graph& g, ad::Var projected_context, Index t) {
  if (t <= 1) return {g.zeros(1, projected_context.cols()), ad::Var{}};
  ad::Var priors = ad::slice_rows(projected_context, 0, t - 1);
  return attend(g, priors, attention_scores(g, priors), t);
}

ad::Var gru_step(Graph& g, ad::Var prev_state, ad::Var input, const std::string& prefix) {
  const Index d = prev_state.cols();
  ad::Var xw = ad::add_row(ad::matmul(input, g.param(prefix + ".w_x")), g.param(prefix + ".b"));
  ad::Var w_h = g.param(prefix + ".w_h");
  ad::Var hz_hr = ad::matmul(prev_state, ad::slice_cols(w_h, 0, 2 * d));
  ad::Var update = ad::sigmoid(ad::add(ad::slice_cols(xw, 0, d), ad::slice_cols(hz_hr, 0, d)));
  ad::Var reset = ad::sigmoid(ad::add(ad::slice_cols(xw, d, d), ad::slice_cols(hz_hr, d, d)));
  ad::Var cand = ad::tanh(ad::add(ad::slice_cols(xw, 2 * d, d),
                                  ad::matmul(ad::mul(reset, prev_state),
                                             ad::slice_cols(w_h, 2 * d, d))));
  return ad::add(ad::mul(ad::one_minus(update), prev_state), ad::mul(update, cand));
}

ad::Var text_context_forward(Graph& g, const TextInputs& in, const ModelConfig& cfg) {
  const Index n = in.context.rows();
  const Index d = cfg.d_model;
  ad::Var r = layers::linear(g, in.context, "txt.proj.in_r");
  const std::array<ad::Var, 3> relation_inputs = {layers::linear(g, in.external, "txt.proj.in_e"),
                                                  layers::linear(g, in.internal, "txt.proj.in_i"),
                                                  layers::linear(g, in.purpose, "txt.proj.in_p")};
  ad::Var scores = attention_scores(g, r);

  std::array<ad::Var, 3> state = {g.zeros(1, d), g.zeros(1, d), g.zeros(1, d)};
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (Index t = 1; t <= n; ++t) {
    ad::Var lc = attend(g, r, scores, t).context;
    for (std::size_t k = 0; k < kRelations.size(); ++k) {
      ad::Var input = ad::add(ad::slice_rows(relation_inputs[k], t - 1, 1), lc);
      state[k] = gru_step(g, state[k], input, std::string("txt.gru.") + kRelations[k]);
    }
    rows.push_back(ad::concat_cols({state[0], state[1], state[2]}));
  }
  return layers::linear(g, ad::concat_rows(rows), "txt.proj.out");
}

}  // namespace hbaf::txt
