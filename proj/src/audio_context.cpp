#include "hbaf/audio_context.hpp"

#include "hbaf/layers.hpp"

#include <cmath>
#include <vector>

namespace hbaf::acn {

namespace {

std::string lstm_prefix(int layer, bool backward) {
  return "acn.lstm." + std::to_string(layer) + (backward ? ".bwd" : ".fwd");
}

std::string enc_prefix(int layer) { return "acn.enc." + std::to_string(layer); }

}  // namespace

void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  if (cfg.ablations.no_acn) {
    layers::register_linear(store, "acn.bypass", cfg.audio_dim, cfg.d_model, rng);
    return;
  }
  // Kernel taps are stacked row-wise: rows [k*D_a, (k+1)*D_a) hold tap k.
  store.create_glorot("acn.conv.w", static_cast<Index>(cfg.conv_kernel) * cfg.audio_dim,
                      cfg.conv_filters, rng);
  store.create("acn.conv.b", 1, cfg.conv_filters);

  const Index units = cfg.lstm_units();
  for (int layer = 0; layer < cfg.lstm_layers; ++layer) {
    const Index in = layer == 0 ? cfg.conv_filters : 2 * units;
    for (bool backward : {false, true}) {
      const std::string p = lstm_prefix(layer, backward);
      store.create_glorot(p + ".w_x", in, 4 * units, rng);
      store.create_glorot(p + ".w_h", units, 4 * units, rng);
      store.create(p + ".b", 1, 4 * units);
    }
  }

  const Index d = cfg.d_model;
  for (int layer = 0; layer < cfg.encoder_layers; ++layer) {
    const std::string p = enc_prefix(layer);
    store.create_glorot(p + ".wq", d, d, rng);
    store.create_glorot(p + ".wk", d, d, rng);
    store.create_glorot(p + ".wv", d, d, rng);
    store.create_glorot(p + ".wo", d, d, rng);
    layers::register_layer_norm(store, p + ".ln1", d);
    layers::register_linear(store, p + ".ff1", d, cfg.encoder_ff, rng);
    layers::register_linear(store, p + ".ff2", cfg.encoder_ff, d, rng);
    layers::register_layer_norm(store, p + ".ln2", d);
  }
}

ad::Var conv1d_forward(Graph& g, ad::Var seq, const ModelConfig& cfg) {
  const Index n = seq.rows();
  const Index width = seq.cols();
  const Index half = cfg.conv_kernel / 2;
  ad::Var pad = g.zeros(half, width);
  ad::Var padded = half > 0 ? ad::concat_rows({pad, seq, pad}) : seq;
  ad::Var w = g.param("acn.conv.w");
  ad::Var out;
  for (Index k = 0; k < cfg.conv_kernel; ++k) {
    ad::Var tap = ad::matmul(ad::slice_rows(padded, k, n), ad::slice_rows(w, k * width, width));
    out = out.valid() ? ad::add(out, tap) : tap;
  }
  return ad::add_row(out, g.param("acn.conv.b"));
}

ad::Var lstm_direction(Graph& g, ad::Var seq, const std::string& prefix, bool reverse) {
  const Index n = seq.rows();
  ad::Var w_h = g.param(prefix + ".w_h");
  const Index units = w_h.rows();
  // Input contributions for every step at once.
  ad::Var xw = ad::add_row(ad::matmul(seq, g.param(prefix + ".w_x")), g.param(prefix + ".b"));

  ad::Var h = g.zeros(1, units);
  ad::Var c = g.zeros(1, units);
  std::vector<ad::Var> outputs(static_cast<std::size_t>(n));
  for (Index step = 0; step < n; ++step) {
    const Index t = reverse ? n - 1 - step : step;
    ad::Var z = ad::add(ad::slice_rows(xw, t, 1), ad::matmul(h, w_h));
    ad::Var in_gate = ad::sigmoid(ad::slice_cols(z, 0, units));
    ad::Var forget = ad::sigmoid(ad::slice_cols(z, units, units));
    ad::Var cand = ad::tanh(ad::slice_cols(z, 2 * units, units));
    ad::Var out_gate = ad::sigmoid(ad::slice_cols(z, 3 * units, units));
    c = ad::add(ad::mul(forget, c), ad::mul(in_gate, cand));
    h = ad::mul(out_gate, ad::tanh(c));
    outputs[static_cast<std::size_t>(t)] = h;
  }
  return ad::concat_rows(outputs);
}

ad::Var bilstm_forward(Graph& g, ad::Var seq, const ModelConfig& cfg) {
  ad::Var x = seq;
  for (int layer = 0; layer < cfg.lstm_layers; ++layer) {
    ad::Var fwd = lstm_direction(g, x, lstm_prefix(layer, false), false);
    ad::Var bwd = lstm_direction(g, x, lstm_prefix(layer, true), true);
    x = ad::concat_cols({fwd, bwd});
  }
  return x;
}

Matrix positional_encoding(Index rows, Index width) {
  Matrix pe(rows, width);
  for (Index pos = 0; pos < rows; ++pos) {
    for (Index i = 0; i < width; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

ad::Var multi_head_self_attention(Graph& g, ad::Var x, const std::string& p, int heads) {
  ad::Var q = ad::matmul(x, g.param(p + ".wq"));
  ad::Var k = ad::matmul(x, g.param(p + ".wk"));
  ad::Var v = ad::matmul(x, g.param(p + ".wv"));
  const Index head_dim = x.cols() / heads;
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Index off = h * head_dim;
    outs.push_back(layers::scaled_dot_attention(g, ad::slice_cols(q, off, head_dim),
                                                ad::slice_cols(k, off, head_dim),
                                                ad::slice_cols(v, off, head_dim)));
  }
  ad::Var joined = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return ad::matmul(joined, g.param(p + ".wo"));
}

}  // namespace

ad::Var encoder_forward(Graph& g, ad::Var seq, const ModelConfig& cfg) {
  ad::Var x = ad::add(seq, g.constant(positional_encoding(seq.rows(), seq.cols())));
  for (int layer = 0; layer < cfg.encoder_layers; ++layer) {
    const std::string p = enc_prefix(layer);
    ad::Var attn = g.dropout(multi_head_self_attention(g, x, p, cfg.encoder_heads));
    x = layers::layer_norm(g, ad::add(x, attn), p + ".ln1");
    ad::Var ff = layers::linear(g, ad::relu(layers::linear(g, x, p + ".ff1")), p + ".ff2");
    x = layers::layer_norm(g, ad::add(x, g.dropout(ff)), p + ".ln2");
  }
  return x;
}

ad::Var acn_forward(Graph& g, ad::Var audio, const ModelConfig& cfg) {
  if (cfg.ablations.no_acn) return layers::linear(g, audio, "acn.bypass");
  ad::Var local = conv1d_forward(g, audio, cfg);
  ad::Var recurrent = bilstm_forward(g, local, cfg);
  return encoder_forward(g, recurrent, cfg);
}

}  // namespace hbaf::acn
