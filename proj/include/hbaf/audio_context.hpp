#pragma once

// Audio Context Network: lifts per-utterance low-level audio vectors into
// dialogue-contextualised representations H_a.
//
//   N x D_a --conv(k=3, same padding)--> N x filters
//           --biLSTM x layers----------> N x d_model
//           --+positional encoding, encoder x layers--> N x d_model
//
// The sequence axis is the dialogue's utterance order.

#include "hbaf/model_config.hpp"
#include "hbaf/parameters.hpp"

#include <string>

namespace hbaf::acn {

/// Registers `acn.conv.*`, `acn.lstm.{layer}.{fwd|bwd}.*`, `acn.enc.{layer}.*`
/// (or `acn.bypass.*` when the ACN is ablated).
void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

ad::Var conv1d_forward(Graph& g, ad::Var seq, const ModelConfig& cfg);

/// One LSTM direction over the rows of `seq`; zero initial state.
/// Gate layout in `<prefix>.w_x/.w_h/.b` is [input, forget, cell, output].
ad::Var lstm_direction(Graph& g, ad::Var seq, const std::string& prefix, bool reverse);

/// Stacked bidirectional LSTM; row t is concat(forward_t, backward_t).
ad::Var bilstm_forward(Graph& g, ad::Var seq, const ModelConfig& cfg);

/// Fixed sinusoidal table, rows x width.
Matrix positional_encoding(Index rows, Index width);

/// Positional encoding, then post-norm encoder layers
/// (self-attention, add & norm, feed-forward, add & norm), no causal mask.
ad::Var encoder_forward(Graph& g, ad::Var seq, const ModelConfig& cfg);

/// conv -> biLSTM -> encoder. Returns N x d_model.
ad::Var acn_forward(Graph& g, ad::Var audio, const ModelConfig& cfg);

}  // namespace hbaf::acn
