#pragma once

#include "hbaf/parameters.hpp"

#include <string>

namespace hbaf::layers {

inline constexpr double kLayerNormEps = 1e-9;

/// Registers `<prefix>.w` (in x out, Glorot) and `<prefix>.b` (1 x out, zero).
void register_linear(ParameterStore& store, const std::string& prefix, Index in, Index out,
                     Rng& rng);
/// Registers `<prefix>.g` (ones) and `<prefix>.b` (zeros), both 1 x width.
void register_layer_norm(ParameterStore& store, const std::string& prefix, Index width);

/// x * W + b with the `<prefix>.w/.b` pair.
ad::Var linear(Graph& g, ad::Var x, const std::string& prefix);
/// Row-wise layer norm followed by the `<prefix>.g/.b` affine map.
ad::Var layer_norm(Graph& g, ad::Var x, const std::string& prefix);

/// softmax(q k^T / sqrt(d_k)) v, logging the probability matrix on the graph.
ad::Var scaled_dot_attention(Graph& g, ad::Var q, ad::Var k, ad::Var v);

}  // namespace hbaf::layers
