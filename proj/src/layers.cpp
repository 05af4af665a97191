#include "hbaf/layers.hpp"

#include <cmath>

namespace hbaf::layers {

void register_linear(ParameterStore& store, const std::string& prefix, Index in, Index out,
                     Rng& rng) {
  store.create_glorot(prefix + ".w", in, out, rng);
  store.create(prefix + ".b", 1, out);
}

void register_layer_norm(ParameterStore& store, const std::string& prefix, Index width) {
  store.create_constant(prefix + ".g", 1, width, 1.0);
  store.create(prefix + ".b", 1, width);
}

ad::Var linear(Graph& g, ad::Var x, const std::string& prefix) {
  return ad::add_row(ad::matmul(x, g.param(prefix + ".w")), g.param(prefix + ".b"));
}

ad::Var layer_norm(Graph& g, ad::Var x, const std::string& prefix) {
  ad::Var n = ad::layer_norm_rows(x, kLayerNormEps);
  return ad::add_row(ad::mul_row(n, g.param(prefix + ".g")), g.param(prefix + ".b"));
}

ad::Var scaled_dot_attention(Graph& g, ad::Var q, ad::Var k, ad::Var v) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  ad::Var probs = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_d));
  g.log_attention(probs);
  return ad::matmul(probs, v);
}

}  // namespace hbaf::layers
