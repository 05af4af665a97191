#include "hbaf/contrastive.hpp"

#include "hbaf/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace hbaf::contrastive {

void ContrastiveConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("contrastive: tau must be positive");
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw ConfigError("contrastive: lambdas must be nonnegative");
  }
}

double cosine_sim(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("cosine_sim: length mismatch");
  double dot = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (!(xx > 0.0) || !(yy > 0.0)) throw NumericError("cosine_sim: zero-norm vector");
  return dot / (std::sqrt(xx) * std::sqrt(yy));
}

void register_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  store.create_glorot("con.proj", 2 * static_cast<Index>(cfg.d_model), cfg.d_model, rng);
}

ad::Var project_fused(Graph& g, ad::Var h_m) { return ad::matmul(h_m, g.param("con.proj")); }

ad::Var info_nce(ad::Var anchors, ad::Var candidates, const ContrastiveConfig& cfg) {
  const Index k = anchors.rows();
  if (k < 2 || candidates.rows() != k) {
    throw std::invalid_argument("contrastive loss needs K >= 2 aligned samples, got " +
                                std::to_string(k) + " and " + std::to_string(candidates.rows()));
  }
  ad::Var sims = ad::scale(ad::matmul_nt(ad::normalize_rows(anchors),
                                         ad::normalize_rows(candidates)),
                           1.0 / cfg.tau);
  std::vector<std::pair<Index, Index>> diag;
  diag.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) diag.emplace_back(i, i);
  ad::Var positive = ad::gather(sims, diag);
  ad::Var denom = cfg.literal_denominator ? ad::logsumexp_rows(ad::concat_cols({sims, positive}))
                                          : ad::logsumexp_rows(sims);
  return ad::mean(ad::sub(denom, positive));
}

ad::Var absolute_loss(ad::Var unimodal, ad::Var fused_projected, const ContrastiveConfig& cfg) {
  return info_nce(unimodal, fused_projected, cfg);
}

ad::Var relative_loss(ad::Var h_a, ad::Var h_l, const ContrastiveConfig& cfg) {
  return info_nce(h_a, h_l, cfg);
}

InterModalTerms inter_modal_loss(ad::Var h_a, ad::Var h_l, ad::Var fused_projected,
                                 const ContrastiveConfig& cfg) {
  InterModalTerms t;
  t.audio_fused = absolute_loss(h_a, fused_projected, cfg);
  t.text_fused = absolute_loss(h_l, fused_projected, cfg);
  t.relative = relative_loss(h_a, h_l, cfg);
  t.total = ad::add(ad::add(ad::scale(t.audio_fused, cfg.lambda1),
                            ad::scale(t.text_fused, cfg.lambda2)),
                    ad::scale(t.relative, cfg.lambda3));
  return t;
}

}  // namespace hbaf::contrastive
