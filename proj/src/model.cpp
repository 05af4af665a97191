#include "hbaf/model.hpp"

#include "hbaf/audio_context.hpp"
#include "hbaf/errors.hpp"
#include "hbaf/layers.hpp"
#include "hbaf/text_context.hpp"

#include <stdexcept>
#include <utility>

namespace hbaf {

void register_model_params(ParameterStore& store, const ModelConfig& config, Rng& rng) {
  config.validate();
  acn::register_params(store, config, rng);
  txt::register_params(store, config, rng);
  fusion::register_params(store, config, rng);
  contrastive::register_params(store, config, rng);
  layers::register_linear(store, "clf", 2 * static_cast<Index>(config.d_model),
                          config.num_classes, rng);
}

HbafModel::HbafModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  Rng rng(seed);
  register_model_params(params_, config_, rng);
}

HbafModel::HbafModel(ModelConfig config, ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  ParameterStore expected;
  Rng rng(0);
  register_model_params(expected, config_, rng);
  if (expected.size() != params_.size()) {
    throw DataError("parameter set does not match the model config (" +
                    std::to_string(params_.size()) + " tensors, expected " +
                    std::to_string(expected.size()) + ")");
  }
  for (const Parameter& e : expected.all()) {
    const Parameter* p = params_.find(e.name);
    if (p == nullptr) throw DataError("missing parameter " + e.name);
    if (p->value.rows() != e.value.rows() || p->value.cols() != e.value.cols()) {
      throw DataError("parameter " + e.name + " has the wrong shape");
    }
  }
  params_.zero_grad();
}

ad::Var classify_logits(Graph& g, ad::Var h_m) { return layers::linear(g, h_m, "clf"); }

ad::Var cross_entropy(ad::Var logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw std::invalid_argument("cross_entropy: label count does not match rows");
  }
  std::vector<std::pair<Index, Index>> picks;
  picks.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) picks.emplace_back(static_cast<Index>(i), labels[i]);
  return ad::scale(ad::mean(ad::gather(ad::log_softmax_rows(logits), picks)), -1.0);
}

double total_loss(double ce, double inter, double mu) { return ce + mu * inter; }

BatchForward forward_batch(Graph& g, const ModelConfig& config,
                           std::span<const DialogueRecord* const> batch, const LossConfig& loss) {
  if (batch.empty()) throw std::invalid_argument("forward_batch: empty batch");
  BatchForward out;
  std::vector<ad::Var> ha_rows, hl_rows, hm_rows;
  for (const DialogueRecord* r : batch) {
    ad::Var audio = g.constant(r->audio);
    txt::TextInputs text{g.constant(r->context), g.constant(r->external),
                         g.constant(r->internal), g.constant(r->purpose)};
    ad::Var h_audio = acn::acn_forward(g, audio, config);
    ad::Var h_text = txt::text_context_forward(g, text, config);
    fusion::FusionState s = fusion::fuse(g, h_audio, h_text, config);
    ha_rows.push_back(s.h_a);
    hl_rows.push_back(s.h_l);
    hm_rows.push_back(s.h_m);
    out.states.push_back(s);
    out.labels.insert(out.labels.end(), r->labels.begin(), r->labels.end());
  }
  out.h_a = ha_rows.size() == 1 ? ha_rows.front() : ad::concat_rows(ha_rows);
  out.h_l = hl_rows.size() == 1 ? hl_rows.front() : ad::concat_rows(hl_rows);
  out.h_m = hm_rows.size() == 1 ? hm_rows.front() : ad::concat_rows(hm_rows);
  out.logits = classify_logits(g, out.h_m);
  out.ce = cross_entropy(out.logits, out.labels);

  const double mu = config.ablations.no_contrastive ? 0.0 : loss.mu;
  LossReport& rep = out.report;
  rep.mu_effective = mu;
  rep.ce = out.ce.value()(0, 0);
  if (out.h_m.rows() >= 2) {
    ad::Var projected = contrastive::project_fused(g, out.h_m);
    out.inter = contrastive::inter_modal_loss(out.h_a, out.h_l, projected, loss.contrastive);
    rep.inter = out.inter.total.value()(0, 0);
    rep.audio_fused = out.inter.audio_fused.value()(0, 0);
    rep.text_fused = out.inter.text_fused.value()(0, 0);
    rep.relative = out.inter.relative.value()(0, 0);
  }
  if (mu != 0.0 && out.inter.total.valid()) {
    out.total = ad::add(out.ce, ad::scale(out.inter.total, mu));
  } else {
    out.total = out.ce;
  }
  rep.total = out.total.value()(0, 0);
  return out;
}

}  // namespace hbaf
