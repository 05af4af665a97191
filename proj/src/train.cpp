#include "hbaf/train.hpp"

#include "hbaf/errors.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace hbaf {

Adam::Adam(double learning_rate, AdamConfig config, double weight_decay)
    : lr_(learning_rate), cfg_(config), weight_decay_(weight_decay) {}

void Adam::step(ParameterStore& params) {
  auto& all = params.all();
  if (m_.empty()) {
    for (const Parameter& p : all) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < all.size(); ++i) {
    Parameter& p = all[i];
    if (p.grad.size() == 0) continue;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    const Matrix m_hat = m_[i] / c1;
    const Matrix v_hat = v_[i] / c2;
    p.value.array() -= lr_ * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
    if (weight_decay_ > 0.0) p.value *= 1.0 - lr_ * weight_decay_;
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(l2_weight >= 0.0)) throw ConfigError("l2_weight must be nonnegative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (!(loss.mu >= 0.0)) throw ConfigError("mu must be nonnegative");
  loss.contrastive.validate();
}

namespace {

struct LossAccumulator {
  LossReport sum;
  double weight = 0.0;

  void add(const LossReport& r, double w) {
    sum.ce += w * r.ce;
    sum.inter += w * r.inter;
    sum.total += w * r.total;
    sum.audio_fused += w * r.audio_fused;
    sum.text_fused += w * r.text_fused;
    sum.relative += w * r.relative;
    sum.mu_effective = r.mu_effective;
    weight += w;
  }

  LossReport mean() const {
    LossReport r = sum;
    if (weight > 0.0) {
      r.ce /= weight;
      r.inter /= weight;
      r.total /= weight;
      r.audio_fused /= weight;
      r.text_fused /= weight;
      r.relative /= weight;
    }
    return r;
  }
};

std::vector<std::vector<const DialogueRecord*>> ordered_batches(
    const std::vector<const DialogueRecord*>& records, int batch_size) {
  std::vector<std::vector<const DialogueRecord*>> out;
  for (std::size_t i = 0; i < records.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(records.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(records.begin() + static_cast<std::ptrdiff_t>(i),
                     records.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

double batch_weight(const std::vector<const DialogueRecord*>& batch) {
  double n = 0.0;
  for (const DialogueRecord* r : batch) n += static_cast<double>(r->size());
  return n;
}

double l2_sum(const ParameterStore& params) {
  double s = 0.0;
  for (const Parameter& p : params.all()) s += p.value.squaredNorm();
  return s;
}

[[noreturn]] void diverged(const std::string& what, int epoch) {
  throw NumericError("non-finite " + what + " at epoch " + std::to_string(epoch));
}

}  // namespace

EvalResult evaluate(HbafModel& model, const std::vector<const DialogueRecord*>& records,
                    const LossConfig& loss, int batch_size, Precision precision) {
  if (records.empty()) throw DataError("cannot evaluate an empty split");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  EvalResult out;
  LossAccumulator acc;
  for (const auto& batch : ordered_batches(records, batch_size)) {
    Graph g(model.params(), precision, false);
    BatchForward fwd = forward_batch(g, model.config(), batch, loss);
    acc.add(fwd.report, batch_weight(batch));
    const Matrix& logits = fwd.logits.value();
    for (Index i = 0; i < logits.rows(); ++i) {
      Index best = 0;
      logits.row(i).maxCoeff(&best);
      out.predictions.push_back(static_cast<int>(best));
    }
    out.labels.insert(out.labels.end(), fwd.labels.begin(), fwd.labels.end());
  }
  out.loss = acc.mean();
  out.metrics = compute_metrics(out.labels, out.predictions, model.config().num_classes);
  return out;
}

TrainResult train(HbafModel& model, const std::vector<const DialogueRecord*>& train_set,
                  const std::vector<const DialogueRecord*>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DataError("train split is empty");
  if (val_set.empty()) throw DataError("val split is empty");

  ParameterStore& params = model.params();
  const bool additive_l2 = config.l2_weight > 0.0 && !config.decoupled_l2;
  Adam adam(config.learning_rate, config.adam, config.decoupled_l2 ? config.l2_weight : 0.0);
  Rng dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);

  TrainResult result;
  result.best_val_total = std::numeric_limits<double>::infinity();
  ParameterStore best = params;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const std::uint64_t shuffle_seed = config.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch);
    LossAccumulator acc;
    for (const auto& batch : batch_dialogues(train_set, static_cast<std::size_t>(config.batch_size),
                                             shuffle_seed)) {
      params.zero_grad();
      Graph g(params, config.precision, true);
      g.dropout_rate = model.config().dropout;
      g.dropout_rng = &dropout_rng;
      BatchForward fwd = forward_batch(g, model.config(), batch, config.loss);
      if (!std::isfinite(fwd.report.total)) {
        if (auto bad = params.first_non_finite(false)) diverged("parameter " + *bad, epoch);
        diverged(std::isfinite(fwd.report.ce) ? "L_inter" : "L_ce", epoch);
      }
      g.backward(fwd.total);
      if (additive_l2) {
        for (Parameter& p : params.all()) {
          if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
          p.grad += 2.0 * config.l2_weight * p.value;
        }
      }
      if (auto bad = params.first_non_finite(true)) diverged("tensor " + *bad, epoch);
      adam.step(params);
      if (auto bad = params.first_non_finite(false)) diverged("parameter " + *bad, epoch);
      acc.add(fwd.report, batch_weight(batch));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = acc.mean();
    const EvalResult val = evaluate(model, val_set, config.loss, config.batch_size, config.precision);
    rec.val = val.loss;
    rec.val_weighted_f1 = val.metrics.weighted_f1;
    rec.val_accuracy = val.metrics.accuracy;
    if (config.track_train_metrics) {
      const EvalResult tr =
          evaluate(model, train_set, config.loss, config.batch_size, config.precision);
      rec.train_weighted_f1 = tr.metrics.weighted_f1;
      rec.train_accuracy = tr.metrics.accuracy;
    }
    rec.l2_penalty = config.l2_weight * l2_sum(params);
    if (!std::isfinite(rec.val.total)) diverged("validation L_total", epoch);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val.total < result.best_val_total) {
      result.best_val_total = rec.val.total;
      result.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  params = best;
  params.zero_grad();
  return result;
}

}  // namespace hbaf
