#include "hbaf/gradcheck.hpp"

#include "hbaf/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace hbaf {

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& t : tensors) {
    if (!t.pass) out.push_back(t.name);
  }
  return out;
}

GradCheckReport grad_check(ParameterStore& params, const LossFunction& loss,
                           const GradCheckOptions& options) {
  if (!options.corrupt.empty() && params.find(options.corrupt) == nullptr) {
    throw ConfigError("cannot corrupt unknown tensor " + options.corrupt);
  }
  const auto start = std::chrono::steady_clock::now();

  params.zero_grad();
  {
    Graph g(params, Precision::kFloat64, true);
    g.backward(loss(g));
  }
  auto probe = [&]() {
    Graph g(params, Precision::kFloat64, false);
    return loss(g).value()(0, 0);
  };

  GradCheckReport report;
  for (Parameter& p : params.all()) {
    Matrix analytic = p.grad;
    if (p.name == options.corrupt) analytic(0, 0) += options.corrupt_amount;
    TensorCheck tc;
    tc.name = p.name;
    tc.entries = p.value.size();
    for (Index i = 0; i < p.value.size(); ++i) {
      double& theta = p.value.data()[i];
      const double saved = theta;
      const double h = options.step * std::max(1.0, std::abs(saved));
      theta = saved + h;
      const double up = probe();
      theta = saved - h;
      const double down = probe();
      theta = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      tc.max_abs_error = std::max(tc.max_abs_error, abs_err);
      if (rel > tc.max_rel_error) {
        tc.max_rel_error = rel;
        tc.worst_entry = i;
      }
    }
    tc.pass = tc.max_rel_error <= options.tolerance;
    report.pass = report.pass && tc.pass;
    if (tc.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = tc.max_rel_error;
      report.worst_tensor = tc.name;
    }
    report.tensors.push_back(tc);
  }
  params.zero_grad();
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GradCheckReport grad_check_hbaf(const HbafCheckSetup& setup, const GradCheckOptions& options) {
  SynthSpec spec;
  spec.n_dialogues = setup.dialogues;
  spec.val_dialogues = 0;
  spec.utterances_per_dialogue = setup.utterances;
  spec.num_classes = setup.num_classes;
  spec.audio_dim = setup.audio_dim;
  spec.text_dim = setup.text_dim;
  spec.noise_std = 0.5;
  spec.seed = setup.seed;
  const SyntheticDataset data = generate_synthetic(spec);

  ModelConfig cfg =
      ModelConfig::reduced(setup.width, setup.audio_dim, setup.text_dim, setup.num_classes);
  cfg.ablations = setup.ablations;
  HbafModel model(cfg, setup.seed);

  std::vector<const DialogueRecord*> batch;
  for (const auto& r : data.records) batch.push_back(&r);
  const LossConfig loss = setup.loss;
  return grad_check(
      model.params(),
      [&](Graph& g) { return forward_batch(g, cfg, batch, loss).total; }, options);
}

}  // namespace hbaf
