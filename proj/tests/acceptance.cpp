// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include "hbaf/audio_context.hpp"
#include "hbaf/gradcheck.hpp"
#include "hbaf/layers.hpp"
#include "hbaf/metrics.hpp"
#include "hbaf/run_config.hpp"
#include "hbaf/text_context.hpp"
#include "hbaf/train.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>

using namespace hbaf;
using ad::Tape;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const Outcome& o) {
  std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<const DialogueRecord*> pointers(const std::vector<DialogueRecord>& records) {
  std::vector<const DialogueRecord*> out;
  for (const DialogueRecord& r : records) out.push_back(&r);
  return out;
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  const GradCheckReport r = grad_check_hbaf(HbafCheckSetup{}, GradCheckOptions{});
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = r.pass && r.max_rel_error <= 1e-4 && secs < 120.0;
  o.detail = fmt("width 8, max rel err %.3e (%s) <= 1e-4, %.1f s < 120 s", r.max_rel_error,
                 r.worst_tensor.c_str(), secs);
  return o;
}

Outcome loss_identities() {
  double worst_k = 0.0;
  contrastive::ContrastiveConfig cc;
  for (int k : {2, 5, 16}) {
    std::mt19937_64 gen(static_cast<std::uint64_t>(k));
    const Matrix x = testutil::to_matrix(oracle::random(gen, 1, 6)).replicate(k, 1);
    Tape t;
    const double ln_k = std::log(static_cast<double>(k));
    const double abs_loss = contrastive::absolute_loss(t.constant(x), t.constant(x), cc).value()(0, 0);
    const double rel_loss = contrastive::relative_loss(t.constant(x), t.constant(x), cc).value()(0, 0);
    worst_k = std::max({worst_k, std::abs(abs_loss - ln_k), std::abs(rel_loss - ln_k)});
  }
  double worst_c = 0.0;
  for (int c : {4, 6, 7}) {
    Tape t;
    const std::vector<int> labels = {0, c - 1, c / 2};
    const double ce = cross_entropy(t.constant(Matrix::Zero(3, c)), labels).value()(0, 0);
    worst_c = std::max(worst_c, std::abs(ce - std::log(static_cast<double>(c))));
  }

  // Every optimizer step of a short training run.
  SynthSpec spec;
  spec.n_dialogues = 8;
  spec.val_dialogues = 0;
  spec.audio_dim = spec.text_dim = 8;
  spec.seed = 3;
  const SyntheticDataset data = generate_synthetic(spec);
  HbafModel model(ModelConfig::reduced(8, 8, 8, spec.num_classes), 1);
  Adam adam(1e-3);
  LossConfig loss;
  double worst_total = 0.0;
  int steps = 0;
  for (int epoch = 0; epoch < 5; ++epoch) {
    for (const auto& batch : batch_dialogues(pointers(data.records), 3, static_cast<std::uint64_t>(epoch))) {
      model.params().zero_grad();
      Graph g(model.params());
      const BatchForward fwd = forward_batch(g, model.config(), batch, loss);
      const double ce = fwd.ce.value()(0, 0);
      const double inter = fwd.inter.total.value()(0, 0);
      worst_total = std::max(worst_total, std::abs(fwd.total.value()(0, 0) - (ce + 0.2 * inter)));
      g.backward(fwd.total);
      adam.step(model.params());
      ++steps;
    }
  }
  Outcome o;
  o.pass = worst_k <= 1e-9 && worst_c <= 1e-12 && worst_total <= 1e-12;
  o.detail = fmt("|L-lnK| %.1e <= 1e-9, |CE-lnC| %.1e <= 1e-12, |L_total-(L_ce+0.2 L_inter)| %.1e <= 1e-12 over %d steps",
                 worst_k, worst_c, worst_total, steps);
  return o;
}

Outcome attention_gate_invariants() {
  double worst_row = 0.0;
  double gate_lo = 1.0, gate_hi = 0.0;
  double worst_between = 0.0;
  std::size_t attn_mats = 0, gate_mats = 0;
  for (std::uint64_t pass = 0; pass < 100; ++pass) {
    SynthSpec spec;
    spec.n_dialogues = 2;
    spec.val_dialogues = 0;
    spec.utterances_per_dialogue = 2 + static_cast<int>(pass % 6);
    spec.audio_dim = spec.text_dim = 6;
    spec.noise_std = 1.0;
    spec.seed = pass;
    const SyntheticDataset data = generate_synthetic(spec);
    HbafModel model(ModelConfig::reduced(8, 6, 6, spec.num_classes), pass + 1000);
    std::vector<Matrix> attn, gates;
    Graph g(model.params(), Precision::kFloat64, false);
    g.attention_log = &attn;
    g.gate_log = &gates;
    const BatchForward fwd = forward_batch(g, model.config(), pointers(data.records), LossConfig{});
    for (const Matrix& m : attn) {
      worst_row = std::max(worst_row, (m.rowwise().sum().array() - 1.0).abs().maxCoeff());
      if (m.minCoeff() < 0.0) worst_row = std::max(worst_row, -m.minCoeff());
    }
    for (const Matrix& m : gates) {
      gate_lo = std::min(gate_lo, m.minCoeff());
      gate_hi = std::max(gate_hi, m.maxCoeff());
    }
    attn_mats += attn.size();
    gate_mats += gates.size();
    for (const fusion::FusionState& s : fwd.states) {
      for (auto [self, cross, star] : {std::tuple{s.self_a, s.cross_a, s.star_a},
                                       std::tuple{s.self_l, s.cross_l, s.star_l}}) {
        const Matrix lo = self.value().cwiseMin(cross.value());
        const Matrix hi = self.value().cwiseMax(cross.value());
        worst_between = std::max(worst_between, (lo - star.value()).maxCoeff());
        worst_between = std::max(worst_between, (star.value() - hi).maxCoeff());
      }
    }
  }
  Outcome o;
  o.pass = worst_row <= 1e-9 && gate_lo > 0.0 && gate_hi < 1.0 && worst_between <= 0.0 &&
           attn_mats > 0 && gate_mats > 0;
  o.detail = fmt("100 passes, %zu attention maps |row sum-1| %.1e <= 1e-9, %zu gate maps in [%.3g, %.3g], star outside by %.1e",
                 attn_mats, worst_row, gate_mats, gate_lo, gate_hi, std::max(worst_between, 0.0));
  return o;
}

Outcome oracle_equivalence() {
  const int n = 100;
  std::map<std::string, double> worst;
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < n; ++trial) {
    // Convolution.
    {
      ModelConfig cfg = ModelConfig::reduced(4, 1 + trial % 4, 3, 3);
      cfg.conv_kernel = 1 + 2 * (trial % 3);
      cfg.conv_filters = 1 + trial % 5;
      Rng rng(static_cast<std::uint64_t>(trial));
      ParameterStore store;
      acn::register_params(store, cfg, rng);
      store.at("acn.conv.b").value = testutil::to_matrix(oracle::random(gen, 1, cfg.conv_filters));
      const oracle::Mat x = oracle::random(gen, 1 + trial % 6, cfg.audio_dim, 2.0);
      Graph g(store);
      const Matrix got = acn::conv1d_forward(g, g.constant(testutil::to_matrix(x)), cfg).value();
      worst["conv"] = std::max(worst["conv"],
                               testutil::max_diff(got, oracle::conv1d(x, testutil::to_mat(store.at("acn.conv.w").value),
                                                                      testutil::row_vec(store.at("acn.conv.b").value),
                                                                      cfg.conv_kernel)));
    }
    // LSTM and GRU.
    {
      const std::size_t in = 1 + trial % 5, units = 1 + trial % 4;
      ParameterStore store;
      store.create("l.w_x", in, 4 * units).value = testutil::to_matrix(oracle::random(gen, in, 4 * units));
      store.create("l.w_h", units, 4 * units).value = testutil::to_matrix(oracle::random(gen, units, 4 * units));
      store.create("l.b", 1, 4 * units).value = testutil::to_matrix(oracle::random(gen, 1, 4 * units));
      store.create("g.w_x", in, 3 * units).value = testutil::to_matrix(oracle::random(gen, in, 3 * units));
      store.create("g.w_h", units, 3 * units).value = testutil::to_matrix(oracle::random(gen, units, 3 * units));
      store.create("g.b", 1, 3 * units).value = testutil::to_matrix(oracle::random(gen, 1, 3 * units));
      const oracle::Mat x = oracle::random(gen, 1 + trial % 7, in, 2.0);
      const oracle::Mat h = oracle::random(gen, 1, units);
      const bool reverse = trial % 2 == 1;
      Graph g(store);
      const Matrix lstm = acn::lstm_direction(g, g.constant(testutil::to_matrix(x)), "l", reverse).value();
      worst["lstm"] = std::max(worst["lstm"],
                               testutil::max_diff(lstm, oracle::lstm(x, testutil::to_mat(store.at("l.w_x").value),
                                                                     testutil::to_mat(store.at("l.w_h").value),
                                                                     testutil::row_vec(store.at("l.b").value), reverse)));
      const oracle::Mat x0 = {x[0]};
      const Matrix gru = txt::gru_step(g, g.constant(testutil::to_matrix(h)), g.constant(testutil::to_matrix(x0)), "g").value();
      worst["gru"] = std::max(worst["gru"],
                              testutil::max_diff(gru, {oracle::gru(h[0], x[0], testutil::to_mat(store.at("g.w_x").value),
                                                                   testutil::to_mat(store.at("g.w_h").value),
                                                                   testutil::row_vec(store.at("g.b").value))}));
    }
    // Softmax and attention.
    {
      const std::size_t rows = 1 + trial % 5, cols = 1 + trial % 6;
      const oracle::Mat z = oracle::random(gen, rows, cols + 1, 6.0);
      const oracle::Mat q = oracle::random(gen, rows, cols), k = oracle::random(gen, rows + 1, cols),
                        v = oracle::random(gen, rows + 1, cols);
      ParameterStore store;
      Graph g(store);
      oracle::Mat want;
      for (const auto& row : z) want.push_back(oracle::softmax(row));
      worst["softmax"] = std::max(worst["softmax"],
                                  testutil::max_diff(ad::softmax_rows(g.constant(testutil::to_matrix(z))).value(), want));
      const Matrix attn = layers::scaled_dot_attention(g, g.constant(testutil::to_matrix(q)),
                                                       g.constant(testutil::to_matrix(k)),
                                                       g.constant(testutil::to_matrix(v)))
                              .value();
      worst["attention"] = std::max(worst["attention"], testutil::max_diff(attn, oracle::attention(q, k, v)));
    }
    // Weighted F1.
    {
      const int c = 2 + trial % 6;
      const std::size_t len = 1 + gen() % 80;
      std::vector<int> truth(len), pred(len);
      for (std::size_t i = 0; i < len; ++i) {
        truth[i] = static_cast<int>(gen() % static_cast<unsigned>(c));
        pred[i] = gen() % 2 == 0 ? truth[i] : static_cast<int>(gen() % static_cast<unsigned>(c));
      }
      worst["weighted_f1"] = std::max(worst["weighted_f1"],
                                      std::abs(compute_metrics(truth, pred, c).weighted_f1 -
                                               oracle::weighted_f1(truth, pred, c)));
    }
  }
  Outcome o;
  o.detail = fmt("%d instances each:", n);
  for (const auto& [name, err] : worst) {
    o.pass = o.pass && err <= 1e-12;
    o.detail += fmt(" %s %.1e", name.c_str(), err);
  }
  o.detail += " (<= 1e-12)";
  return o;
}

std::filesystem::path write_synth(const std::string& name, SynthSpec spec) {
  const auto root = testutil::temp_dir(name);
  const SyntheticDataset data = generate_synthetic(spec);
  write_dataset(root, data.manifest, data.records);
  return root;
}

Outcome learnability() {
  SynthSpec spec;
  spec.n_dialogues = 10;
  spec.val_dialogues = 2;
  spec.utterances_per_dialogue = 6;
  spec.num_classes = 4;
  spec.audio_dim = spec.text_dim = 32;
  spec.mode = SignalMode::kAgreement;
  spec.seed = 7;
  const Dataset data = load_dataset(write_synth("learn", spec));
  RunConfig rc;
  rc.set("model.width", "32");
  rc.set("train.max_epochs", "300");
  rc.set("train.patience", "300");
  const ModelConfig mc = rc.resolve_model(32, 32, 4);
  const TrainConfig tc = rc.train_config();
  HbafModel model(mc, tc.seed);
  const auto start = Clock::now();
  int reached = 0;
  train(model, data.split("train"), data.split("val"), tc, [&](const EpochRecord& e) {
    if (reached == 0 && e.train_weighted_f1 == 1.0) reached = e.epoch;
  });
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = reached > 0 && secs < 300.0;
  o.detail = fmt("8 train dialogues x 6, width 32, lr %.0e: train F1 = 1.0 at epoch %d (<= 300), %.1f s < 300 s",
                 tc.learning_rate, reached, secs);
  return o;
}

Outcome ablation_direction() {
  SynthSpec spec;
  spec.n_dialogues = 100;
  spec.val_dialogues = 20;
  spec.utterances_per_dialogue = 6;
  spec.num_classes = 4;
  spec.mode = SignalMode::kAgreement;
  spec.seed = 11;
  const Dataset data = load_dataset(write_synth("ablate", spec));
  const std::vector<std::string> variants = {"full", "no_acn", "no_fusion", "no_contrastive", "no_gate",
                                             "no_residual"};
  const int seeds = 3;
  std::map<std::string, double> mean;
  for (const auto& variant : variants) {
    double sum = 0.0;
    for (int s = 0; s < seeds; ++s) {
      RunConfig rc;
      rc.set("train.learning_rate", "1e-3");
      rc.set("train.max_epochs", "60");
      rc.set("train.patience", "30");
      rc.set("train.seed", std::to_string(s));
      if (variant != "full") rc.set("ablate." + variant, "true");
      const ModelConfig mc = rc.resolve_model(static_cast<int>(data.manifest.dims.audio),
                                              static_cast<int>(data.manifest.dims.text), 4);
      const TrainConfig tc = rc.train_config();
      HbafModel model(mc, tc.seed);
      const auto val = data.split("val");
      train(model, data.split("train"), val, tc);
      sum += evaluate(model, val, tc.loss, tc.batch_size).metrics.weighted_f1;
    }
    mean[variant] = sum / seeds;
  }
  const double full = mean["full"];
  bool ordered = true;
  std::string largest;
  double largest_drop = -1.0;
  for (const auto& v : variants) {
    if (v == "full") continue;
    ordered = ordered && full >= mean[v];
    if (full - mean[v] > largest_drop) {
      largest_drop = full - mean[v];
      largest = v;
    }
  }
  const double fusion_drop = full - mean["no_fusion"];
  const double contrastive_drop = full - mean["no_contrastive"];
  Outcome o;
  o.pass = ordered && largest == "no_fusion" && fusion_drop > contrastive_drop;
  o.detail = fmt("%d seeds, mean val F1 full %.3f", seeds, full);
  for (const auto& v : variants) {
    if (v != "full") o.detail += fmt(" %s %.3f", v.c_str(), mean[v]);
  }
  o.detail += fmt("; largest drop %s, fusion drop %.3f > contrastive drop %.3f", largest.c_str(),
                  fusion_drop, contrastive_drop);
  return o;
}

Outcome determinism() {
  SynthSpec spec;
  spec.n_dialogues = 8;
  spec.val_dialogues = 2;
  spec.audio_dim = spec.text_dim = 8;
  spec.seed = 21;
  const SyntheticDataset data = generate_synthetic(spec);
  std::vector<const DialogueRecord*> train_set, val_set;
  const auto& val_ids = data.manifest.split("val");
  for (const DialogueRecord& r : data.records) {
    (std::find(val_ids.begin(), val_ids.end(), r.id) != val_ids.end() ? val_set : train_set).push_back(&r);
  }
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 2;
  tc.max_epochs = 8;
  tc.seed = 4;
  std::vector<TrainResult> runs;
  std::vector<ParameterStore> finals;
  for (int i = 0; i < 2; ++i) {
    HbafModel model(ModelConfig::reduced(8, 8, 8, spec.num_classes), 4);
    runs.push_back(train(model, train_set, val_set, tc));
    finals.push_back(model.params());
  }
  bool params_equal = finals[0].size() == finals[1].size();
  for (std::size_t i = 0; params_equal && i < finals[0].size(); ++i) {
    params_equal = finals[0].all()[i].value == finals[1].all()[i].value;
  }
  Outcome o;
  o.pass = runs[0].history == runs[1].history && params_equal && !runs[0].history.empty();
  o.detail = fmt("two runs, %zu epochs: histories %s, final parameters %s", runs[0].history.size(),
                 runs[0].history == runs[1].history ? "bit-identical" : "differ",
                 params_equal ? "bit-identical" : "differ");
  return o;
}

Outcome causality() {
  int checked = 0;
  bool exact = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index n = 7;
    const ModelConfig cfg = ModelConfig::reduced(8, 4, 5, 4);
    Rng rng(seed);
    ParameterStore store;
    txt::register_params(store, cfg, rng);
    std::array<Matrix, 4> inputs;
    for (Matrix& m : inputs) {
      m.resize(n, 5);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    }
    auto run = [&](const std::array<Matrix, 4>& in) {
      Graph g(store, Precision::kFloat64, false);
      return txt::text_context_forward(
                 g, {g.constant(in[0]), g.constant(in[1]), g.constant(in[2]), g.constant(in[3])}, cfg)
          .value();
    };
    const Matrix base = run(inputs);
    for (Index t = 0; t + 1 < n; ++t) {
      std::array<Matrix, 4> moved = inputs;
      for (Matrix& m : moved) m.row(t + 1).array() += 1.0 + rng.uniform(0.0, 1.0);
      const Matrix out = run(moved);
      exact = exact && out.topRows(t + 1) == base.topRows(t + 1) && out.row(t + 1) != base.row(t + 1);
      ++checked;
    }
  }
  Outcome o;
  o.pass = exact;
  o.detail = fmt("%d perturbations of utterance t+1: H_l rows <= t %s", checked,
                 exact ? "bit-identical" : "changed");
  return o;
}

}  // namespace

int main() {
  report("gradient_integrity", gradient_integrity());
  report("loss_identities", loss_identities());
  report("attention_gate_invariants", attention_gate_invariants());
  report("oracle_equivalence", oracle_equivalence());
  report("learnability", learnability());
  report("ablation_direction", ablation_direction());
  report("determinism", determinism());
  report("causality", causality());
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
