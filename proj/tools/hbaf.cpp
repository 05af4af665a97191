// hbaf: synthesize data, train, evaluate, check gradients, run ablation sweeps.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
// 4 failed check.

#include "hbaf/checkpoint.hpp"
#include "hbaf/errors.hpp"
#include "hbaf/feature_store.hpp"
#include "hbaf/gradcheck.hpp"
#include "hbaf/metrics.hpp"
#include "hbaf/run_config.hpp"
#include "hbaf/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hbaf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheck = 4;

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}

json loss_json(const LossReport& r) {
  return {{"ce", r.ce},
          {"inter", r.inter},
          {"total", r.total},
          {"audio_fused", r.audio_fused},
          {"text_fused", r.text_fused},
          {"relative", r.relative},
          {"mu_effective", r.mu_effective}};
}

json epoch_json(const EpochRecord& e) {
  return {{"type", "epoch"},
          {"epoch", e.epoch},
          {"train", loss_json(e.train)},
          {"val", loss_json(e.val)},
          {"val_weighted_f1", e.val_weighted_f1},
          {"val_accuracy", e.val_accuracy},
          {"train_weighted_f1", e.train_weighted_f1},
          {"train_accuracy", e.train_accuracy},
          {"l2_penalty", e.l2_penalty}};
}

json report_json(const EvalReport& r, const std::vector<std::string>& names) {
  json classes = json::array();
  for (int c = 0; c < r.num_classes; ++c) {
    const ClassMetrics& m = r.per_class[c];
    classes.push_back({{"name", names[c]},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
  }
  return {{"weighted_f1", r.weighted_f1},
          {"accuracy", r.accuracy},
          {"total", r.total},
          {"classes", classes},
          {"confusion", r.confusion}};
}

// Options shared by train and ablate: config file, --set overrides and shortcuts.
struct RunOptions {
  std::string data;
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::string> ablate;
  std::optional<double> mu, lr;
  std::optional<int> epochs, batch_size, width, patience, seeds;
  std::optional<long long> seed;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--data", data, "Dataset root (directory holding the manifest)")->required();
    app->add_option("--config", config_file, "key = value config file");
    app->add_option("--set", sets, "Override a config key, key=value (repeatable)");
    app->add_option("--ablate", ablate, "Ablation flag to enable (repeatable)");
    app->add_option("--mu", mu, "Contrastive loss weight");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--epochs", epochs, "Maximum epochs");
    app->add_option("--batch-size", batch_size, "Dialogues per batch");
    app->add_option("--width", width, "Reduced model width");
    app->add_option("--patience", patience, "Early-stopping patience");
    app->add_option("--seed", seed, "Seed for initialization and shuffling");
    app->add_option("--out", out, "Output directory");
  }

  RunConfig resolve() const {
    RunConfig rc;
    if (!config_file.empty()) rc.load(config_file);
    for (const auto& s : sets) rc.set_assignment(s);
    for (const auto& a : ablate) rc.set("ablate." + a, "true");
    auto num = [](double v) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    if (mu) rc.set("loss.mu", num(*mu));
    if (lr) rc.set("train.learning_rate", num(*lr));
    if (epochs) rc.set("train.max_epochs", std::to_string(*epochs));
    if (batch_size) rc.set("train.batch_size", std::to_string(*batch_size));
    if (width) rc.set("model.width", std::to_string(*width));
    if (patience) rc.set("train.patience", std::to_string(*patience));
    if (seed) rc.set("train.seed", std::to_string(*seed));
    if (seeds) rc.set("sweep.seeds", std::to_string(*seeds));
    return rc;
  }

  fs::path out_dir(const char* command) const {
    return out.empty() ? default_output_root() / command : fs::path(out);
  }
};

int cmd_synth(const SynthSpec& spec, const std::string& out_arg, const std::string& name) {
  const SyntheticDataset data = generate_synthetic(spec);
  const fs::path root = out_arg.empty() ? default_output_root() / "synth" : fs::path(out_arg);
  FeatureManifest manifest = data.manifest;
  if (!name.empty()) manifest.dataset_name = name;
  write_dataset(root, manifest, data.records);
  const FeatureManifest loaded = load_manifest(root);
  std::size_t total = 0;
  std::printf("dataset %s\n", loaded.dataset_name.c_str());
  std::printf("root %s\n", root.string().c_str());
  std::printf("mode %s  classes %d  dims audio %lld text %lld\n", to_string(spec.mode).c_str(),
              loaded.labels.size(), static_cast<long long>(loaded.dims.audio),
              static_cast<long long>(loaded.dims.text));
  for (const auto& [split, count] : loaded.utterance_counts) {
    std::printf("split %-5s dialogues %zu utterances %zu\n", split.c_str(),
                loaded.split(split).size(), count);
    total += count;
  }
  std::printf("utterances %zu\n", total);
  std::printf("checksum %016llx\n", static_cast<unsigned long long>(dataset_checksum(root)));
  return 0;
}

struct TrainOutcome {
  TrainResult result;
  EvalResult val;
};

TrainOutcome run_training(const Dataset& data, RunConfig& rc, const fs::path& out,
                          bool write_files) {
  ModelConfig mc = rc.resolve_model(static_cast<int>(data.manifest.dims.audio),
                                    static_cast<int>(data.manifest.dims.text),
                                    data.manifest.labels.size());
  const TrainConfig tc = rc.train_config();
  HbafModel model(mc, tc.seed);
  const auto train_set = data.split("train");
  const auto val_set = data.split("val");

  std::ofstream history;
  if (write_files) {
    fs::create_directories(out);
    write_text(out / "config.resolved", rc.echo());
    history.open(out / "history.jsonl", std::ios::trunc);
    json header = {{"type", "run"},
                   {"dataset", data.manifest.dataset_name},
                   {"ablations", mc.ablations.active()},
                   {"seed", tc.seed},
                   {"mu", tc.loss.mu}};
    history << header.dump() << '\n';
  }
  TrainOutcome o;
  o.result = train(model, train_set, val_set, tc, [&](const EpochRecord& e) {
    if (write_files) history << epoch_json(e).dump() << '\n' << std::flush;
  });
  o.val = evaluate(model, val_set, tc.loss, tc.batch_size, tc.precision);
  if (write_files) {
    save_checkpoint(out / "model.ckpt", mc, model.params(), data.manifest.labels.names());
    write_text(out / "eval_val.txt", format_report(o.val.metrics, data.manifest.labels.names()));
    json summary = report_json(o.val.metrics, data.manifest.labels.names());
    summary["best_epoch"] = o.result.best_epoch;
    summary["epochs_run"] = o.result.history.size();
    summary["early_stopped"] = o.result.early_stopped;
    summary["val_loss"] = loss_json(o.val.loss);
    write_text(out / "eval_val.json", summary.dump(2) + "\n");
  }
  return o;
}

int cmd_train(const RunOptions& opt) {
  RunConfig rc = opt.resolve();
  const Dataset data = load_dataset(opt.data);
  const fs::path out = opt.out_dir("train");
  const TrainOutcome o = run_training(data, rc, out, true);
  std::cout << "# resolved config\n" << rc.echo() << '\n';
  const EpochRecord& last = o.result.history.back();
  std::printf("epochs %zu  best_epoch %d  early_stopped %s\n", o.result.history.size(),
              o.result.best_epoch, o.result.early_stopped ? "true" : "false");
  std::printf("last train: ce %.6f inter %.6f total %.6f weighted_f1 %.6f\n", last.train.ce,
              last.train.inter, last.train.total, last.train_weighted_f1);
  std::printf("best val: total %.6f weighted_f1 %.6f accuracy %.6f\n", o.val.loss.total,
              o.val.metrics.weighted_f1, o.val.metrics.accuracy);
  std::printf("outputs %s\n", out.string().c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_root, const std::string& split,
             const std::string& out_file, int batch_size) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(data_root);
  if (data.manifest.dims.audio != ck.config.audio_dim ||
      data.manifest.dims.text != ck.config.text_dim) {
    throw DataError("checkpoint dims (" + std::to_string(ck.config.audio_dim) + ", " +
                    std::to_string(ck.config.text_dim) + ") do not match the dataset (" +
                    std::to_string(data.manifest.dims.audio) + ", " +
                    std::to_string(data.manifest.dims.text) + ")");
  }
  if (data.manifest.labels.size() != ck.config.num_classes) {
    throw DataError("checkpoint class count does not match the dataset");
  }
  const auto records = data.split(split);
  HbafModel model(ck.config, std::move(ck.params));
  LossConfig loss;
  const EvalResult r = evaluate(model, records, loss, batch_size);
  const std::string table = format_report(r.metrics, ck.class_names);
  std::cout << "split " << split << '\n' << table;
  if (!out_file.empty()) {
    json j = report_json(r.metrics, ck.class_names);
    j["split"] = split;
    j["checkpoint"] = checkpoint;
    write_text(out_file, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_gradcheck(const HbafCheckSetup& setup, const GradCheckOptions& options,
                  const std::string& json_file) {
  const GradCheckReport r = grad_check_hbaf(setup, options);
  std::printf("%-32s %8s %14s %14s  %s\n", "tensor", "entries", "max_rel_err", "max_abs_err",
              "status");
  for (const TensorCheck& t : r.tensors) {
    std::printf("%-32s %8lld %14.3e %14.3e  %s\n", t.name.c_str(),
                static_cast<long long>(t.entries), t.max_rel_error, t.max_abs_error,
                t.pass ? "ok" : "FAIL");
  }
  std::printf("max_rel_error %.3e (%s)  tolerance %.1e  seconds %.2f\n", r.max_rel_error,
              r.worst_tensor.c_str(), options.tolerance, r.seconds);
  const auto failing = r.failing();
  for (const auto& f : failing) std::printf("failing tensor %s\n", f.c_str());
  std::printf("%s\n", r.pass ? "PASS" : "FAIL");
  if (!json_file.empty()) {
    json tensors = json::array();
    for (const TensorCheck& t : r.tensors) {
      tensors.push_back({{"name", t.name},
                         {"entries", t.entries},
                         {"max_rel_error", t.max_rel_error},
                         {"max_abs_error", t.max_abs_error},
                         {"pass", t.pass}});
    }
    write_text(json_file, json{{"pass", r.pass},
                               {"max_rel_error", r.max_rel_error},
                               {"tolerance", options.tolerance},
                               {"failing", failing},
                               {"tensors", tensors}}
                              .dump(2) +
                              "\n");
  }
  return r.pass ? 0 : kExitCheck;
}

int cmd_ablate(const RunOptions& opt) {
  RunConfig base = opt.resolve();
  const Dataset data = load_dataset(opt.data);
  const fs::path out = opt.out_dir("ablate");
  const int seeds = base.sweep_seeds();
  const auto first_seed = std::stoll(base.get("train.seed"));
  std::vector<std::string> variants = {"full"};
  for (const auto& v : base.sweep_variants()) variants.push_back(v);

  json rows = json::array();
  std::printf("%-16s %10s %10s  %s\n", "variant", "mean_f1", "sd_f1", "per_seed");
  for (const auto& variant : variants) {
    std::vector<double> scores;
    for (int s = 0; s < seeds; ++s) {
      RunConfig rc = base;
      rc.set("train.seed", std::to_string(first_seed + s));
      if (variant != "full") rc.set("ablate." + variant, "true");
      const TrainOutcome o = run_training(data, rc, out / variant / ("seed" + std::to_string(s)), true);
      scores.push_back(o.val.metrics.weighted_f1);
    }
    double mean = 0.0;
    for (double x : scores) mean += x;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double x : scores) var += (x - mean) * (x - mean);
    const double sd = scores.size() > 1 ? std::sqrt(var / static_cast<double>(scores.size() - 1)) : 0.0;
    std::string per;
    for (double x : scores) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%.4f", per.empty() ? "" : " ", x);
      per += buf;
    }
    std::printf("%-16s %10.4f %10.4f  %s\n", variant.c_str(), mean, sd, per.c_str());
    rows.push_back({{"variant", variant}, {"mean_f1", mean}, {"sd_f1", sd}, {"per_seed", scores}});
  }
  write_text(out / "config.resolved", base.echo());
  write_text(out / "ablation.json", json{{"seeds", seeds}, {"rows", rows}}.dump(2) + "\n");
  std::printf("outputs %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HBAF: bimodal attention fusion for conversational emotion recognition"};
  app.require_subcommand(1);

  SynthSpec spec;
  std::string synth_out, synth_mode = "agreement", synth_name;
  int synth_val = -1;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--dialogues", spec.n_dialogues, "Total dialogues")->capture_default_str();
  synth->add_option("--len", spec.utterances_per_dialogue, "Utterances per dialogue")->capture_default_str();
  synth->add_option("--classes", spec.num_classes, "Emotion classes")->capture_default_str();
  synth->add_option("--audio-dim", spec.audio_dim, "Audio feature width")->capture_default_str();
  synth->add_option("--text-dim", spec.text_dim, "Text feature width")->capture_default_str();
  synth->add_option("--mode", synth_mode, "audio_only, text_only or agreement")->capture_default_str();
  synth->add_option("--noise", spec.noise_std, "Noise standard deviation")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  synth->add_option("--val", synth_val, "Validation dialogues (-1: a quarter)")->capture_default_str();
  synth->add_option("--test", spec.test_dialogues, "Test dialogues")->capture_default_str();
  synth->add_option("--name", synth_name, "Dataset name");
  synth->add_option("--out", synth_out, "Output root");

  RunOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "Train a model and evaluate on the val split");
  train_opt.add_to(train_cmd);

  std::string ck_path, eval_data, eval_split = "val", eval_out;
  int eval_batch = 8;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", ck_path, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset root")->required();
  eval_cmd->add_option("--split", eval_split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Write the report as JSON here");
  eval_cmd->add_option("--batch-size", eval_batch, "Dialogues per forward pass")->capture_default_str();

  HbafCheckSetup gc_setup;
  GradCheckOptions gc_opts;
  std::vector<std::string> gc_ablate;
  std::string gc_json;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--tolerance", gc_opts.tolerance, "Max relative error")->capture_default_str();
  gc->add_option("--step", gc_opts.step, "Relative probe step")->capture_default_str();
  gc->add_option("--corrupt", gc_opts.corrupt, "Shift one analytic entry of this tensor");
  gc->add_option("--width", gc_setup.width, "Model width")->capture_default_str();
  gc->add_option("--seed", gc_setup.seed, "Seed")->capture_default_str();
  gc->add_option("--ablate", gc_ablate, "Ablation flag to enable (repeatable)");
  gc->add_option("--json", gc_json, "Write the report as JSON here");

  RunOptions ablate_opt;
  auto* ablate = app.add_subcommand("ablate", "Train the full model and single-ablation variants");
  ablate_opt.add_to(ablate);
  ablate->add_option("--seeds", ablate_opt.seeds, "Seeds per variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) {
      spec.mode = parse_signal_mode(synth_mode);
      spec.val_dialogues = synth_val;
      return cmd_synth(spec, synth_out, synth_name);
    }
    if (*train_cmd) return cmd_train(train_opt);
    if (*eval_cmd) return cmd_eval(ck_path, eval_data, eval_split, eval_out, eval_batch);
    if (*gc) {
      for (const auto& a : gc_ablate) {
        if (!gc_setup.ablations.set(a)) throw ConfigError("unknown ablation " + a);
      }
      return cmd_gradcheck(gc_setup, gc_opts, gc_json);
    }
    if (*ablate) return cmd_ablate(ablate_opt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
