#include "hbaf/run_config.hpp"

#include "hbaf/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace hbaf {

namespace {

const char* const kAuto = "auto";

const std::vector<std::string>& model_int_keys() {
  static const std::vector<std::string> keys = {
      "model.conv_kernel",    "model.conv_filters", "model.lstm_layers", "model.encoder_layers",
      "model.encoder_heads",  "model.encoder_ff",   "model.attn_hidden", "model.fusion_ff"};
  return keys;
}

std::map<std::string, std::string> defaults() {
  std::map<std::string, std::string> d = {
      {"model.preset", "reduced"},
      {"model.width", "32"},
      {"model.separate_cross_projections", "false"},
      {"model.dropout", "0"},
      {"train.learning_rate", "0.0001"},
      {"train.batch_size", "8"},
      {"train.l2_weight", "0.0003"},
      {"train.decoupled_l2", "false"},
      {"train.patience", "15"},
      {"train.max_epochs", "300"},
      {"train.seed", "0"},
      {"train.precision", "64"},
      {"train.adam_beta1", "0.9"},
      {"train.adam_beta2", "0.999"},
      {"train.adam_eps", "1e-08"},
      {"train.track_train_metrics", "true"},
      {"loss.mu", "0.2"},
      {"loss.tau", "0.1"},
      {"loss.lambda1", "0.33333333333333331"},
      {"loss.lambda2", "0.33333333333333331"},
      {"loss.lambda3", "0.33333333333333331"},
      {"loss.literal_denominator", "false"},
      {"sweep.seeds", "3"},
      {"sweep.variants", "no_acn,no_fusion,no_contrastive,no_gate,no_residual"},
  };
  for (const auto& k : model_int_keys()) d[k] = kAuto;
  for (const auto& name : Ablations::names()) d["ablate." + name] = "false";
  return d;
}

kv::Entry entry(const std::string& key, const std::string& value) { return {key, value, 0}; }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_value(const std::string& key, const std::string& value) {
  const kv::Entry e = entry(key, value);
  if (key == "model.preset") {
    if (value != "reduced" && value != "full") throw ConfigError("model.preset must be reduced or full");
  } else if (key == "train.precision") {
    if (value != "64" && value != "32") throw ConfigError("train.precision must be 64 or 32");
  } else if (key == "sweep.variants") {
    Ablations probe;
    for (const auto& v : kv::split_list(value)) {
      if (!probe.set(v)) throw ConfigError("sweep.variants: unknown ablation " + v);
    }
  } else if (key.starts_with("ablate.") || key == "model.separate_cross_projections" ||
             key == "train.decoupled_l2" || key == "train.track_train_metrics" ||
             key == "loss.literal_denominator") {
    kv::to_bool(e);
  } else if (key == "model.width" || key == "train.batch_size" || key == "train.patience" ||
             key == "train.max_epochs" || key == "sweep.seeds") {
    kv::to_int(e);
  } else if (key == "train.seed") {
    if (kv::to_int(e) < 0) throw ConfigError("train.seed must be nonnegative");
  } else if (key.starts_with("model.") && value != kAuto && key != "model.dropout") {
    kv::to_int(e);
  } else if (key.starts_with("model.") || key.starts_with("train.") || key.starts_with("loss.")) {
    if (value != kAuto) kv::to_double(e);
  }
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : defaults()) out.push_back(k);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  const std::string v = kv::trim(value);
  check_value(key, v);
  it->second = v;
}

void RunConfig::load(const std::filesystem::path& path) {
  for (const kv::Entry& e : kv::read_file(path)) {
    try {
      set(e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(path.string() + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got " + assignment);
  set(kv::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

ModelConfig RunConfig::resolve_model(int audio_dim, int text_dim, int num_classes) {
  ModelConfig m;
  if (get("model.preset") == "full") {
    m.audio_dim = audio_dim;
    m.text_dim = text_dim;
    m.num_classes = num_classes;
  } else {
    m = ModelConfig::reduced(static_cast<int>(kv::to_int(entry("model.width", get("model.width")))),
                             audio_dim, text_dim, num_classes);
  }
  int* fields[] = {&m.conv_kernel,    &m.conv_filters, &m.lstm_layers, &m.encoder_layers,
                   &m.encoder_heads,  &m.encoder_ff,   &m.attn_hidden, &m.fusion_ff};
  const auto& int_keys = model_int_keys();
  for (std::size_t i = 0; i < int_keys.size(); ++i) {
    const std::string& v = get(int_keys[i]);
    if (v == kAuto) {
      values_[int_keys[i]] = std::to_string(*fields[i]);
    } else {
      *fields[i] = static_cast<int>(kv::to_int(entry(int_keys[i], v)));
    }
  }
  if (get("model.preset") == "full") values_["model.width"] = std::to_string(m.d_model);
  m.separate_cross_projections = kv::to_bool(entry("", get("model.separate_cross_projections")));
  m.dropout = kv::to_double(entry("model.dropout", get("model.dropout")));
  for (const auto& name : Ablations::names()) {
    m.ablations.set(name, kv::to_bool(entry("", get("ablate." + name))));
  }
  m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  auto d = [&](const char* k) { return kv::to_double(entry(k, get(k))); };
  auto i = [&](const char* k) { return kv::to_int(entry(k, get(k))); };
  auto b = [&](const char* k) { return kv::to_bool(entry(k, get(k))); };
  TrainConfig t;
  t.learning_rate = d("train.learning_rate");
  t.batch_size = static_cast<int>(i("train.batch_size"));
  t.l2_weight = d("train.l2_weight");
  t.decoupled_l2 = b("train.decoupled_l2");
  t.patience = static_cast<int>(i("train.patience"));
  t.max_epochs = static_cast<int>(i("train.max_epochs"));
  t.seed = static_cast<std::uint64_t>(i("train.seed"));
  t.precision = get("train.precision") == "32" ? Precision::kFloat32 : Precision::kFloat64;
  t.adam.beta1 = d("train.adam_beta1");
  t.adam.beta2 = d("train.adam_beta2");
  t.adam.eps = d("train.adam_eps");
  t.track_train_metrics = b("train.track_train_metrics");
  t.loss.mu = d("loss.mu");
  t.loss.contrastive.tau = d("loss.tau");
  t.loss.contrastive.lambda1 = d("loss.lambda1");
  t.loss.contrastive.lambda2 = d("loss.lambda2");
  t.loss.contrastive.lambda3 = d("loss.lambda3");
  t.loss.contrastive.literal_denominator = b("loss.literal_denominator");
  t.validate();
  return t;
}

int RunConfig::sweep_seeds() const {
  const long long n = kv::to_int(entry("sweep.seeds", get("sweep.seeds")));
  if (n < 1) throw ConfigError("sweep.seeds must be at least 1");
  return static_cast<int>(n);
}

std::vector<std::string> RunConfig::sweep_variants() const {
  return kv::split_list(get("sweep.variants"));
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

std::filesystem::path default_output_root() {
  const char* env = std::getenv("HBAF_OUTPUT_ROOT");
  return (env != nullptr && *env != '\0') ? std::filesystem::path(env)
                                          : std::filesystem::path("hbaf_runs");
}

std::string model_config_to_text(const ModelConfig& m) {
  std::ostringstream os;
  os << "model.audio_dim = " << m.audio_dim << '\n'
     << "model.text_dim = " << m.text_dim << '\n'
     << "model.d_model = " << m.d_model << '\n'
     << "model.conv_kernel = " << m.conv_kernel << '\n'
     << "model.conv_filters = " << m.conv_filters << '\n'
     << "model.lstm_layers = " << m.lstm_layers << '\n'
     << "model.encoder_layers = " << m.encoder_layers << '\n'
     << "model.encoder_heads = " << m.encoder_heads << '\n'
     << "model.encoder_ff = " << m.encoder_ff << '\n'
     << "model.attn_hidden = " << m.attn_hidden << '\n'
     << "model.fusion_ff = " << m.fusion_ff << '\n'
     << "model.num_classes = " << m.num_classes << '\n'
     << "model.separate_cross_projections = "
     << (m.separate_cross_projections ? "true" : "false") << '\n'
     << "model.dropout = " << format_double(m.dropout) << '\n';
  os << "ablate = " << kv::join_list(m.ablations.active()) << '\n';
  return os.str();
}

ModelConfig model_config_from_entries(const std::vector<kv::Entry>& entries) {
  ModelConfig m;
  std::map<std::string, int*> ints = {
      {"model.audio_dim", &m.audio_dim},       {"model.text_dim", &m.text_dim},
      {"model.d_model", &m.d_model},           {"model.conv_kernel", &m.conv_kernel},
      {"model.conv_filters", &m.conv_filters}, {"model.lstm_layers", &m.lstm_layers},
      {"model.encoder_layers", &m.encoder_layers}, {"model.encoder_heads", &m.encoder_heads},
      {"model.encoder_ff", &m.encoder_ff},     {"model.attn_hidden", &m.attn_hidden},
      {"model.fusion_ff", &m.fusion_ff},       {"model.num_classes", &m.num_classes}};
  for (const kv::Entry& e : entries) {
    if (auto it = ints.find(e.key); it != ints.end()) {
      *it->second = static_cast<int>(kv::to_int(e));
    } else if (e.key == "model.separate_cross_projections") {
      m.separate_cross_projections = kv::to_bool(e);
    } else if (e.key == "model.dropout") {
      m.dropout = kv::to_double(e);
    } else if (e.key == "ablate") {
      for (const auto& name : kv::split_list(e.value)) {
        if (!m.ablations.set(name)) throw DataError("unknown ablation in model header: " + name);
      }
    } else {
      throw DataError("unknown model header key: " + e.key);
    }
  }
  m.validate();
  return m;
}

}  // namespace hbaf
