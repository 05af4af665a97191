#include "hbaf/feature_store.hpp"

#include "hbaf/errors.hpp"
#include "hbaf/kv_file.hpp"
#include "hbaf/random.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace hbaf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Label sets

EmotionLabelSet::EmotionLabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw ConfigError("label set needs at least two classes");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ConfigError("label set: empty class name");
    if (!seen.insert(n).second) throw ConfigError("label set: duplicate class '" + n + "'");
  }
}

EmotionLabelSet EmotionLabelSet::meld() {
  return EmotionLabelSet({"anger", "joy", "sadness", "neutral", "disgust", "fear", "surprise"});
}

EmotionLabelSet EmotionLabelSet::iemocap() {
  return EmotionLabelSet({"happy", "sad", "neutral", "angry", "excited", "frustrated"});
}

EmotionLabelSet EmotionLabelSet::numbered(int count) {
  std::vector<std::string> names;
  for (int i = 0; i < count; ++i) names.push_back("c" + std::to_string(i));
  return EmotionLabelSet(std::move(names));
}

EmotionLabelSet EmotionLabelSet::builtin(std::string_view name) {
  if (name == "meld") return meld();
  if (name == "iemocap") return iemocap();
  throw ConfigError("unknown label set '" + std::string(name) + "'");
}

int EmotionLabelSet::index_of(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

// ---------------------------------------------------------------------------
// Records

void DialogueRecord::validate(const FeatureDims& dims, int num_classes) const {
  const Index n = size();
  if (n < 1) throw DataError("dialogue '" + id + "' has no utterances");
  auto check = [&](const Matrix& m, Index cols, const char* what) {
    if (m.rows() != n || m.cols() != cols) {
      throw DataError("dialogue '" + id + "': " + what + " is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " + std::to_string(n) + "x" +
                      std::to_string(cols));
    }
    if (!m.allFinite()) throw DataError("dialogue '" + id + "': non-finite " + what);
  };
  check(audio, dims.audio, "audio");
  check(context, dims.text, "context");
  check(external, dims.text, "external");
  check(internal, dims.text, "internal");
  check(purpose, dims.text, "purpose");
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw DataError("dialogue '" + id + "': unknown label index " + std::to_string(label));
    }
  }
}

const std::vector<std::string>& FeatureManifest::split(const std::string& name) const {
  static const std::vector<std::string> kEmpty;
  const auto it = splits.find(name);
  return it == splits.end() ? kEmpty : it->second;
}

std::vector<const DialogueRecord*> Dataset::split(const std::string& name) const {
  std::vector<const DialogueRecord*> out;
  for (const auto& id : manifest.split(name)) out.push_back(&dialogues.at(id));
  return out;
}

// ---------------------------------------------------------------------------
// Binary dialogue files

namespace {

constexpr std::string_view kMagic = "HBAF";
using io::put_le;
using io::Reader;
using io::read_bytes;
using io::write_bytes;
constexpr std::uint16_t kVersion = 1;

void put_row(std::string& out, const Matrix& m, Index row) {
  for (Index c = 0; c < m.cols(); ++c) {
    put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(row, c))));
  }
}

void get_row(Reader& in, Matrix& m, Index row) {
  for (Index c = 0; c < m.cols(); ++c) m(row, c) = static_cast<double>(in.get_f32());
}

}  // namespace

fs::path manifest_path(const fs::path& root) { return root / "manifest"; }

fs::path dialogue_path(const fs::path& root, const std::string& id) {
  return root / "dialogues" / (id + ".bin");
}

void write_dialogue(const fs::path& file, const DialogueRecord& record) {
  const Index n = record.size();
  std::string out(kMagic.begin(), kMagic.end());
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(n));
  put_le(out, static_cast<std::uint32_t>(record.audio.cols()));
  put_le(out, static_cast<std::uint32_t>(record.context.cols()));
  for (Index t = 0; t < n; ++t) {
    put_row(out, record.audio, t);
    put_row(out, record.context, t);
    put_row(out, record.external, t);
    put_row(out, record.internal, t);
    put_row(out, record.purpose, t);
    put_le(out, static_cast<std::uint16_t>(record.labels[static_cast<std::size_t>(t)]));
  }
  write_bytes(file, out);
}

DialogueRecord read_dialogue(const fs::path& file) {
  Reader in(read_bytes(file), file.string());
  in.expect(kMagic);
  const auto version = in.get<std::uint16_t>();
  if (version != kVersion) {
    throw DataError(file.string() + ": unsupported version " + std::to_string(version));
  }
  const auto n = static_cast<Index>(in.get<std::uint32_t>());
  const auto d_a = static_cast<Index>(in.get<std::uint32_t>());
  const auto d_t = static_cast<Index>(in.get<std::uint32_t>());
  DialogueRecord r;
  r.id = file.stem().string();
  r.audio.resize(n, d_a);
  r.context.resize(n, d_t);
  r.external.resize(n, d_t);
  r.internal.resize(n, d_t);
  r.purpose.resize(n, d_t);
  r.labels.resize(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    get_row(in, r.audio, t);
    get_row(in, r.context, t);
    get_row(in, r.external, t);
    get_row(in, r.internal, t);
    get_row(in, r.purpose, t);
    r.labels[static_cast<std::size_t>(t)] = in.get<std::uint16_t>();
  }
  if (!in.at_end()) throw DataError(file.string() + ": trailing bytes");
  return r;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

const std::array<std::string, 3> kSplitNames = {"train", "val", "test"};

FeatureManifest parse_manifest(const fs::path& file) {
  FeatureManifest m;
  bool have_labels = false;
  bool have_audio = false;
  bool have_text = false;
  for (const kv::Entry& e : kv::read_file(file)) {
    if (e.key == "format") {
      if (kv::to_int(e) != 1) throw ConfigError(file.string() + ": unsupported manifest format");
    } else if (e.key == "dataset") {
      m.dataset_name = e.value;
    } else if (e.key == "label_set") {
      m.labels = EmotionLabelSet::builtin(e.value);
      have_labels = true;
    } else if (e.key == "labels") {
      m.labels = EmotionLabelSet(kv::split_list(e.value));
      have_labels = true;
    } else if (e.key == "dims.audio") {
      m.dims.audio = static_cast<Index>(kv::to_int(e));
      have_audio = true;
    } else if (e.key == "dims.text") {
      m.dims.text = static_cast<Index>(kv::to_int(e));
      have_text = true;
    } else if (e.key == "provenance") {
      m.provenance = e.value;
    } else if (e.key.starts_with("split.")) {
      const std::string name = e.key.substr(6);
      if (std::find(kSplitNames.begin(), kSplitNames.end(), name) == kSplitNames.end()) {
        throw ConfigError(file.string() + ": unknown split '" + name + "'");
      }
      m.splits[name] = kv::split_list(e.value);
    } else {
      throw ConfigError(file.string() + ":" + std::to_string(e.line) + ": unknown key '" + e.key +
                        "'");
    }
  }
  if (!have_labels) throw ConfigError(file.string() + ": missing 'labels' or 'label_set'");
  if (!have_audio || !have_text) throw ConfigError(file.string() + ": missing dims");
  if (m.dims.audio < 1 || m.dims.text < 1) throw ConfigError(file.string() + ": dims must be positive");
  for (const auto& name : kSplitNames) m.splits.try_emplace(name);
  std::set<std::string> seen;
  for (const auto& [name, ids] : m.splits) {
    for (const auto& id : ids) {
      if (id.empty()) throw ConfigError(file.string() + ": empty dialogue id in split." + name);
      if (!seen.insert(id).second) {
        throw ConfigError(file.string() + ": dialogue '" + id + "' listed more than once");
      }
    }
  }
  return m;
}

fs::path resolve_root(const fs::path& path) {
  if (fs::is_directory(path)) return path;
  return path.parent_path();
}

void check_record_dims(const DialogueRecord& r, const FeatureManifest& m, const fs::path& file) {
  if (r.audio.cols() != m.dims.audio || r.context.cols() != m.dims.text) {
    throw DataError(file.string() + ": dim mismatch (audio " + std::to_string(r.audio.cols()) +
                    ", text " + std::to_string(r.context.cols()) + ") against manifest (audio " +
                    std::to_string(m.dims.audio) + ", text " + std::to_string(m.dims.text) + ")");
  }
  r.validate(m.dims, m.labels.size());
}

Dataset load_impl(const fs::path& path, bool keep_records) {
  const fs::path root = resolve_root(path);
  const fs::path file = fs::is_directory(path) ? manifest_path(path) : path;
  if (!fs::exists(file)) throw ConfigError("manifest not found: " + file.string());
  Dataset ds;
  ds.manifest = parse_manifest(file);
  for (const auto& [name, ids] : ds.manifest.splits) {
    std::size_t count = 0;
    for (const auto& id : ids) {
      const fs::path dfile = dialogue_path(root, id);
      if (!fs::exists(dfile)) throw DataError("missing dialogue file " + dfile.string());
      DialogueRecord r = read_dialogue(dfile);
      check_record_dims(r, ds.manifest, dfile);
      count += static_cast<std::size_t>(r.size());
      if (keep_records) ds.dialogues.emplace(id, std::move(r));
    }
    ds.manifest.utterance_counts[name] = count;
  }
  return ds;
}

}  // namespace

FeatureManifest load_manifest(const fs::path& path) { return load_impl(path, false).manifest; }

Dataset load_dataset(const fs::path& root) { return load_impl(root, true); }

void write_manifest(const fs::path& root, const FeatureManifest& m) {
  std::ostringstream out;
  out << "# HBAF feature manifest\n";
  out << "format = 1\n";
  out << "dataset = " << m.dataset_name << "\n";
  out << "labels = " << kv::join_list(m.labels.names()) << "\n";
  out << "dims.audio = " << m.dims.audio << "\n";
  out << "dims.text = " << m.dims.text << "\n";
  out << "provenance = " << m.provenance << "\n";
  for (const auto& name : kSplitNames) out << "split." << name << " = " << kv::join_list(m.split(name)) << "\n";
  fs::create_directories(root);
  write_bytes(manifest_path(root), out.str());
}

void write_dataset(const fs::path& root, const FeatureManifest& manifest,
                   const std::vector<DialogueRecord>& records) {
  write_manifest(root, manifest);
  for (const auto& r : records) {
    r.validate(manifest.dims, manifest.labels.size());
    write_dialogue(dialogue_path(root, r.id), r);
  }
}

std::uint64_t dataset_checksum(const fs::path& root) {
  std::uint64_t h = io::fnv1a(read_bytes(manifest_path(root)));
  const FeatureManifest m = parse_manifest(manifest_path(root));
  for (const auto& name : kSplitNames) {
    for (const auto& id : m.split(name)) h = io::fnv1a(read_bytes(dialogue_path(root, id)), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Synthetic data

SignalMode parse_signal_mode(std::string_view name) {
  if (name == "audio_only") return SignalMode::kAudioOnly;
  if (name == "text_only") return SignalMode::kTextOnly;
  if (name == "agreement") return SignalMode::kAgreement;
  throw ConfigError("unknown signal mode '" + std::string(name) + "'");
}

std::string to_string(SignalMode mode) {
  switch (mode) {
    case SignalMode::kAudioOnly: return "audio_only";
    case SignalMode::kTextOnly: return "text_only";
    case SignalMode::kAgreement: return "agreement";
  }
  return "?";
}

void SynthSpec::validate() const {
  if (n_dialogues < 1 || utterances_per_dialogue < 1 || audio_dim < 1 || text_dim < 1) {
    throw ConfigError("synth: counts and dims must be positive");
  }
  if (num_classes < 2) throw ConfigError("synth: need at least two classes");
  if (num_classes > 65535) throw ConfigError("synth: too many classes for u16 labels");
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be nonnegative");
  if (test_dialogues < 0 || val_dialogues < -1) throw ConfigError("synth: negative split size");
  const int val = val_dialogues < 0 ? n_dialogues / 4 : val_dialogues;
  if (val + test_dialogues > n_dialogues) {
    throw ConfigError("synth: val + test dialogues exceed n_dialogues");
  }
}

namespace {

Matrix gaussian(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double min_row_distance(const std::vector<Eigen::RowVectorXd>& means) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) best = std::min(best, (means[i] - means[j]).norm());
  }
  return best;
}

void round_to_f32(Matrix& m) { m = m.cast<float>().cast<double>(); }

}  // namespace

SyntheticDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int c = spec.num_classes;
  const Index da = spec.audio_dim;
  const Index dt = spec.text_dim;
  const int pairs = (c + 1) / 2;

  // Prototype banks. Row k of a bank is the mean contribution of latent value k.
  Matrix audio_class = gaussian(rng, c, da);
  Matrix audio_pair = gaussian(rng, pairs, da);
  Matrix audio_bit = gaussian(rng, 2, da);
  std::array<Matrix, 4> text_class;
  std::array<Matrix, 4> text_bit;
  for (auto& m : text_class) m = gaussian(rng, c, dt);
  for (auto& m : text_bit) m = gaussian(rng, 2, dt);

  // Scale so distinct class-conditional means are at least 4 sigma apart.
  std::vector<Eigen::RowVectorXd> audio_means;
  std::vector<Eigen::RowVectorXd> text_means;
  switch (spec.mode) {
    case SignalMode::kAudioOnly:
      for (int k = 0; k < c; ++k) audio_means.push_back(audio_class.row(k));
      break;
    case SignalMode::kTextOnly:
      for (int k = 0; k < c; ++k) text_means.push_back(text_class[0].row(k));
      break;
    case SignalMode::kAgreement:
      for (int p = 0; p < pairs; ++p) {
        for (int b = 0; b < 2; ++b) audio_means.push_back(audio_pair.row(p) + audio_bit.row(b));
      }
      for (int b = 0; b < 2; ++b) text_means.push_back(text_bit[0].row(b));
      break;
  }
  double scale = 1.0;
  for (const auto* means : {&audio_means, &text_means}) {
    if (means->size() < 2) continue;
    const double dist = min_row_distance(*means);
    if (dist > 0.0) scale = std::max(scale, 4.0 * spec.noise_std / dist);
  }
  // Small margin so that float32 rounding cannot push a pair below the bound.
  scale *= 1.0 + 1e-6;
  audio_class *= scale;
  audio_pair *= scale;
  audio_bit *= scale;
  for (auto& m : text_class) m *= scale;
  for (auto& m : text_bit) m *= scale;

  const int n_val = spec.val_dialogues < 0 ? spec.n_dialogues / 4 : spec.val_dialogues;
  const int n_test = spec.test_dialogues;
  const int n_train = spec.n_dialogues - n_val - n_test;
  const Index n = spec.utterances_per_dialogue;

  SyntheticDataset out;
  FeatureManifest& m = out.manifest;
  m.dataset_name = "synthetic-" + to_string(spec.mode);
  m.labels = EmotionLabelSet::numbered(c);
  m.dims = FeatureDims{da, dt};
  m.provenance = "generate_synthetic mode=" + to_string(spec.mode) +
                 " noise_std=" + std::to_string(spec.noise_std) + " seed=" + std::to_string(spec.seed);
  for (const auto& name : kSplitNames) m.splits[name];

  for (int dlg = 0; dlg < spec.n_dialogues; ++dlg) {
    DialogueRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "d%05d", dlg);
    r.id = id;
    r.audio = gaussian(rng, n, da) * spec.noise_std;
    std::array<Matrix*, 4> text = {&r.context, &r.external, &r.internal, &r.purpose};
    for (Matrix* t : text) *t = gaussian(rng, n, dt) * spec.noise_std;
    const int dialogue_bit = static_cast<int>(rng.below(2));
    for (Index t = 0; t < n; ++t) {
      const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
      r.labels.push_back(label);
      switch (spec.mode) {
        case SignalMode::kAudioOnly:
          r.audio.row(t) += audio_class.row(label);
          for (std::size_t k = 0; k < text.size(); ++k) {
            text[k]->row(t) += gaussian(rng, 1, dt).row(0);
          }
          break;
        case SignalMode::kTextOnly:
          r.audio.row(t) += gaussian(rng, 1, da).row(0);
          for (std::size_t k = 0; k < text.size(); ++k) text[k]->row(t) += text_class[k].row(label);
          break;
        case SignalMode::kAgreement: {
          const int audio_bit_value = dialogue_bit ^ (label % 2);
          r.audio.row(t) += audio_pair.row(label / 2) + audio_bit.row(audio_bit_value);
          for (std::size_t k = 0; k < text.size(); ++k) text[k]->row(t) += text_bit[k].row(dialogue_bit);
          break;
        }
      }
    }
    round_to_f32(r.audio);
    for (Matrix* t : text) round_to_f32(*t);
    const char* split = dlg < n_train ? "train" : (dlg < n_train + n_val ? "val" : "test");
    m.splits[split].push_back(r.id);
    m.utterance_counts[split] += static_cast<std::size_t>(n);
    out.records.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
  }
  return batches;
}

std::vector<std::vector<const DialogueRecord*>> batch_dialogues(
    const std::vector<const DialogueRecord*>& records, std::size_t batch_size, std::uint64_t seed) {
  if (records.empty()) throw ConfigError("batch_dialogues: no records");
  std::vector<std::vector<const DialogueRecord*>> out;
  for (const auto& idx : batch_indices(records.size(), batch_size, seed)) {
    auto& batch = out.emplace_back();
    for (std::size_t i : idx) batch.push_back(records[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standardization

Standardizer Standardizer::fit(const std::vector<const DialogueRecord*>& records) {
  if (records.empty()) throw ConfigError("standardizer: no records");
  Standardizer s;
  const std::array<Matrix DialogueRecord::*, 5> blocks = {
      &DialogueRecord::audio, &DialogueRecord::context, &DialogueRecord::external,
      &DialogueRecord::internal, &DialogueRecord::purpose};
  for (auto block : blocks) {
    const Index cols = (records.front()->*block).cols();
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(cols);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(cols);
    double count = 0.0;
    for (const auto* r : records) {
      const Matrix& m = r->*block;
      sum += m.colwise().sum();
      sq += m.array().square().matrix().colwise().sum();
      count += static_cast<double>(m.rows());
    }
    Eigen::RowVectorXd mean = sum / count;
    Eigen::RowVectorXd var = (sq / count - mean.array().square().matrix()).cwiseMax(0.0);
    Eigen::RowVectorXd inv = var.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; });
    s.mean.push_back(mean);
    s.inv_std.push_back(inv);
  }
  return s;
}

void Standardizer::apply(DialogueRecord& r) const {
  const std::array<Matrix*, 5> blocks = {&r.audio, &r.context, &r.external, &r.internal, &r.purpose};
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    Matrix& m = *blocks[k];
    m = ((m.rowwise() - mean[k]).array().rowwise() * inv_std[k].array()).matrix();
  }
}

}  // namespace hbaf
