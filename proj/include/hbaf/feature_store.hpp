#pragma once

// On-disk data model for precomputed dialogue features.
//
// Layout under a dataset root:
//   <root>/manifest             key = value text (see write_manifest)
//   <root>/dialogues/<id>.bin   "HBAF", u16 version, u32 N, u32 D_a, u32 D_text,
//                               then per utterance: audio, l^r, l^e, l^i, l^p as
//                               little-endian f32, and the label as u16.

#include "hbaf/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hbaf {

class EmotionLabelSet {
 public:
  EmotionLabelSet() = default;
  /// Throws ConfigError on duplicates or fewer than two names.
  explicit EmotionLabelSet(std::vector<std::string> names);

  static EmotionLabelSet meld();
  static EmotionLabelSet iemocap();
  /// "c0", "c1", ...
  static EmotionLabelSet numbered(int count);
  /// "meld" or "iemocap"; throws ConfigError otherwise.
  static EmotionLabelSet builtin(std::string_view name);

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  int index_of(std::string_view name) const;  // -1 when absent
  bool operator==(const EmotionLabelSet&) const = default;

 private:
  std::vector<std::string> names_;
};

struct FeatureDims {
  Index audio = 512;
  Index text = 1024;
  bool operator==(const FeatureDims&) const = default;
};

/// One dialogue; row t of every matrix is utterance t.
struct DialogueRecord {
  std::string id;
  Matrix audio;     // N x D_a
  Matrix context;   // l^r, N x D_text
  Matrix external;  // l^e
  Matrix internal;  // l^i
  Matrix purpose;   // l^p
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
  /// Throws DataError on shape, finiteness or label-range violations.
  void validate(const FeatureDims& dims, int num_classes) const;
  bool operator==(const DialogueRecord&) const = default;
};

struct FeatureManifest {
  std::string dataset_name;
  EmotionLabelSet labels;
  FeatureDims dims;
  std::map<std::string, std::vector<std::string>> splits;  // "train", "val", "test"
  std::string provenance;
  /// Filled by load_manifest: utterances per split.
  std::map<std::string, std::size_t> utterance_counts;

  const std::vector<std::string>& split(const std::string& name) const;
};

struct Dataset {
  FeatureManifest manifest;
  std::map<std::string, DialogueRecord> dialogues;

  /// Records of a split in manifest order.
  std::vector<const DialogueRecord*> split(const std::string& name) const;
};

std::filesystem::path manifest_path(const std::filesystem::path& root);
std::filesystem::path dialogue_path(const std::filesystem::path& root, const std::string& id);

/// Accepts either the dataset root or the manifest file itself. Validates the
/// manifest and every referenced dialogue file, and fills utterance_counts.
FeatureManifest load_manifest(const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& root);

void write_manifest(const std::filesystem::path& root, const FeatureManifest& manifest);
void write_dialogue(const std::filesystem::path& file, const DialogueRecord& record);
DialogueRecord read_dialogue(const std::filesystem::path& file);
void write_dataset(const std::filesystem::path& root, const FeatureManifest& manifest,
                   const std::vector<DialogueRecord>& records);

/// FNV-1a over the manifest and every dialogue file, in split order.
std::uint64_t dataset_checksum(const std::filesystem::path& root);

enum class SignalMode { kAudioOnly, kTextOnly, kAgreement };
SignalMode parse_signal_mode(std::string_view name);
std::string to_string(SignalMode mode);

struct SynthSpec {
  int n_dialogues = 8;
  int utterances_per_dialogue = 6;
  int num_classes = 4;
  int audio_dim = 32;
  int text_dim = 32;
  SignalMode mode = SignalMode::kAgreement;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  int val_dialogues = -1;  // -1: a quarter of n_dialogues
  int test_dialogues = 0;

  void validate() const;
};

struct SyntheticDataset {
  FeatureManifest manifest;
  std::vector<DialogueRecord> records;
};

/// Deterministic given the spec. Labels are uniform over classes.
///   audio_only / text_only: the named modality carries a per-class prototype,
///     the other carries label-independent vectors.
///   agreement: each dialogue draws a hidden bit b carried by all text vectors;
///     each utterance's audio carries its class pair (label / 2) and the bit
///     a = b xor (label % 2). Either modality alone leaves label % 2 undetermined.
/// Prototypes are scaled so distinct class-conditional means sit at least
/// 4 * noise_std apart.
SyntheticDataset generate_synthetic(const SynthSpec& spec);

/// Shuffled partition of whole dialogues into batches; every dialogue appears
/// exactly once. Deterministic given seed.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed);
std::vector<std::vector<const DialogueRecord*>> batch_dialogues(
    const std::vector<const DialogueRecord*>& records, std::size_t batch_size,
    std::uint64_t seed);

/// Per-dimension mean/std of each feature block, fitted on one set of records.
struct Standardizer {
  std::vector<Eigen::RowVectorXd> mean;  // audio, context, external, internal, purpose
  std::vector<Eigen::RowVectorXd> inv_std;

  static Standardizer fit(const std::vector<const DialogueRecord*>& records);
  void apply(DialogueRecord& record) const;
};

}  // namespace hbaf
