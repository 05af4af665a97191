#pragma once

#include <string>
#include <vector>

namespace hbaf {

enum class Modality { kAudio, kText };

/// "a" or "l", as used in parameter names.
inline const char* modality_tag(Modality m) { return m == Modality::kAudio ? "a" : "l"; }

/// Component removals used by the ablation study.
struct Ablations {
  bool no_acn = false;          // H_a := learned linear map of the raw audio vectors
  bool no_fusion = false;       // h_a := H_a, h_l := H_l, fusion module skipped
  bool no_contrastive = false;  // inter-modal loss carries zero weight
  bool no_gate = false;         // H_star := (self + cross) / 2
  bool no_residual = false;     // h := H_star
  bool no_attention = false;    // attention outputs replaced by their value sources

  /// Names of the flags that are set, in canonical order.
  std::vector<std::string> active() const;
  /// Sets a flag by name; returns false for an unknown name.
  bool set(const std::string& name, bool value = true);
  static const std::vector<std::string>& names();
  bool operator==(const Ablations&) const = default;
};

/// Widths and depths of every HBAF component.
struct ModelConfig {
  int audio_dim = 512;
  int text_dim = 1024;
  int d_model = 512;  // H_a, H_l, h_a, h_l width; h_m is 2 * d_model
  int conv_kernel = 3;
  int conv_filters = 64;
  int lstm_layers = 2;
  int encoder_layers = 3;
  int encoder_heads = 8;
  int encoder_ff = 1024;
  int attn_hidden = 256;  // soft-attention scoring width in the text context network
  int fusion_ff = 1024;
  int num_classes = 7;
  bool separate_cross_projections = false;
  double dropout = 0.0;
  Ablations ablations;

  int lstm_units() const { return d_model / 2; }

  /// Same architecture, every width scaled down to `width`.
  static ModelConfig reduced(int width, int audio_dim, int text_dim, int num_classes);

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

}  // namespace hbaf
