#include "hbaf/model_config.hpp"

#include "hbaf/errors.hpp"

#include <algorithm>

namespace hbaf {

const std::vector<std::string>& Ablations::names() {
  static const std::vector<std::string> kNames = {"no_acn",      "no_fusion",   "no_contrastive",
                                                  "no_gate",     "no_residual", "no_attention"};
  return kNames;
}

std::vector<std::string> Ablations::active() const {
  std::vector<std::string> out;
  const bool flags[] = {no_acn, no_fusion, no_contrastive, no_gate, no_residual, no_attention};
  for (std::size_t i = 0; i < names().size(); ++i) {
    if (flags[i]) out.push_back(names()[i]);
  }
  return out;
}

bool Ablations::set(const std::string& name, bool value) {
  if (name == "no_acn") no_acn = value;
  else if (name == "no_fusion") no_fusion = value;
  else if (name == "no_contrastive") no_contrastive = value;
  else if (name == "no_gate") no_gate = value;
  else if (name == "no_residual") no_residual = value;
  else if (name == "no_attention") no_attention = value;
  else return false;
  return true;
}

ModelConfig ModelConfig::reduced(int width, int audio_dim, int text_dim, int num_classes) {
  ModelConfig c;
  c.audio_dim = audio_dim;
  c.text_dim = text_dim;
  c.d_model = width;
  c.conv_filters = std::max(2, width / 2);
  c.encoder_heads = 2;
  c.encoder_ff = 2 * width;
  c.attn_hidden = std::max(2, width / 2);
  c.fusion_ff = 2 * width;
  c.num_classes = num_classes;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("model config: ") + what);
  };
  require(audio_dim > 0 && text_dim > 0, "input dims must be positive");
  require(d_model >= 2 && d_model % 2 == 0, "d_model must be even and >= 2");
  require(conv_kernel >= 1 && conv_kernel % 2 == 1, "conv_kernel must be odd");
  require(conv_filters >= 1, "conv_filters must be positive");
  require(lstm_layers >= 1 && encoder_layers >= 0, "layer counts");
  require(encoder_heads >= 1 && d_model % encoder_heads == 0,
          "encoder hidden width must be divisible by the head count");
  require(2 * lstm_units() == d_model, "2 x lstm units must equal the encoder width");
  require(encoder_ff >= 1 && fusion_ff >= 1 && attn_hidden >= 1, "inner widths");
  require(num_classes >= 2, "need at least two classes");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
}

}  // namespace hbaf
