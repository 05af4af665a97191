#pragma once

// Command configuration: flat `key = value` files with dotted keys, overridden
// by command-line flags. Unknown keys are rejected and the resolved settings
// can be echoed back as a file that reproduces the run.

#include "hbaf/kv_file.hpp"
#include "hbaf/model_config.hpp"
#include "hbaf/train.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hbaf {

class RunConfig {
 public:
  RunConfig();

  /// Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  void load(const std::filesystem::path& path);
  /// "key=value" form used by --set.
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  bool known(const std::string& key) const { return values_.contains(key); }
  static std::vector<std::string> keys();

  /// Builds the model for the given data dims; keys left at "auto" take the
  /// preset's value and are replaced by it so that echo() is fully explicit.
  ModelConfig resolve_model(int audio_dim, int text_dim, int num_classes);
  TrainConfig train_config() const;
  int sweep_seeds() const;
  std::vector<std::string> sweep_variants() const;

  /// Every key in sorted order, one `key = value` line each.
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Default output root: $HBAF_OUTPUT_ROOT, else "hbaf_runs".
std::filesystem::path default_output_root();

/// Model shape and ablations as `key = value` lines (checkpoint headers).
std::string model_config_to_text(const ModelConfig& config);
ModelConfig model_config_from_entries(const std::vector<kv::Entry>& entries);

}  // namespace hbaf
