#pragma once

// Central finite-difference check of analytic gradients, tensor by tensor.

#include "hbaf/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hbaf {

struct GradCheckOptions {
  double tolerance = 1e-4;
  /// Probe step is step * max(1, |theta|).
  double step = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  /// entries whose true gradient is ~0 from dividing rounding noise by ~0.
  double floor = 1e-6;
  /// When nonempty, this tensor's first analytic entry is shifted by
  /// corrupt_amount before comparison.
  std::string corrupt;
  double corrupt_amount = 1e-3;
};

struct TensorCheck {
  std::string name;
  Index entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Index worst_entry = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  bool pass = true;
  double seconds = 0.0;

  std::vector<std::string> failing() const;
};

using LossFunction = std::function<ad::Var(Graph&)>;

/// Every tensor of `params` is probed; parameter values are restored on return.
GradCheckReport grad_check(ParameterStore& params, const LossFunction& loss,
                           const GradCheckOptions& options);

struct HbafCheckSetup {
  int width = 8;
  int dialogues = 2;
  int utterances = 3;
  int num_classes = 4;
  int audio_dim = 6;
  int text_dim = 6;
  std::uint64_t seed = 1;
  Ablations ablations;
  LossConfig loss;
};

/// L_total of the reduced full model on a tiny synthetic batch.
GradCheckReport grad_check_hbaf(const HbafCheckSetup& setup, const GradCheckOptions& options);

}  // namespace hbaf
