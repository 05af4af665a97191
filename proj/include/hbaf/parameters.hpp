#pragma once

#include "hbaf/autodiff.hpp"
#include "hbaf/random.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hbaf {

/// One learnable tensor with a stable dotted name and a gradient slot.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Every learnable tensor of a model, in registration order.
class ParameterStore {
 public:
  Parameter& create(std::string name, Index rows, Index cols);
  /// Creates with Glorot-uniform values.
  Parameter& create_glorot(std::string name, Index rows, Index cols, Rng& rng);
  Parameter& create_constant(std::string name, Index rows, Index cols, double value);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void fill(double value);
  /// Name of the first tensor with a non-finite value (or gradient).
  std::optional<std::string> first_non_finite(bool check_grads) const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Binds a ParameterStore onto a fresh tape for one forward/backward pass.
///
/// Parameters are lifted to tape variables lazily and cached, so a tensor
/// reused across dialogues in a batch is a single tape leaf and its gradient
/// accumulates naturally.
class Graph {
 public:
  Graph(ParameterStore& store, Precision precision = Precision::kFloat64, bool record = true);

  ad::Tape& tape() { return tape_; }
  ParameterStore& store() { return store_; }

  ad::Var param(std::string_view name);
  ad::Var constant(Matrix value) { return tape_.constant(std::move(value)); }
  ad::Var zeros(Index rows, Index cols) { return tape_.constant(Matrix::Zero(rows, cols)); }

  /// Reverse sweep, then adds leaf gradients into the store's grad slots.
  void backward(ad::Var loss);

  /// When set, every attention probability matrix is appended here.
  std::vector<Matrix>* attention_log = nullptr;
  /// When set, every gate activation matrix is appended here.
  std::vector<Matrix>* gate_log = nullptr;

  /// Dropout is active only when rate > 0 and an rng is attached.
  double dropout_rate = 0.0;
  Rng* dropout_rng = nullptr;

  void log_attention(ad::Var probs) {
    if (attention_log != nullptr) attention_log->push_back(probs.value());
  }
  void log_gate(ad::Var gate) {
    if (gate_log != nullptr) gate_log->push_back(gate.value());
  }

  /// Inverted dropout; identity when inactive.
  ad::Var dropout(ad::Var x);

 private:
  ParameterStore& store_;
  ad::Tape tape_;
  std::map<std::string, std::pair<std::size_t, ad::Var>, std::less<>> bound_;
};

}  // namespace hbaf
