#include "hbaf/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace hbaf {

Parameter& ParameterStore::create(std::string name, Index rows, Index cols) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter: " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return params_.back();
}

Parameter& ParameterStore::create_glorot(std::string name, Index rows, Index cols, Rng& rng) {
  Parameter& p = create(std::move(name), rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) p.value(r, c) = rng.uniform(-limit, limit);
  }
  return p;
}

Parameter& ParameterStore::create_constant(std::string name, Index rows, Index cols,
                                           double value) {
  Parameter& p = create(std::move(name), rows, cols);
  p.value.setConstant(value);
  return p;
}

std::optional<std::size_t> ParameterStore::index_of(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Parameter* ParameterStore::find(std::string_view name) {
  const auto idx = index_of(name);
  return idx ? &params_[*idx] : nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  const auto idx = index_of(name);
  return idx ? &params_[*idx] : nullptr;
}

Parameter& ParameterStore::at(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

const Parameter& ParameterStore::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

void ParameterStore::fill(double value) {
  for (auto& p : params_) p.value.setConstant(value);
}

std::optional<std::string> ParameterStore::first_non_finite(bool check_grads) const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return p.name;
    if (check_grads && p.grad.size() > 0 && !p.grad.allFinite()) return p.name + " (gradient)";
  }
  return std::nullopt;
}

Graph::Graph(ParameterStore& store, Precision precision, bool record)
    : store_(store), tape_(precision, record) {}

ad::Var Graph::param(std::string_view name) {
  const auto it = bound_.find(name);
  if (it != bound_.end()) return it->second.second;
  const auto idx = store_.index_of(name);
  if (!idx) throw std::out_of_range("unknown parameter: " + std::string(name));
  ad::Var v = tape_.variable(store_.all()[*idx].value);
  bound_.emplace(std::string(name), std::make_pair(*idx, v));
  return v;
}

void Graph::backward(ad::Var loss) {
  tape_.backward(loss);
  for (const auto& [name, entry] : bound_) {
    const Matrix& g = tape_.grad(entry.second);
    if (g.size() == 0) continue;
    Parameter& p = store_.all()[entry.first];
    if (p.grad.size() == 0) p.grad.setZero(p.value.rows(), p.value.cols());
    p.grad += g;
  }
}

ad::Var Graph::dropout(ad::Var x) {
  if (dropout_rate <= 0.0 || dropout_rng == nullptr) return x;
  const double keep = 1.0 - dropout_rate;
  Matrix m(x.rows(), x.cols());
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
  }
  return ad::mask(x, m);
}

}  // namespace hbaf
