#include "hbaf/autodiff.hpp"

#include "hbaf/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hbaf::ad {

const Matrix& Var::value() const { return tape->value(*this); }

Tape::Tape(Precision precision, bool record_gradients)
    : precision_(precision), record_(record_gradients) {
  nodes_.reserve(1024);
}

void Tape::round(Matrix& m) const {
  if (precision_ == Precision::kFloat32) {
    m = m.cast<float>().cast<double>();
  }
}

Var Tape::constant(Matrix value) {
  round(value);
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::variable(Matrix value) {
  round(value);
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, record_});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) {
      if (in.tape != this) throw std::logic_error("tape: input belongs to another tape");
      needs = needs || requires_grad(in);
    }
  }
  round(value);
  Node node{std::move(value), Matrix(), nullptr, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[static_cast<std::size_t>(v.id)];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var scalar) {
  if (scalar.rows() != 1 || scalar.cols() != 1) {
    throw std::logic_error("tape: backward() needs a 1x1 output");
  }
  if (!requires_grad(scalar)) return;
  nodes_[static_cast<std::size_t>(scalar.id)].grad = Matrix::Ones(1, 1);
  for (int id = scalar.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backward || node.grad.size() == 0) continue;
    // Copy: the closure may accumulate into earlier nodes, which never
    // reallocates this node, but keeps the read side obviously stable.
    const Matrix g = node.grad;
    node.backward(*this, g);
  }
}

namespace {

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void check_row(Var a, Var row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument(std::string(op) + ": row vector must be 1x" +
                                std::to_string(a.cols()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g * tp.value(b).transpose());
    tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g * tp.value(b));
    tp.accumulate(b, g.transpose() * tp.value(a));
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().transpose(), {a},
                [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(a.value() * s, {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  return t.push((a.value().array() + s).matrix(), {a},
                [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var one_minus(Var a) {
  Tape& t = *a.tape;
  return t.push((1.0 - a.value().array()).matrix(), {a},
                [a](Tape& tp, const Matrix& g) { tp.accumulate(a, -g); });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  const int out_id = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, out_id](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(Var{&tp, out_id});
    tp.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().array().tanh().matrix();
  const int out_id = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, out_id](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(Var{&tp, out_id});
    tp.accumulate(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().cwiseMax(0.0), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, (x.array() > 0.0).select(g, 0.0).matrix());
  });
}

Var exp(Var a) {
  Tape& t = *a.tape;
  const int out_id = static_cast<int>(t.size());
  return t.push(a.value().array().exp().matrix(), {a}, [a, out_id](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct(tp.value(Var{&tp, out_id})));
  });
}

Var log(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().array().log().matrix(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseQuotient(tp.value(a)));
  });
}

Var mask(Var a, const Matrix& m) {
  if (m.rows() != a.rows() || m.cols() != a.cols()) throw std::invalid_argument("mask: shape");
  Tape& t = *a.tape;
  return t.push(a.value().cwiseProduct(m), {a},
                [a, m](Tape& tp, const Matrix& g) { tp.accumulate(a, g.cwiseProduct(m)); });
}

Var add_row(Var a, Var row) {
  check_row(a, row, "add_row");
  Tape& t = *a.tape;
  Matrix y = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(y), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  check_row(a, row, "mul_row");
  Tape& t = *a.tape;
  Matrix y = a.value().array().rowwise() * row.value().row(0).array();
  return t.push(std::move(y), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (g.array().rowwise() * tp.value(row).row(0).array()).matrix());
    tp.accumulate(row, g.cwiseProduct(tp.value(a)).colwise().sum());
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return t.push(std::move(y), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(tp.value(a).rows(), tp.value(a).cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty");
  return scale(sum(a), 1.0 / n);
}

namespace {

Matrix softmax_of(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

Eigen::VectorXd logsumexp_of(const Matrix& x) {
  Eigen::VectorXd out(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out(r) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  return out;
}

}  // namespace

Var logsumexp_rows(Var a) {
  Tape& t = *a.tape;
  Matrix y = logsumexp_of(a.value());
  return t.push(std::move(y), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix p = softmax_of(tp.value(a));
    tp.accumulate(a, (p.array().colwise() * g.col(0).array()).matrix());
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const int out_id = static_cast<int>(t.size());
  return t.push(softmax_of(a.value()), {a}, [a, out_id](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(Var{&tp, out_id});
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    tp.accumulate(a, (y.array() * (g.array().colwise() - dot.array())).matrix());
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  Matrix y = x.colwise() - logsumexp_of(x);
  const int out_id = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, out_id](Tape& tp, const Matrix& g) {
    const Matrix p = tp.value(Var{&tp, out_id}).array().exp().matrix();
    const Eigen::VectorXd gs = g.rowwise().sum();
    tp.accumulate(a, (g - (p.array().colwise() * gs.array()).matrix()));
  });
}

Var layer_norm_rows(Var a, double eps) {
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  const Index n = x.cols();
  Matrix y(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    y.row(r) = ((x.row(r).array() - mu) * inv_std(r)).matrix();
  }
  const int out_id = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, out_id, inv_std](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(Var{&tp, out_id});
    Matrix dx(g.rows(), g.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      const double mg = g.row(r).mean();
      const double mgy = g.row(r).dot(y.row(r)) / static_cast<double>(g.cols());
      dx.row(r) = ((g.row(r).array() - mg - y.row(r).array() * mgy) * inv_std(r)).matrix();
    }
    tp.accumulate(a, dx);
  });
}

Var normalize_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  for (Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) {
      throw NumericError("normalize_rows: row " + std::to_string(r) +
                         " has zero norm (collapsed representation)");
    }
  }
  Matrix y = x.array().colwise() / norms.array();
  const int out_id = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, out_id, norms](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(Var{&tp, out_id});
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = g - (y.array().colwise() * dot.array()).matrix();
    dx = dx.array().colwise() / norms.array();
    tp.accumulate(a, dx);
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = *parts.front().tape;
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    y.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(y), parts, [inputs, offsets](Tape& tp, const Matrix& g) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      tp.accumulate(inputs[i], g.middleCols(offsets[i], inputs[i].cols()));
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = *parts.front().tape;
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    y.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(y), parts, [inputs, offsets](Tape& tp, const Matrix& g) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      tp.accumulate(inputs[i], g.middleRows(offsets[i], inputs[i].rows()));
    }
  });
}

Var slice_rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside matrix");
  }
  Tape& t = *a.tape;
  return t.push(a.value().middleRows(start, count), {a},
                [a, start, count](Tape& tp, const Matrix& g) {
                  Matrix full = Matrix::Zero(tp.value(a).rows(), tp.value(a).cols());
                  full.middleRows(start, count) = g;
                  tp.accumulate(a, full);
                });
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range outside matrix");
  }
  Tape& t = *a.tape;
  return t.push(a.value().middleCols(start, count), {a},
                [a, start, count](Tape& tp, const Matrix& g) {
                  Matrix full = Matrix::Zero(tp.value(a).rows(), tp.value(a).cols());
                  full.middleCols(start, count) = g;
                  tp.accumulate(a, full);
                });
}

Var gather(Var a, std::span<const std::pair<Index, Index>> coords) {
  Tape& t = *a.tape;
  Matrix y(static_cast<Index>(coords.size()), 1);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const auto [r, c] = coords[k];
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
      throw std::out_of_range("gather: coordinate outside matrix");
    }
    y(static_cast<Index>(k), 0) = a.value()(r, c);
  }
  std::vector<std::pair<Index, Index>> where(coords.begin(), coords.end());
  return t.push(std::move(y), {a}, [a, where](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(tp.value(a).rows(), tp.value(a).cols());
    for (std::size_t k = 0; k < where.size(); ++k) {
      full(where[k].first, where[k].second) += g(static_cast<Index>(k), 0);
    }
    tp.accumulate(a, full);
  });
}

}  // namespace ad
