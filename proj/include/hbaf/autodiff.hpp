#pragma once

// A small reverse-mode differentiation tape over dense row-major matrices.
//
// Every model component is written against this tape, so the same code path
// produces forward values, analytic gradients, and the finite-difference
// probes used by the gradient checker.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace hbaf {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

enum class Precision { kFloat64, kFloat32 };

namespace ad {

class Tape;

/// Handle to a tape node. Only valid while its tape is alive.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  /// With record_gradients=false no backward closures are kept; useful for
  /// evaluation and finite-difference probes.
  explicit Tape(Precision precision = Precision::kFloat64, bool record_gradients = true);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Appends an op result. `backward` receives the output gradient and must
  /// call accumulate() for each differentiable input.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  /// Gradient after backward(); zero-sized if nothing flowed into the node.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate(Var v, const Eigen::MatrixBase<Expr>& g) {
    accumulate(v, Matrix(g));
  }

  /// Reverse sweep from a 1x1 node.
  void backward(Var scalar);

  std::size_t size() const { return nodes_.size(); }
  Precision precision() const { return precision_; }
  bool recording() const { return record_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  void round(Matrix& m) const;

  std::vector<Node> nodes_;
  Precision precision_;
  bool record_;
};

// Linear algebra.
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// 1 - a
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
/// Multiplies by a fixed mask (dropout).
Var mask(Var a, const Matrix& m);

// Row broadcasting: `row` is 1 x cols(a).
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);

// Reductions.
Var sum(Var a);
Var mean(Var a);
/// rows x 1, log(sum_j exp(a_ij)).
Var logsumexp_rows(Var a);

// Row-wise normalizations.
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// (x - mean) / sqrt(var + eps) per row, population variance, no affine.
Var layer_norm_rows(Var a, double eps);
/// x / ||x|| per row. Throws NumericError on a zero-norm row.
Var normalize_rows(Var a);

// Structure.
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var concat_rows(std::span<const Var> parts);
Var concat_rows(std::initializer_list<Var> parts);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
/// n x 1 column of a(r_k, c_k).
Var gather(Var a, std::span<const std::pair<Index, Index>> coords);

}  // namespace ad
}  // namespace hbaf
