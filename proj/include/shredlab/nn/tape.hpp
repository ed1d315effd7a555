#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every primitive applied during one forward pass together
// with its backward rule. `backward(loss)` replays the rules in exact reverse
// order and flushes leaf gradients into their Parameters. A tape is single
// use: calling backward a second time throws.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shredlab/nn/params.hpp"

namespace shredlab::nn {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

template <typename T>
class Tape {
 public:
  /// Backward rule: receives the output gradient; parents get theirs through accumulate().
  using BackwardFn = std::function<void(Tape&, const Matrix<T>&)>;

  /// With track_grad=false parameters enter as constants and nothing is recorded
  /// for backward (inference mode).
  explicit Tape(bool track_grad = true) : track_grad_(track_grad) {}

  Var constant(Matrix<T> value);
  Var input(Matrix<T> value);
  /// Leaf bound to a Parameter. Masked parameters enter as value ⊙ mask and
  /// their gradient is masked on flush.
  Var param(Parameter<T>& p);

  const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() w.r.t. v (zeros if v had no path to the loss).
  Matrix<T> grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  /// a · bᵀ
  Var matmul_nt(Var a, Var b);
  /// Elementwise sum; b may also be a 1×cols row broadcast over a's rows.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  Var add_scalar(Var a, T s);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  /// Row-wise softmax with row-max subtraction. Throws NumericalError on NaN/Inf.
  Var row_softmax(Var a);
  /// Per-row normalization to zero mean / unit variance, then ⊙gain + bias (both 1×d).
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5));
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var transpose(Var a);
  /// 1×1 sum of all entries.
  Var sum(Var a);
  /// 1×1 sum of squared entries.
  Var sum_squares(Var a);
  /// 1×1 mean squared error over entries whose column is flagged in `column_mask`.
  Var masked_mse(Var pred, const Matrix<T>& target, const std::vector<bool>& column_mask);

  /// Generic node for blocks with a hand-written backward rule.
  Var custom(std::vector<Var> parents, Matrix<T> value, BackwardFn backward);
  void accumulate(Var v, const Matrix<T>& g);

  /// Reverse sweep from a 1×1 node. Parameter gradients are added (not
  /// assigned) so several tapes can accumulate into one ParamStore.
  void backward(Var loss);

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool needs_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var push(Matrix<T> value, bool needs_grad, BackwardFn fn = {});
  bool any_needs_grad(std::initializer_list<Var> vs) const;

  std::vector<Node> nodes_;
  bool track_grad_ = true;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace shredlab::nn
