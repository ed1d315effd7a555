#include <cmath>

#include "shredlab/errors.hpp"
#include "shredlab/nn/tape.hpp"

namespace shredlab::nn {

namespace {

std::string shape(Eigen::Index r, Eigen::Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <typename M>
std::string shape(const M& m) {
  return shape(m.rows(), m.cols());
}

}  // namespace

template <typename T>
Var Tape<T>::push(Matrix<T> value, bool needs_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && track_grad_;
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
bool Tape<T>::any_needs_grad(std::initializer_list<Var> vs) const {
  for (Var v : vs) {
    if (nodes_.at(v.id).needs_grad) return true;
  }
  return false;
}

template <typename T>
Var Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Tape<T>::input(Matrix<T> value) {
  return push(std::move(value), true);
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p) {
  Matrix<T> v = p.mask ? Matrix<T>(p.value.cwiseProduct(*p.mask)) : p.value;
  Var out = push(std::move(v), true);
  if (track_grad_) nodes_[out.id].param = &p;
  return out;
}

template <typename T>
Matrix<T> Tape<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0) return Matrix<T>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var v, const Matrix<T>& g) {
  Node& n = nodes_.at(v.id);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

template <typename T>
Var Tape<T>::custom(std::vector<Var> parents, Matrix<T> value, BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_.at(p.id).needs_grad;
  return push(std::move(value), needs, std::move(backward));
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.rows()) {
    throw ConfigError("matmul: shape mismatch " + shape(A) + " x " + shape(B));
  }
  return push(A * B, any_needs_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

template <typename T>
Var Tape<T>::matmul_nt(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.cols()) {
    throw ConfigError("matmul_nt: shape mismatch " + shape(A) + " x " + shape(B) + "^T");
  }
  return push(A * B.transpose(), any_needs_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b));
    if (t.needs_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() == B.rows() && A.cols() == B.cols()) {
    return push(A + B, any_needs_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }
  if (B.rows() == 1 && B.cols() == A.cols()) {
    Matrix<T> out = A.rowwise() + B.row(0);
    return push(std::move(out), any_needs_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
    });
  }
  throw ConfigError("add: shape mismatch " + shape(A) + " + " + shape(B));
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw ConfigError("sub: shape mismatch " + shape(A) + " - " + shape(B));
  }
  return push(A - B, any_needs_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -g);
  });
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw ConfigError("mul: shape mismatch " + shape(A) + " * " + shape(B));
  }
  return push(A.cwiseProduct(B), any_needs_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
  return push(value(a) * s, any_needs_grad({a}),
              [a, s](Tape& t, const Matrix<T>& g) { t.accumulate(a, g * s); });
}

template <typename T>
Var Tape<T>::add_scalar(Var a, T s) {
  Matrix<T> out = value(a).array() + s;
  return push(std::move(out), any_needs_grad({a}),
              [a](Tape& t, const Matrix<T>& g) { t.accumulate(a, g); });
}

template <typename T>
Var Tape<T>::relu(Var a) {
  Matrix<T> out = value(a).cwiseMax(T(0));
  return push(std::move(out), any_needs_grad({a}), [a](Tape& t, const Matrix<T>& g) {
    Matrix<T> d = (t.value(a).array() > T(0)).select(g, T(0));
    t.accumulate(a, d);
  });
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  Matrix<T> out = (T(1) + (-value(a).array()).exp()).inverse().matrix();
  Var v = push(std::move(out), any_needs_grad({a}));
  if (needs_grad(v)) {
    nodes_[v.id].backward = [a, v](Tape& t, const Matrix<T>& g) {
      const auto& y = t.value(v).array();
      t.accumulate(a, (g.array() * y * (T(1) - y)).matrix());
    };
  }
  return v;
}

template <typename T>
Var Tape<T>::tanh(Var a) {
  Matrix<T> out = value(a).array().tanh().matrix();
  Var v = push(std::move(out), any_needs_grad({a}));
  if (needs_grad(v)) {
    nodes_[v.id].backward = [a, v](Tape& t, const Matrix<T>& g) {
      const auto& y = t.value(v).array();
      t.accumulate(a, (g.array() * (T(1) - y * y)).matrix());
    };
  }
  return v;
}

template <typename T>
Var Tape<T>::row_softmax(Var a) {
  const auto& X = value(a);
  if (!X.allFinite()) throw NumericalError("row_softmax: non-finite input");
  Matrix<T> y(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const T m = X.row(i).maxCoeff();
    y.row(i) = (X.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  Var v = push(std::move(y), any_needs_grad({a}));
  if (needs_grad(v)) {
    nodes_[v.id].backward = [a, v](Tape& t, const Matrix<T>& g) {
      const auto& Y = t.value(v);
      Matrix<T> d(Y.rows(), Y.cols());
      for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        const T dot = g.row(i).dot(Y.row(i));
        d.row(i) = (Y.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
      t.accumulate(a, d);
    };
  }
  return v;
}

template <typename T>
Var Tape<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
  const auto& X = value(x);
  const auto& G = value(gain);
  const auto& B = value(bias);
  if (G.rows() != 1 || B.rows() != 1 || G.cols() != X.cols() || B.cols() != X.cols()) {
    throw ConfigError("layer_norm: gain/bias must be [1x" + std::to_string(X.cols()) + "], got " +
                      shape(G) + " and " + shape(B));
  }
  const Eigen::Index d = X.cols();
  Matrix<T> xhat(X.rows(), d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const T mu = X.row(i).mean();
    const auto centered = (X.row(i).array() - mu).matrix();
    const T var = centered.squaredNorm() / static_cast<T>(d);
    inv_std(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix<T> y = (xhat.array().rowwise() * G.row(0).array()).matrix();
  y.rowwise() += B.row(0);

  return push(std::move(y), any_needs_grad({x, gain, bias}),
              [x, gain, bias, xhat, inv_std, d](Tape& t, const Matrix<T>& g) {
                const auto& Gv = t.value(gain);
                if (t.needs_grad(gain)) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
                if (t.needs_grad(x)) {
                  Matrix<T> dx(g.rows(), d);
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const Eigen::Matrix<T, 1, Eigen::Dynamic> dxhat =
                        g.row(i).cwiseProduct(Gv.row(0));
                    const T mean_d = dxhat.mean();
                    const T mean_dx = dxhat.dot(xhat.row(i)) / static_cast<T>(d);
                    dx.row(i) = ((dxhat.array() - mean_d - xhat.row(i).array() * mean_dx) * inv_std(i))
                                    .matrix();
                  }
                  t.accumulate(x, dx);
                }
              });
}

template <typename T>
Var Tape<T>::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const auto& A = value(a);
  if (start < 0 || count < 0 || start + count > A.rows()) {
    throw ConfigError("slice_rows: range out of bounds for " + shape(A));
  }
  Matrix<T> out = A.middleRows(start, count);
  const Eigen::Index rows = A.rows();
  const Eigen::Index cols = A.cols();
  return push(std::move(out), any_needs_grad({a}),
              [a, start, count, rows, cols](Tape& t, const Matrix<T>& g) {
                Matrix<T> full = Matrix<T>::Zero(rows, cols);
                full.middleRows(start, count) = g;
                t.accumulate(a, full);
              });
}

template <typename T>
Var Tape<T>::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  const auto& A = value(a);
  if (start < 0 || count < 0 || start + count > A.cols()) {
    throw ConfigError("slice_cols: range out of bounds for " + shape(A));
  }
  Matrix<T> out = A.middleCols(start, count);
  const Eigen::Index rows = A.rows();
  const Eigen::Index cols = A.cols();
  return push(std::move(out), any_needs_grad({a}),
              [a, start, count, rows, cols](Tape& t, const Matrix<T>& g) {
                Matrix<T> full = Matrix<T>::Zero(rows, cols);
                full.middleCols(start, count) = g;
                t.accumulate(a, full);
              });
}

template <typename T>
Var Tape<T>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_rows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool needs = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ConfigError("concat_rows: column mismatch");
    rows += value(p).rows();
    needs = needs || needs_grad(p);
  }
  Matrix<T> out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), needs, [ps](Tape& t, const Matrix<T>& g) {
    Eigen::Index r0 = 0;
    for (Var p : ps) {
      const Eigen::Index n = t.value(p).rows();
      if (t.needs_grad(p)) t.accumulate(p, g.middleRows(r0, n));
      r0 += n;
    }
  });
}

template <typename T>
Var Tape<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ConfigError("concat_cols: row mismatch");
    cols += value(p).cols();
    needs = needs || needs_grad(p);
  }
  Matrix<T> out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), needs, [ps](Tape& t, const Matrix<T>& g) {
    Eigen::Index c0 = 0;
    for (Var p : ps) {
      const Eigen::Index n = t.value(p).cols();
      if (t.needs_grad(p)) t.accumulate(p, g.middleCols(c0, n));
      c0 += n;
    }
  });
}

template <typename T>
Var Tape<T>::transpose(Var a) {
  Matrix<T> out = value(a).transpose();
  return push(std::move(out), any_needs_grad({a}),
              [a](Tape& t, const Matrix<T>& g) { t.accumulate(a, g.transpose()); });
}

template <typename T>
Var Tape<T>::sum(Var a) {
  Matrix<T> out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), any_needs_grad({a}), [a](Tape& t, const Matrix<T>& g) {
    const auto& A = t.value(a);
    t.accumulate(a, Matrix<T>::Constant(A.rows(), A.cols(), g(0, 0)));
  });
}

template <typename T>
Var Tape<T>::sum_squares(Var a) {
  Matrix<T> out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  return push(std::move(out), any_needs_grad({a}), [a](Tape& t, const Matrix<T>& g) {
    t.accumulate(a, t.value(a) * (T(2) * g(0, 0)));
  });
}

template <typename T>
Var Tape<T>::masked_mse(Var pred, const Matrix<T>& target, const std::vector<bool>& column_mask) {
  const auto& P = value(pred);
  if (P.rows() != target.rows() || P.cols() != target.cols()) {
    throw ConfigError("masked_mse: prediction " + shape(P) + " vs target " + shape(target));
  }
  if (static_cast<Eigen::Index>(column_mask.size()) != P.cols()) {
    throw ConfigError("masked_mse: mask length does not match state width");
  }
  Matrix<T> m(1, P.cols());
  Eigen::Index n_valid = 0;
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    m(0, j) = column_mask[static_cast<std::size_t>(j)] ? T(1) : T(0);
    n_valid += column_mask[static_cast<std::size_t>(j)] ? 1 : 0;
  }
  if (n_valid == 0 || P.rows() == 0) throw ConfigError("masked_mse: no valid entries");
  const T denom = static_cast<T>(n_valid * P.rows());
  Matrix<T> diff = ((P - target).array().rowwise() * m.row(0).array()).matrix();
  Matrix<T> out(1, 1);
  out(0, 0) = diff.squaredNorm() / denom;
  return push(std::move(out), any_needs_grad({pred}),
              [pred, diff, denom](Tape& t, const Matrix<T>& g) {
                t.accumulate(pred, diff * (T(2) * g(0, 0) / denom));
              });
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (consumed_) throw ConfigError("Tape::backward called twice on the same forward pass");
  const Node& l = nodes_.at(loss.id);
  if (l.value.rows() != 1 || l.value.cols() != 1) {
    throw ConfigError("Tape::backward: loss must be 1x1, got " + shape(l.value));
  }
  consumed_ = true;
  if (!l.needs_grad) return;
  nodes_[loss.id].grad = Matrix<T>::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      Matrix<T> g = n.grad;
      if (n.param->mask) g = g.cwiseProduct(*n.param->mask);
      n.param->grad += g;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace shredlab::nn
