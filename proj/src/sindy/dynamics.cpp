#include <cmath>

#include "shredlab/errors.hpp"
#include "shredlab/sindy.hpp"

namespace shredlab::sindy {

namespace {

void check_rollout_args(Eigen::Index k, Eigen::Index xi_rows, Eigen::Index xi_cols,
                        const LibrarySpec& spec, int k_steps) {
  if (k_steps < 1) throw ConfigError("euler_rollout: k_steps must be >= 1");
  const auto ell = static_cast<Eigen::Index>(library_width(spec, static_cast<std::size_t>(k)));
  if (xi_rows != ell || xi_cols != k) {
    throw ConfigError("euler_rollout: xi is [" + std::to_string(xi_rows) + "x" + std::to_string(xi_cols) +
                      "], library expects [" + std::to_string(ell) + "x" + std::to_string(k) + "]");
  }
}

}  // namespace

template <typename T>
Matrix<T> euler_rollout(const Matrix<T>& z, const Matrix<T>& xi, const LibrarySpec& spec, T h_step,
                        int k_steps) {
  check_rollout_args(z.cols(), xi.rows(), xi.cols(), spec, k_steps);
  Matrix<T> state = z;
  for (int i = 1; i <= k_steps; ++i) {
    state += h_step * (eval_library(state, spec) * xi);
    if (!state.allFinite()) {
      throw NumericalError("euler_rollout: non-finite state at sub-step " + std::to_string(i) + " of " +
                           std::to_string(k_steps));
    }
  }
  return state;
}

template <typename T>
Var euler_rollout(Tape<T>& tape, Var z, Var xi, const LibrarySpec& spec, T h_step, int k_steps) {
  check_rollout_args(tape.value(z).cols(), tape.value(xi).rows(), tape.value(xi).cols(), spec, k_steps);
  Var state = z;
  for (int i = 1; i <= k_steps; ++i) {
    Var rate = tape.matmul(eval_library(tape, state, spec), xi);
    state = tape.add(state, tape.scale(rate, h_step));
    if (!tape.value(state).allFinite()) {
      throw NumericalError("euler_rollout: non-finite state at sub-step " + std::to_string(i) + " of " +
                           std::to_string(k_steps));
    }
  }
  return state;
}

template <typename T>
Var sindy_pair_loss(Tape<T>& tape, Var prev, Var next, Var xi, const LibrarySpec& spec, T h_step,
                    int k_steps, T lambda_reg) {
  const Eigen::Index n_pairs = tape.value(prev).rows();
  if (n_pairs < 1) throw ConfigError("sindy_loss: need at least one transition");
  Var predicted = euler_rollout(tape, prev, xi, spec, h_step, k_steps);
  Var residual = tape.scale(tape.sum_squares(tape.sub(next, predicted)), T(1) / static_cast<T>(n_pairs));
  if (lambda_reg == T(0)) return residual;
  return tape.add(residual, tape.scale(tape.sum_squares(xi), lambda_reg));
}

template <typename T>
Var sindy_loss(Tape<T>& tape, Var trajectory, Var xi, const LibrarySpec& spec, T h_step, int k_steps,
               T lambda_reg) {
  const Eigen::Index n = tape.value(trajectory).rows();
  if (n < 2) throw ConfigError("sindy_loss: trajectory needs T >= 2 rows, got " + std::to_string(n));
  Var prev = tape.slice_rows(trajectory, 0, n - 1);
  Var next = tape.slice_rows(trajectory, 1, n - 1);
  return sindy_pair_loss(tape, prev, next, xi, spec, h_step, k_steps, lambda_reg);
}

template <typename T>
T sindy_loss_value(const Matrix<T>& trajectory, const Matrix<T>& xi, const LibrarySpec& spec, T h_step,
                   int k_steps, T lambda_reg) {
  Tape<T> tape(false);
  Var loss = sindy_loss(tape, tape.constant(trajectory), tape.constant(xi), spec, h_step, k_steps, lambda_reg);
  return tape.value(loss)(0, 0);
}

template <typename T>
void prune_in_place(Matrix<T>& values, Matrix<T>& mask, T threshold) {
  if (threshold < T(0)) throw ConfigError("prune: threshold must be >= 0");
  if (values.rows() != mask.rows() || values.cols() != mask.cols()) {
    throw ConfigError("prune: mask shape does not match coefficients");
  }
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    T& v = values.data()[i];
    T& m = mask.data()[i];
    if (m == T(0) || std::abs(v) < threshold) {
      m = T(0);
      v = T(0);
    }
  }
}

SindyCoefficients SindyCoefficients::dense(Matrix<double> xi, double h_step, int k_steps) {
  SindyCoefficients c;
  c.mask = Matrix<double>::Ones(xi.rows(), xi.cols());
  c.xi = std::move(xi);
  c.h_step = h_step;
  c.k_steps = k_steps;
  c.validate();
  return c;
}

void SindyCoefficients::validate() const {
  if (!(h_step > 0.0)) throw ConfigError("SindyCoefficients: h_step must be > 0");
  if (k_steps < 1) throw ConfigError("SindyCoefficients: k_steps must be >= 1");
  if (xi.rows() != mask.rows() || xi.cols() != mask.cols()) {
    throw ConfigError("SindyCoefficients: mask shape does not match xi");
  }
}

SindyCoefficients prune(SindyCoefficients coeffs, double threshold) {
  coeffs.validate();
  prune_in_place(coeffs.xi, coeffs.mask, threshold);
  return coeffs;
}

#define SHREDLAB_INSTANTIATE(T)                                                                       \
  template Matrix<T> euler_rollout(const Matrix<T>&, const Matrix<T>&, const LibrarySpec&, T, int); \
  template Var euler_rollout(Tape<T>&, Var, Var, const LibrarySpec&, T, int);                       \
  template Var sindy_pair_loss(Tape<T>&, Var, Var, Var, const LibrarySpec&, T, int, T);             \
  template Var sindy_loss(Tape<T>&, Var, Var, const LibrarySpec&, T, int, T);                       \
  template T sindy_loss_value(const Matrix<T>&, const Matrix<T>&, const LibrarySpec&, T, int, T);   \
  template void prune_in_place(Matrix<T>&, Matrix<T>&, T);

SHREDLAB_INSTANTIATE(float)
SHREDLAB_INSTANTIATE(double)
#undef SHREDLAB_INSTANTIATE

}  // namespace shredlab::sindy
