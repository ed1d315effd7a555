#pragma once

// Small composite building blocks on top of the Tape primitives.

#include <optional>

#include "shredlab/nn/tape.hpp"

namespace shredlab::nn {

/// y = x W (+ b), with b broadcast over rows.
template <typename T>
Var affine(Tape<T>& tape, Var x, Var w, std::optional<Var> b = std::nullopt) {
  Var y = tape.matmul(x, w);
  return b ? tape.add(y, *b) : y;
}

/// Fixed sinusoidal position table [n x d]: sin on even columns, cos on odd.
template <typename T>
Matrix<T> sinusoidal_positions(Eigen::Index n, Eigen::Index d) {
  Matrix<T> pe(n, d);
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

}  // namespace shredlab::nn
