#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "shredlab/nn/params.hpp"
#include "shredlab/rng.hpp"

namespace testing {

using shredlab::nn::Matrix;

template <typename T = double>
Matrix<T> random_matrix(Eigen::Index rows, Eigen::Index cols, shredlab::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return m;
}

inline double max_abs_diff(const Matrix<double>& a, const Matrix<double>& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("shredlab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
