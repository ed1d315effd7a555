#pragma once

// Central finite-difference check of reverse-mode gradients.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shredlab/nn/params.hpp"
#include "shredlab/nn/tape.hpp"

namespace shredlab::nn {

struct GradCheckEntry {
  std::string name;  // parameter name, or "input[i]"
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;
  bool passed = false;

  double max_error() const;
  std::string summary() const;
};

/// A block maps tape inputs to an output; it pulls its own parameters from
/// the ParamStore it closes over via tape.param().
template <typename T>
using Block = std::function<Var(Tape<T>&, std::span<const Var>)>;

struct GradCheckOptions {
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
  bool check_inputs = true;
};

/// The scalar probed is sum(block(inputs) ⊙ R) with a seeded random R. The
/// error for one tensor is max|analytic - numeric| / max(max|numeric|, 1e-6).
template <typename T>
GradCheckReport grad_check(const Block<T>& block, ParamStore<T>& params,
                           const std::vector<Matrix<T>>& inputs, const GradCheckOptions& options = {});

}  // namespace shredlab::nn
