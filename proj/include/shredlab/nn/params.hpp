#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shredlab/rng.hpp"

namespace shredlab::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Init { uniform_fan_in, zeros, ones };

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  /// Prune mask (1 = active, 0 = pruned); only SINDy coefficient matrices carry one.
  std::optional<Matrix<T>> mask;

  void apply_mask() {
    if (mask) {
      value = value.cwiseProduct(*mask);
      grad = grad.cwiseProduct(*mask);
    }
  }
};

/// Named parameters with same-shaped gradient slots, in insertion order.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t init_seed = 0);

  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  /// Create a parameter. uniform_fan_in draws U(-1/sqrt(rows), 1/sqrt(rows)).
  Parameter<T>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init);

  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t n_scalars() const;
  std::uint64_t init_seed() const { return init_seed_; }

  /// Value + mask snapshot for best-checkpoint bookkeeping.
  struct Snapshot {
    std::vector<Matrix<T>> values;
    std::vector<std::optional<Matrix<T>>> masks;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t init_seed_;
  Rng rng_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace shredlab::nn
