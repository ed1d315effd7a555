#include <cmath>

#include "shredlab/errors.hpp"
#include "shredlab/nn/params.hpp"

namespace shredlab::nn {

template <typename T>
ParamStore<T>::ParamStore(std::uint64_t init_seed) : init_seed_(init_seed), rng_(init_seed) {}

template <typename T>
Parameter<T>& ParamStore<T>::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                 Init init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (rows <= 0 || cols <= 0) throw ConfigError("parameter '" + name + "' has an empty shape");
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->grad = Matrix<T>::Zero(rows, cols);
  switch (init) {
    case Init::zeros:
      p->value = Matrix<T>::Zero(rows, cols);
      break;
    case Init::ones:
      p->value = Matrix<T>::Ones(rows, cols);
      break;
    case Init::uniform_fan_in: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
      p->value.resize(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) p->value(i, j) = static_cast<T>(rng_.uniform(-bound, bound));
      }
      break;
    }
  }
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
Parameter<T>& ParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename T>
const Parameter<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

template <typename T>
std::size_t ParamStore<T>::n_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename T>
typename ParamStore<T>::Snapshot ParamStore<T>::snapshot() const {
  Snapshot s;
  for (const auto& p : params_) {
    s.values.push_back(p->value);
    s.masks.push_back(p->mask);
  }
  return s;
}

template <typename T>
void ParamStore<T>::restore(const Snapshot& s) {
  if (s.values.size() != params_.size()) throw ConfigError("snapshot does not match parameter store");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i]->value = s.values[i];
    params_[i]->mask = s.masks[i];
  }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace shredlab::nn
