#pragma once

// u = X(T({y_i})): encoder + decoder bound to one ParamStore.

#include <cstdint>
#include <span>
#include <vector>

#include "shredlab/model/config.hpp"
#include "shredlab/model/decoders.hpp"
#include "shredlab/model/encoders.hpp"
#include "shredlab/sindy.hpp"

namespace shredlab::model {

template <typename T>
class ShredModel {
 public:
  ShredModel(ModelConfig config, std::uint64_t init_seed);

  struct Forward {
    Var prediction;  // [B x n_state]
    std::vector<LatentSystem> systems;
    std::vector<Var> coefficients;  // every SINDy Ξ bound on the tape
  };

  Forward forward(Tape<T>& tape, std::span<const Matrix<T>> windows);
  /// Inference without gradient tracking, batched internally.
  Matrix<T> predict(std::span<const Matrix<T>> windows, std::size_t batch_size = 256);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  /// Prunable coefficient matrices (SINDy-Attention heads and/or latent-loss Ξ).
  std::vector<std::string> sindy_params() const { return sindy_coefficient_names(config_.encoder); }

  /// Symbolic form of every SINDy-Attention head (empty for other encoders).
  sindy::SymbolicSystem symbolic_system(int precision = 3) const;

 private:
  ModelConfig config_;
  ParamStore<T> params_;
};

/// Masked-entry MSE + λ_sindy (Σ_systems pair loss + λ_reg Σ ||Ξ||²).
/// The Ξ penalty covers all SINDy coefficient matrices of the model, so
/// SINDy-Attention heads are ℓ2-regularized even without the latent loss.
template <typename T>
Var compose_loss(Tape<T>& tape, const ShredModel<T>& model, const typename ShredModel<T>::Forward& fwd,
                 const Matrix<T>& target, const std::vector<bool>& column_mask, T lambda_sindy);

extern template class ShredModel<float>;
extern template class ShredModel<double>;

}  // namespace shredlab::model
