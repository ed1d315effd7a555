#pragma once

// Temporal encoders T(t): stacked LSTM/GRU, vanilla transformer and
// SINDy-Attention transformer. Each maps a [k_lag x n_sensors] window to a
// latent sequence whose last row feeds the decoder.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shredlab/model/config.hpp"
#include "shredlab/nn/params.hpp"
#include "shredlab/nn/tape.hpp"

namespace shredlab::model {

using nn::Matrix;
using nn::ParamStore;
using nn::Tape;
using nn::Var;

/// Gate weights stacked as column blocks: GRU [r | z | n], LSTM [i | f | g | o].
struct RecurrentVars {
  Var w_x, w_h, b_x, b_h;
};

/// h' = (1 - z) ⊙ n + z ⊙ h with n = tanh(x W_n + b_n + r ⊙ (h U_n + c_n)).
template <typename T>
Var gru_step(Tape<T>& tape, Var x, Var h, const RecurrentVars& p);

/// c' = f ⊙ c + i ⊙ g, h' = o ⊙ tanh(c'). Returns {h', c'}.
template <typename T>
std::pair<Var, Var> lstm_step(Tape<T>& tape, Var x, Var h, Var c, const RecurrentVars& p);

/// Per-head attention weights and outputs, recorded for inspection and SINDy systems.
struct AttentionTrace {
  std::vector<Var> weights;  // [n x n] per head
  std::vector<Var> heads;    // [n x k] per head (T^(h))
};

struct AttentionVars {
  Var w_q, w_k, w_v;  // [d x d]; head h uses columns [h k, (h+1) k)
  std::optional<Var> w_o;
};

/// Per-head softmax(Q Kᵀ / sqrt(k)) V; returns the H head outputs.
template <typename T>
std::vector<Var> attention_heads(Tape<T>& tape, Var x, const AttentionVars& p, int n_heads, bool causal,
                                 AttentionTrace* trace = nullptr);

/// Concat(heads) W_o.
template <typename T>
Var mhsa(Tape<T>& tape, Var x, const AttentionVars& p, int n_heads, bool causal,
         AttentionTrace* trace = nullptr);

struct TransformerVars {
  AttentionVars attn;
  Var ln1_g, ln1_b, w_1, w_2, ln2_g, ln2_b;
};

/// x̃ = LN(x + MHSA(x)); z = LN(x̃ + ReLU(x̃ W_1) W_2).
template <typename T>
Var transformer_layer(Tape<T>& tape, Var x, const TransformerVars& p, int n_heads, bool causal,
                      AttentionTrace* trace = nullptr);

struct SindyAttentionVars {
  AttentionVars attn;    // w_o unused
  std::vector<Var> xi;   // [ℓ x k] per head
  Var w_ff1, w_ff2;
  std::optional<Var> ln_g, ln_b;  // wrap_norm only
};

struct SindyAttentionOptions {
  sindy::LibrarySpec library;
  bool causal = false;
  bool wrap_norm = false;
  bool residual_euler = false;
  double h_step = 0.2;
};

/// S^(h) = Θ(T^(h)) Ξ^(h), S = concat_h S^(h), z = (S W_ff1) W_ff2.
template <typename T>
Var sindy_attention_layer(Tape<T>& tape, Var x, const SindyAttentionVars& p, int n_heads,
                          const SindyAttentionOptions& options, AttentionTrace* trace = nullptr);

// Parameter-store bound encoder

template <typename T>
void add_encoder_params(ParamStore<T>& params, const EncoderConfig& config, int n_sensors);

struct EncoderVars {
  Var lift_w, lift_b;
  std::vector<RecurrentVars> recurrent;
  std::vector<TransformerVars> transformer;
  std::vector<SindyAttentionVars> sindy_attention;
  std::optional<Var> latent_xi;  // SINDy-loss coefficients on the encoder output
};

template <typename T>
EncoderVars bind_encoder(Tape<T>& tape, ParamStore<T>& params, const EncoderConfig& config);

/// Names of every SINDy coefficient matrix the encoder owns (prunable).
std::vector<std::string> sindy_coefficient_names(const EncoderConfig& config);
std::string head_xi_name(int layer, int head);
inline constexpr const char* kLatentXiName = "encoder.sindy.xi";

/// One latent ODE system whose rows pair consecutive states (prev[i] -> next[i]).
struct LatentSystem {
  int layer = -1;  // -1: encoder-output system
  int head = -1;
  Var prev, next, xi;
};

struct EncodeResult {
  Var last;  // [B x d_model]
  std::vector<LatentSystem> systems;
};

/// Single window [k_lag x n_sensors] -> latent sequence [k_lag x d_model].
template <typename T>
Var encode(Tape<T>& tape, const EncoderVars& vars, const EncoderConfig& config, Var window,
           std::vector<AttentionTrace>* traces = nullptr);

/// Batch of windows; SINDy systems are collected only when config.use_sindy_loss.
template <typename T>
EncodeResult encode_batch(Tape<T>& tape, const EncoderVars& vars, const EncoderConfig& config,
                          std::span<const Matrix<T>> windows);

}  // namespace shredlab::model
