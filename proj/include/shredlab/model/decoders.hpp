#pragma once

// Spatial decoders X: latent vector -> full state (or ROM coefficients).
// Batched rows: z is [B x d_model], outputs are [B x n_state]. CNN tensors
// are stored row-per-sample in channel-major order (c, y, x).

#include <optional>
#include <vector>

#include "shredlab/model/config.hpp"
#include "shredlab/nn/params.hpp"
#include "shredlab/nn/tape.hpp"

namespace shredlab::model {

using nn::Matrix;
using nn::ParamStore;
using nn::Tape;
using nn::Var;

struct Dense {
  Var w, b;
};

/// Hidden layers ReLU, last layer linear.
template <typename T>
Var mlp_decode(Tape<T>& tape, Var z, const std::vector<Dense>& layers);

/// Transposed convolution, kernel 4, stride 2, padding 1: [Cin x h x w] -> [Cout x 2h x 2w].
/// w is [Cin x Cout*16] (column co*16 + ky*4 + kx), b is [1 x Cout].
template <typename T>
Var conv_transpose2d(Tape<T>& tape, Var x, Var w, Var b, int c_in, int h, int w_in, int c_out);

/// Pointwise channel mix: w is [Cin x Cout], b is [1 x Cout].
template <typename T>
Var conv1x1(Tape<T>& tape, Var x, Var w, Var b, int c_in, int h, int w_in, int c_out);

struct CnnGeometry {
  int fields = 1;
  int g1 = 0;
  int g2 = 0;
};

CnnGeometry cnn_geometry(const ModelConfig& config);

struct CnnVars {
  Dense lift, conv2, conv1, out;
};

/// lift -> σ(ConvT₂) -> σ(ConvT₁) -> 1x1 conv to the field count.
template <typename T>
Var cnn_decode(Tape<T>& tape, Var z, const CnnVars& p, const ModelConfig& config);

template <typename T>
void add_decoder_params(ParamStore<T>& params, const ModelConfig& config);

struct DecoderVars {
  std::vector<Dense> mlp;
  std::optional<CnnVars> cnn;
};

template <typename T>
DecoderVars bind_decoder(Tape<T>& tape, ParamStore<T>& params, const ModelConfig& config);

template <typename T>
Var decode(Tape<T>& tape, Var z, const DecoderVars& vars, const ModelConfig& config);

}  // namespace shredlab::model
