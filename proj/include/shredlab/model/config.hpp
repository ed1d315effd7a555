#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "shredlab/sindy.hpp"

namespace shredlab::model {

enum class EncoderVariant { lstm, gru, transformer_vanilla, transformer_sindy };
enum class DecoderVariant { mlp, cnn };

std::string to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(const std::string& s);
std::string to_string(DecoderVariant v);
DecoderVariant decoder_variant_from_string(const std::string& s);

/// Euler/SINDy numerics shared by the latent-loss and SINDy-Attention paths.
struct SindySettings {
  sindy::LibrarySpec library;
  double dt = 1.0;  // normalized sample interval Δt
  int k_steps = 5;
  double lambda_reg = 1e-3;

  double h_step() const { return dt / k_steps; }
};

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::gru;
  int n_layers = 1;
  int d_model = 100;
  int n_heads = 2;
  int d_ff = 0;  // 0 -> d_model
  bool use_sindy_loss = false;
  bool positional_encoding = true;  // sinusoidal; transformer variants only
  bool causal = false;
  bool wrap_norm = false;       // SINDy-Attention: z = LayerNorm(x + FF(S))
  bool residual_euler = false;  // SINDy-Attention: S = T + h·Θ(T)Ξ
  SindySettings sindy;

  bool is_transformer() const {
    return variant == EncoderVariant::transformer_vanilla || variant == EncoderVariant::transformer_sindy;
  }
  int ff_width() const { return d_ff > 0 ? d_ff : d_model; }
  int head_width() const { return d_model / n_heads; }
  void validate() const;
};

/// Short labels used in sweep tables: lstm, sl-lstm, gru, sl-gru, t, sl-t, sa-t, sasl-t.
std::string encoder_label(const EncoderConfig& c);
void apply_encoder_label(const std::string& label, EncoderConfig& c);
const std::vector<std::string>& all_encoder_labels();

struct DecoderConfig {
  DecoderVariant variant = DecoderVariant::mlp;
  int n_layers = 1;
  int hidden_width = 64;
  std::vector<int> channels = {16, 8, 8};  // cnn: coarse, after first and second upsampling
  void validate() const;
};

/// Full architecture: encoder/decoder plus the data-dependent sizes.
struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  int n_sensors = 0;
  int n_state = 0;
  std::vector<std::size_t> state_grid;  // cnn: [g1, g2] or [fields, g1, g2]

  void validate() const;
};

void to_json(nlohmann::json& j, const SindySettings& s);
void from_json(const nlohmann::json& j, SindySettings& s);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const DecoderConfig& c);
void from_json(const nlohmann::json& j, DecoderConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace shredlab::model
