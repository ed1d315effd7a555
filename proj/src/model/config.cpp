#include "shredlab/model/config.hpp"

#include "shredlab/errors.hpp"

namespace shredlab::model {

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::lstm:
      return "lstm";
    case EncoderVariant::gru:
      return "gru";
    case EncoderVariant::transformer_vanilla:
      return "transformer_vanilla";
    case EncoderVariant::transformer_sindy:
      return "transformer_sindy";
  }
  return "?";
}

EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "lstm") return EncoderVariant::lstm;
  if (s == "gru") return EncoderVariant::gru;
  if (s == "transformer_vanilla" || s == "transformer") return EncoderVariant::transformer_vanilla;
  if (s == "transformer_sindy") return EncoderVariant::transformer_sindy;
  throw ConfigError("unknown encoder variant '" + s + "'");
}

std::string to_string(DecoderVariant v) { return v == DecoderVariant::mlp ? "mlp" : "cnn"; }

DecoderVariant decoder_variant_from_string(const std::string& s) {
  if (s == "mlp") return DecoderVariant::mlp;
  if (s == "cnn") return DecoderVariant::cnn;
  throw ConfigError("unknown decoder variant '" + s + "'");
}

void EncoderConfig::validate() const {
  if (n_layers < 1) throw ConfigError("encoder: n_layers must be >= 1");
  if (d_model < 1) throw ConfigError("encoder: d_model must be >= 1");
  if (is_transformer()) {
    if (n_heads < 1 || d_model % n_heads != 0) {
      throw ConfigError("encoder: n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                        std::to_string(d_model) + ")");
    }
  }
  if (sindy.k_steps < 1) throw ConfigError("encoder: sindy.k_steps must be >= 1");
  if (!(sindy.dt > 0.0)) throw ConfigError("encoder: sindy.dt must be > 0");
  sindy.library.validate();
}

std::string encoder_label(const EncoderConfig& c) {
  const std::string sl = c.use_sindy_loss ? "sl-" : "";
  switch (c.variant) {
    case EncoderVariant::lstm:
      return sl + "lstm";
    case EncoderVariant::gru:
      return sl + "gru";
    case EncoderVariant::transformer_vanilla:
      return sl + "t";
    case EncoderVariant::transformer_sindy:
      return c.use_sindy_loss ? "sasl-t" : "sa-t";
  }
  return "?";
}

void apply_encoder_label(const std::string& label, EncoderConfig& c) {
  if (label == "lstm" || label == "sl-lstm") {
    c.variant = EncoderVariant::lstm;
  } else if (label == "gru" || label == "sl-gru") {
    c.variant = EncoderVariant::gru;
  } else if (label == "t" || label == "sl-t") {
    c.variant = EncoderVariant::transformer_vanilla;
  } else if (label == "sa-t" || label == "sasl-t") {
    c.variant = EncoderVariant::transformer_sindy;
  } else {
    throw ConfigError("unknown encoder label '" + label + "'");
  }
  c.use_sindy_loss = label.rfind("sl-", 0) == 0 || label == "sasl-t";
}

const std::vector<std::string>& all_encoder_labels() {
  static const std::vector<std::string> labels = {"lstm", "sl-lstm", "gru", "sl-gru",
                                                  "t",    "sl-t",    "sa-t", "sasl-t"};
  return labels;
}

void DecoderConfig::validate() const {
  if (n_layers < 1) throw ConfigError("decoder: n_layers must be >= 1");
  if (variant == DecoderVariant::mlp && n_layers > 1 && hidden_width < 1) {
    throw ConfigError("decoder: hidden_width must be >= 1");
  }
  if (variant == DecoderVariant::cnn) {
    if (channels.size() != 3) throw ConfigError("decoder: cnn needs exactly 3 channel widths");
    for (int c : channels) {
      if (c < 1) throw ConfigError("decoder: cnn channel widths must be >= 1");
    }
  }
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (n_sensors < 1) throw ConfigError("model: n_sensors must be >= 1");
  if (n_state < 1) throw ConfigError("model: n_state must be >= 1");
  if (decoder.variant == DecoderVariant::cnn) {
    if (state_grid.size() != 2 && state_grid.size() != 3) {
      throw ConfigError("decoder: cnn requires a 2-D grid (or fields x 2-D grid) target, not a flat/ROM vector");
    }
    const std::size_t g1 = state_grid[state_grid.size() - 2];
    const std::size_t g2 = state_grid[state_grid.size() - 1];
    if (g1 % 4 != 0 || g2 % 4 != 0 || g1 == 0 || g2 == 0) {
      throw ConfigError("decoder: cnn grid " + std::to_string(g1) + "x" + std::to_string(g2) +
                        " is not reachable by two stride-2 upsamplings; valid grids are multiples of 4 "
                        "in both dimensions (4x4, 8x8, 4x8, ..., 180x360)");
    }
    std::size_t cells = 1;
    for (auto g : state_grid) cells *= g;
    if (cells != static_cast<std::size_t>(n_state)) throw ConfigError("decoder: grid does not match n_state");
  }
}

void to_json(nlohmann::json& j, const SindySettings& s) {
  j = {{"library", s.library}, {"dt", s.dt}, {"k_steps", s.k_steps}, {"lambda_reg", s.lambda_reg}};
}

void from_json(const nlohmann::json& j, SindySettings& s) {
  SindySettings d;
  s.library = j.value("library", d.library);
  s.dt = j.value("dt", d.dt);
  s.k_steps = j.value("k_steps", d.k_steps);
  s.lambda_reg = j.value("lambda_reg", d.lambda_reg);
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"variant", to_string(c.variant)},
       {"n_layers", c.n_layers},
       {"d_model", c.d_model},
       {"n_heads", c.n_heads},
       {"d_ff", c.d_ff},
       {"use_sindy_loss", c.use_sindy_loss},
       {"positional_encoding", c.positional_encoding ? "sinusoidal" : "none"},
       {"causal", c.causal},
       {"wrap_norm", c.wrap_norm},
       {"residual_euler", c.residual_euler},
       {"sindy", c.sindy}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d;
  if (j.contains("label")) {
    apply_encoder_label(j.at("label").get<std::string>(), c);
  } else {
    c.variant = encoder_variant_from_string(j.value("variant", to_string(d.variant)));
    c.use_sindy_loss = j.value("use_sindy_loss", d.use_sindy_loss);
  }
  c.n_layers = j.value("n_layers", d.n_layers);
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  const std::string pe = j.value("positional_encoding", std::string("sinusoidal"));
  if (pe != "sinusoidal" && pe != "none") throw ConfigError("positional_encoding must be sinusoidal or none");
  c.positional_encoding = pe == "sinusoidal";
  c.causal = j.value("causal", d.causal);
  c.wrap_norm = j.value("wrap_norm", d.wrap_norm);
  c.residual_euler = j.value("residual_euler", d.residual_euler);
  c.sindy = j.value("sindy", d.sindy);
}

void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = {{"variant", to_string(c.variant)},
       {"n_layers", c.n_layers},
       {"hidden_width", c.hidden_width},
       {"channels", c.channels}};
}

void from_json(const nlohmann::json& j, DecoderConfig& c) {
  DecoderConfig d;
  c.variant = decoder_variant_from_string(j.value("variant", to_string(d.variant)));
  c.n_layers = j.value("n_layers", d.n_layers);
  c.hidden_width = j.value("hidden_width", d.hidden_width);
  c.channels = j.value("channels", d.channels);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder},
       {"decoder", c.decoder},
       {"n_sensors", c.n_sensors},
       {"n_state", c.n_state},
       {"state_grid", c.state_grid}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.encoder = j.at("encoder").get<EncoderConfig>();
  c.decoder = j.at("decoder").get<DecoderConfig>();
  c.n_sensors = j.at("n_sensors").get<int>();
  c.n_state = j.at("n_state").get<int>();
  c.state_grid = j.value("state_grid", std::vector<std::size_t>{});
}

}  // namespace shredlab::model
