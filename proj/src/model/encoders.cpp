#include "shredlab/model/encoders.hpp"

#include <cmath>

#include "shredlab/errors.hpp"
#include "shredlab/nn/layers.hpp"

namespace shredlab::model {

template <typename T>
Var gru_step(Tape<T>& tape, Var x, Var h, const RecurrentVars& p) {
  const Eigen::Index hidden = tape.value(h).cols();
  if (tape.value(p.w_x).cols() != 3 * hidden || tape.value(p.w_h).cols() != 3 * hidden) {
    throw ConfigError("gru_step: gate weights must have 3 x hidden columns");
  }
  Var gx = nn::affine(tape, x, p.w_x, p.b_x);
  Var gh = nn::affine(tape, h, p.w_h, p.b_h);
  Var r = tape.sigmoid(tape.add(tape.slice_cols(gx, 0, hidden), tape.slice_cols(gh, 0, hidden)));
  Var z = tape.sigmoid(tape.add(tape.slice_cols(gx, hidden, hidden), tape.slice_cols(gh, hidden, hidden)));
  Var n = tape.tanh(tape.add(tape.slice_cols(gx, 2 * hidden, hidden),
                             tape.mul(r, tape.slice_cols(gh, 2 * hidden, hidden))));
  return tape.add(n, tape.mul(z, tape.sub(h, n)));
}

template <typename T>
std::pair<Var, Var> lstm_step(Tape<T>& tape, Var x, Var h, Var c, const RecurrentVars& p) {
  const Eigen::Index hidden = tape.value(h).cols();
  if (tape.value(p.w_x).cols() != 4 * hidden || tape.value(p.w_h).cols() != 4 * hidden) {
    throw ConfigError("lstm_step: gate weights must have 4 x hidden columns");
  }
  Var g = tape.add(nn::affine(tape, x, p.w_x, p.b_x), nn::affine(tape, h, p.w_h, p.b_h));
  Var i = tape.sigmoid(tape.slice_cols(g, 0, hidden));
  Var f = tape.sigmoid(tape.slice_cols(g, hidden, hidden));
  Var cand = tape.tanh(tape.slice_cols(g, 2 * hidden, hidden));
  Var o = tape.sigmoid(tape.slice_cols(g, 3 * hidden, hidden));
  Var c_next = tape.add(tape.mul(f, c), tape.mul(i, cand));
  Var h_next = tape.mul(o, tape.tanh(c_next));
  return {h_next, c_next};
}

template <typename T>
std::vector<Var> attention_heads(Tape<T>& tape, Var x, const AttentionVars& p, int n_heads, bool causal,
                                 AttentionTrace* trace) {
  const Eigen::Index d = tape.value(p.w_q).cols();
  if (n_heads < 1 || d % n_heads != 0) throw ConfigError("attention: n_heads must divide d_model");
  const Eigen::Index k = d / n_heads;
  const Eigen::Index n = tape.value(x).rows();
  Var q = tape.matmul(x, p.w_q);
  Var kk = tape.matmul(x, p.w_k);
  Var v = tape.matmul(x, p.w_v);

  std::optional<Var> mask;
  if (causal && n > 1) {
    Matrix<T> m = Matrix<T>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = T(-1e9);
    }
    mask = tape.constant(std::move(m));
  }

  const T inv_sqrt_k = T(1) / std::sqrt(static_cast<T>(k));
  std::vector<Var> heads;
  for (int h = 0; h < n_heads; ++h) {
    Var qh = tape.slice_cols(q, h * k, k);
    Var kh = tape.slice_cols(kk, h * k, k);
    Var vh = tape.slice_cols(v, h * k, k);
    Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_k);
    if (mask) scores = tape.add(scores, *mask);
    Var weights = tape.row_softmax(scores);
    Var out = tape.matmul(weights, vh);
    if (trace) {
      trace->weights.push_back(weights);
      trace->heads.push_back(out);
    }
    heads.push_back(out);
  }
  return heads;
}

template <typename T>
Var mhsa(Tape<T>& tape, Var x, const AttentionVars& p, int n_heads, bool causal, AttentionTrace* trace) {
  if (!p.w_o) throw ConfigError("mhsa: missing output projection");
  const auto heads = attention_heads(tape, x, p, n_heads, causal, trace);
  return tape.matmul(tape.concat_cols(heads), *p.w_o);
}

template <typename T>
Var transformer_layer(Tape<T>& tape, Var x, const TransformerVars& p, int n_heads, bool causal,
                      AttentionTrace* trace) {
  Var x1 = tape.layer_norm(tape.add(x, mhsa(tape, x, p.attn, n_heads, causal, trace)), p.ln1_g, p.ln1_b);
  Var ff = tape.matmul(tape.relu(tape.matmul(x1, p.w_1)), p.w_2);
  return tape.layer_norm(tape.add(x1, ff), p.ln2_g, p.ln2_b);
}

template <typename T>
Var sindy_attention_layer(Tape<T>& tape, Var x, const SindyAttentionVars& p, int n_heads,
                          const SindyAttentionOptions& options, AttentionTrace* trace) {
  if (static_cast<int>(p.xi.size()) != n_heads) throw ConfigError("sindy_attention: one xi per head required");
  const auto heads = attention_heads(tape, x, p.attn, n_heads, options.causal, trace);
  const auto k = static_cast<std::size_t>(tape.value(heads.front()).cols());
  const auto ell = static_cast<Eigen::Index>(sindy::library_width(options.library, k));

  std::vector<Var> s;
  for (int h = 0; h < n_heads; ++h) {
    const auto& xi = tape.value(p.xi[static_cast<std::size_t>(h)]);
    if (xi.rows() != ell || xi.cols() != static_cast<Eigen::Index>(k)) {
      throw ConfigError("sindy_attention: library output width " + std::to_string(ell) + " (k=" +
                        std::to_string(k) + ") does not match xi [" + std::to_string(xi.rows()) + "x" +
                        std::to_string(xi.cols()) + "]");
    }
    Var theta = sindy::eval_library(tape, heads[static_cast<std::size_t>(h)], options.library);
    Var sh = tape.matmul(theta, p.xi[static_cast<std::size_t>(h)]);
    if (options.residual_euler) {
      sh = tape.add(heads[static_cast<std::size_t>(h)], tape.scale(sh, static_cast<T>(options.h_step)));
    }
    s.push_back(sh);
  }
  Var ff = tape.matmul(tape.matmul(tape.concat_cols(s), p.w_ff1), p.w_ff2);
  if (options.wrap_norm) {
    if (!p.ln_g || !p.ln_b) throw ConfigError("sindy_attention: wrap_norm needs LayerNorm parameters");
    return tape.layer_norm(tape.add(x, ff), *p.ln_g, *p.ln_b);
  }
  return ff;
}

// ---------------------------------------------------------------------------

namespace {

std::string layer_prefix(int l) { return "encoder.layer" + std::to_string(l) + "."; }

template <typename T>
void add_masked(ParamStore<T>& params, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  auto& p = params.add(name, rows, cols, nn::Init::uniform_fan_in);
  p.mask = Matrix<T>::Ones(rows, cols);
}

}  // namespace

std::string head_xi_name(int layer, int head) { return layer_prefix(layer) + "xi" + std::to_string(head); }

std::vector<std::string> sindy_coefficient_names(const EncoderConfig& config) {
  std::vector<std::string> names;
  if (config.variant == EncoderVariant::transformer_sindy) {
    for (int l = 0; l < config.n_layers; ++l) {
      for (int h = 0; h < config.n_heads; ++h) names.push_back(head_xi_name(l, h));
    }
  } else if (config.use_sindy_loss) {
    names.emplace_back(kLatentXiName);
  }
  return names;
}

template <typename T>
void add_encoder_params(ParamStore<T>& params, const EncoderConfig& config, int n_sensors) {
  using nn::Init;
  config.validate();
  const Eigen::Index d = config.d_model;
  const Eigen::Index m = config.ff_width();
  params.add("encoder.lift.w", n_sensors, d, Init::uniform_fan_in);
  params.add("encoder.lift.b", 1, d, Init::zeros);

  for (int l = 0; l < config.n_layers; ++l) {
    const std::string pre = layer_prefix(l);
    switch (config.variant) {
      case EncoderVariant::gru:
      case EncoderVariant::lstm: {
        const Eigen::Index gates = config.variant == EncoderVariant::gru ? 3 : 4;
        params.add(pre + "w_x", d, gates * d, Init::uniform_fan_in);
        params.add(pre + "w_h", d, gates * d, Init::uniform_fan_in);
        params.add(pre + "b_x", 1, gates * d, Init::zeros);
        params.add(pre + "b_h", 1, gates * d, Init::zeros);
        break;
      }
      case EncoderVariant::transformer_vanilla:
        params.add(pre + "w_q", d, d, Init::uniform_fan_in);
        params.add(pre + "w_k", d, d, Init::uniform_fan_in);
        params.add(pre + "w_v", d, d, Init::uniform_fan_in);
        params.add(pre + "w_o", d, d, Init::uniform_fan_in);
        params.add(pre + "ln1.g", 1, d, Init::ones);
        params.add(pre + "ln1.b", 1, d, Init::zeros);
        params.add(pre + "w_1", d, m, Init::uniform_fan_in);
        params.add(pre + "w_2", m, d, Init::uniform_fan_in);
        params.add(pre + "ln2.g", 1, d, Init::ones);
        params.add(pre + "ln2.b", 1, d, Init::zeros);
        break;
      case EncoderVariant::transformer_sindy: {
        params.add(pre + "w_q", d, d, Init::uniform_fan_in);
        params.add(pre + "w_k", d, d, Init::uniform_fan_in);
        params.add(pre + "w_v", d, d, Init::uniform_fan_in);
        const auto k = static_cast<std::size_t>(config.head_width());
        const auto ell = static_cast<Eigen::Index>(sindy::library_width(config.sindy.library, k));
        for (int h = 0; h < config.n_heads; ++h) {
          add_masked(params, head_xi_name(l, h), ell, static_cast<Eigen::Index>(k));
        }
        params.add(pre + "w_ff1", d, m, Init::uniform_fan_in);
        params.add(pre + "w_ff2", m, d, Init::uniform_fan_in);
        if (config.wrap_norm) {
          params.add(pre + "ln.g", 1, d, Init::ones);
          params.add(pre + "ln.b", 1, d, Init::zeros);
        }
        break;
      }
    }
  }
  if (config.use_sindy_loss && config.variant != EncoderVariant::transformer_sindy) {
    const auto ell = static_cast<Eigen::Index>(sindy::library_width(config.sindy.library, static_cast<std::size_t>(d)));
    add_masked(params, kLatentXiName, ell, d);
  }
}

template <typename T>
EncoderVars bind_encoder(Tape<T>& tape, ParamStore<T>& params, const EncoderConfig& config) {
  EncoderVars v;
  v.lift_w = tape.param(params.get("encoder.lift.w"));
  v.lift_b = tape.param(params.get("encoder.lift.b"));
  auto p = [&](const std::string& name) { return tape.param(params.get(name)); };
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string pre = layer_prefix(l);
    switch (config.variant) {
      case EncoderVariant::gru:
      case EncoderVariant::lstm:
        v.recurrent.push_back({p(pre + "w_x"), p(pre + "w_h"), p(pre + "b_x"), p(pre + "b_h")});
        break;
      case EncoderVariant::transformer_vanilla: {
        TransformerVars t;
        t.attn = {p(pre + "w_q"), p(pre + "w_k"), p(pre + "w_v"), p(pre + "w_o")};
        t.ln1_g = p(pre + "ln1.g");
        t.ln1_b = p(pre + "ln1.b");
        t.w_1 = p(pre + "w_1");
        t.w_2 = p(pre + "w_2");
        t.ln2_g = p(pre + "ln2.g");
        t.ln2_b = p(pre + "ln2.b");
        v.transformer.push_back(t);
        break;
      }
      case EncoderVariant::transformer_sindy: {
        SindyAttentionVars s;
        s.attn = {p(pre + "w_q"), p(pre + "w_k"), p(pre + "w_v"), std::nullopt};
        for (int h = 0; h < config.n_heads; ++h) s.xi.push_back(p(head_xi_name(l, h)));
        s.w_ff1 = p(pre + "w_ff1");
        s.w_ff2 = p(pre + "w_ff2");
        if (config.wrap_norm) {
          s.ln_g = p(pre + "ln.g");
          s.ln_b = p(pre + "ln.b");
        }
        v.sindy_attention.push_back(s);
        break;
      }
    }
  }
  if (params.contains(kLatentXiName)) v.latent_xi = p(kLatentXiName);
  return v;
}

namespace {

// Stacked recurrence over lifted steps (each [B x d]); returns the last layer's states.
template <typename T>
std::vector<Var> run_recurrent(Tape<T>& tape, const EncoderVars& vars, const EncoderConfig& config,
                               std::vector<Var> steps) {
  const Eigen::Index batch = tape.value(steps.front()).rows();
  for (const auto& layer : vars.recurrent) {
    Var h = tape.constant(Matrix<T>::Zero(batch, config.d_model));
    Var c = h;
    for (auto& x : steps) {
      if (config.variant == EncoderVariant::gru) {
        h = gru_step(tape, x, h, layer);
      } else {
        std::tie(h, c) = lstm_step(tape, x, h, c, layer);
      }
      x = h;
    }
  }
  return steps;
}

template <typename T>
Var run_transformer(Tape<T>& tape, const EncoderVars& vars, const EncoderConfig& config, Var x,
                    std::vector<AttentionTrace>* traces) {
  const Eigen::Index n = tape.value(x).rows();
  if (config.positional_encoding) {
    x = tape.add(x, tape.constant(nn::sinusoidal_positions<T>(n, config.d_model)));
  }
  SindyAttentionOptions opts{config.sindy.library, config.causal, config.wrap_norm, config.residual_euler,
                             config.sindy.h_step()};
  for (int l = 0; l < config.n_layers; ++l) {
    AttentionTrace trace;
    AttentionTrace* tp = traces ? &trace : nullptr;
    if (config.variant == EncoderVariant::transformer_vanilla) {
      x = transformer_layer(tape, x, vars.transformer[static_cast<std::size_t>(l)], config.n_heads, config.causal, tp);
    } else {
      x = sindy_attention_layer(tape, x, vars.sindy_attention[static_cast<std::size_t>(l)], config.n_heads, opts, tp);
    }
    if (traces) traces->push_back(std::move(trace));
  }
  return x;
}

}  // namespace

template <typename T>
Var encode(Tape<T>& tape, const EncoderVars& vars, const EncoderConfig& config, Var window,
           std::vector<AttentionTrace>* traces) {
  const Eigen::Index n = tape.value(window).rows();
  if (n < 1) throw ConfigError("encode: empty window");
  Var lifted = nn::affine(tape, window, vars.lift_w, vars.lift_b);
  if (config.is_transformer()) return run_transformer(tape, vars, config, lifted, traces);
  std::vector<Var> steps;
  for (Eigen::Index t = 0; t < n; ++t) steps.push_back(tape.slice_rows(lifted, t, 1));
  return tape.concat_rows(run_recurrent(tape, vars, config, std::move(steps)));
}

template <typename T>
EncodeResult encode_batch(Tape<T>& tape, const EncoderVars& vars, const EncoderConfig& config,
                          std::span<const Matrix<T>> windows) {
  if (windows.empty()) throw ConfigError("encode_batch: empty batch");
  const Eigen::Index n = windows.front().rows();
  const auto batch = static_cast<Eigen::Index>(windows.size());
  EncodeResult out;

  if (!config.is_transformer()) {
    std::vector<Var> steps;
    for (Eigen::Index t = 0; t < n; ++t) {
      Matrix<T> xt(batch, windows.front().cols());
      for (Eigen::Index b = 0; b < batch; ++b) xt.row(b) = windows[static_cast<std::size_t>(b)].row(t);
      steps.push_back(nn::affine(tape, tape.constant(std::move(xt)), vars.lift_w, vars.lift_b));
    }
    const auto hidden = run_recurrent(tape, vars, config, std::move(steps));
    out.last = hidden.back();
    if (config.use_sindy_loss && n >= 2) {
      std::span<const Var> hs(hidden);
      out.systems.push_back({-1, -1, tape.concat_rows(hs.first(hidden.size() - 1)),
                             tape.concat_rows(hs.subspan(1)), *vars.latent_xi});
    }
    return out;
  }

  const bool sa = config.variant == EncoderVariant::transformer_sindy;
  std::vector<Var> lasts, prev, next;
  // [layer][head] -> per-sample trajectories
  std::vector<std::vector<std::vector<Var>>> head_prev, head_next;
  if (sa) {
    head_prev.assign(static_cast<std::size_t>(config.n_layers), std::vector<std::vector<Var>>(static_cast<std::size_t>(config.n_heads)));
    head_next = head_prev;
  }
  for (const auto& w : windows) {
    std::vector<AttentionTrace> traces;
    Var seq = encode(tape, vars, config, tape.constant(w), sa ? &traces : nullptr);
    lasts.push_back(tape.slice_rows(seq, n - 1, 1));
    if (!config.use_sindy_loss || n < 2) continue;
    if (sa) {
      for (std::size_t l = 0; l < traces.size(); ++l) {
        for (std::size_t h = 0; h < traces[l].heads.size(); ++h) {
          head_prev[l][h].push_back(tape.slice_rows(traces[l].heads[h], 0, n - 1));
          head_next[l][h].push_back(tape.slice_rows(traces[l].heads[h], 1, n - 1));
        }
      }
    } else {
      prev.push_back(tape.slice_rows(seq, 0, n - 1));
      next.push_back(tape.slice_rows(seq, 1, n - 1));
    }
  }
  out.last = tape.concat_rows(lasts);
  if (config.use_sindy_loss && n >= 2) {
    if (sa) {
      for (int l = 0; l < config.n_layers; ++l) {
        for (int h = 0; h < config.n_heads; ++h) {
          const auto L = static_cast<std::size_t>(l);
          const auto H = static_cast<std::size_t>(h);
          out.systems.push_back({l, h, tape.concat_rows(head_prev[L][H]), tape.concat_rows(head_next[L][H]),
                                 vars.sindy_attention[L].xi[H]});
        }
      }
    } else {
      out.systems.push_back({-1, -1, tape.concat_rows(prev), tape.concat_rows(next), *vars.latent_xi});
    }
  }
  return out;
}

#define SHREDLAB_INSTANTIATE(T)                                                                          \
  template Var gru_step(Tape<T>&, Var, Var, const RecurrentVars&);                                      \
  template std::pair<Var, Var> lstm_step(Tape<T>&, Var, Var, Var, const RecurrentVars&);                \
  template std::vector<Var> attention_heads(Tape<T>&, Var, const AttentionVars&, int, bool, AttentionTrace*); \
  template Var mhsa(Tape<T>&, Var, const AttentionVars&, int, bool, AttentionTrace*);                   \
  template Var transformer_layer(Tape<T>&, Var, const TransformerVars&, int, bool, AttentionTrace*);    \
  template Var sindy_attention_layer(Tape<T>&, Var, const SindyAttentionVars&, int,                     \
                                     const SindyAttentionOptions&, AttentionTrace*);                    \
  template void add_encoder_params(ParamStore<T>&, const EncoderConfig&, int);                          \
  template EncoderVars bind_encoder(Tape<T>&, ParamStore<T>&, const EncoderConfig&);                    \
  template Var encode(Tape<T>&, const EncoderVars&, const EncoderConfig&, Var, std::vector<AttentionTrace>*); \
  template EncodeResult encode_batch(Tape<T>&, const EncoderVars&, const EncoderConfig&, std::span<const Matrix<T>>);

SHREDLAB_INSTANTIATE(float)
SHREDLAB_INSTANTIATE(double)
#undef SHREDLAB_INSTANTIATE

}  // namespace shredlab::model
