#include "shredlab/model/decoders.hpp"

#include "shredlab/errors.hpp"
#include "shredlab/nn/layers.hpp"

namespace shredlab::model {

template <typename T>
Var mlp_decode(Tape<T>& tape, Var z, const std::vector<Dense>& layers) {
  if (layers.empty()) throw ConfigError("mlp_decode: no layers");
  Var x = z;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (tape.value(x).cols() != tape.value(layers[i].w).rows()) {
      throw ConfigError("mlp_decode: layer " + std::to_string(i) + " expects " +
                        std::to_string(tape.value(layers[i].w).rows()) + " inputs, got " +
                        std::to_string(tape.value(x).cols()));
    }
    x = nn::affine(tape, x, layers[i].w, layers[i].b);
    if (i + 1 < layers.size()) x = tape.relu(x);
  }
  return x;
}

template <typename T>
Var conv_transpose2d(Tape<T>& tape, Var x, Var w, Var b, int c_in, int h, int w_in, int c_out) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& wv = tape.value(w);
  const Matrix<T>& bv = tape.value(b);
  if (xv.cols() != static_cast<Eigen::Index>(c_in) * h * w_in || wv.rows() != c_in ||
      wv.cols() != static_cast<Eigen::Index>(c_out) * 16 || bv.cols() != c_out) {
    throw ConfigError("conv_transpose2d: shape mismatch");
  }
  const int ho = 2 * h, wo = 2 * w_in;
  const Eigen::Index batch = xv.rows();
  const auto in_at = [=](int c, int y, int xx) { return (static_cast<Eigen::Index>(c) * h + y) * w_in + xx; };
  const auto out_at = [=](int c, int y, int xx) { return (static_cast<Eigen::Index>(c) * ho + y) * wo + xx; };

  // Scatter form: input pixel (iy, ix) feeds output (2 iy - 1 + ky, 2 ix - 1 + kx).
  auto for_each_tap = [=](auto&& fn) {
    for (int ci = 0; ci < c_in; ++ci)
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < w_in; ++ix)
          for (int ky = 0; ky < 4; ++ky) {
            const int oy = 2 * iy - 1 + ky;
            if (oy < 0 || oy >= ho) continue;
            for (int kx = 0; kx < 4; ++kx) {
              const int ox = 2 * ix - 1 + kx;
              if (ox < 0 || ox >= wo) continue;
              for (int co = 0; co < c_out; ++co) fn(ci, iy, ix, co, oy, ox, co * 16 + ky * 4 + kx);
            }
          }
  };

  Matrix<T> out(batch, static_cast<Eigen::Index>(c_out) * ho * wo);
  for (int co = 0; co < c_out; ++co) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ho) * wo; ++i) {
      out.col(static_cast<Eigen::Index>(co) * ho * wo + i).setConstant(bv(0, co));
    }
  }
  for_each_tap([&](int ci, int iy, int ix, int co, int oy, int ox, Eigen::Index wc) {
    out.col(out_at(co, oy, ox)) += wv(ci, wc) * xv.col(in_at(ci, iy, ix));
  });

  return tape.custom({x, w, b}, std::move(out), [=](Tape<T>& t, const Matrix<T>& g) {
    const Matrix<T>& xv2 = t.value(x);
    const Matrix<T>& wv2 = t.value(w);
    Matrix<T> gx = Matrix<T>::Zero(xv2.rows(), xv2.cols());
    Matrix<T> gw = Matrix<T>::Zero(wv2.rows(), wv2.cols());
    Matrix<T> gb = Matrix<T>::Zero(1, c_out);
    for_each_tap([&](int ci, int iy, int ix, int co, int oy, int ox, Eigen::Index wc) {
      const Eigen::Index oc = out_at(co, oy, ox);
      const Eigen::Index ic = in_at(ci, iy, ix);
      gx.col(ic) += wv2(ci, wc) * g.col(oc);
      gw(ci, wc) += g.col(oc).dot(xv2.col(ic));
    });
    for (int co = 0; co < c_out; ++co) {
      gb(0, co) = g.middleCols(static_cast<Eigen::Index>(co) * ho * wo, static_cast<Eigen::Index>(ho) * wo).sum();
    }
    t.accumulate(x, gx);
    t.accumulate(w, gw);
    t.accumulate(b, gb);
  });
}

template <typename T>
Var conv1x1(Tape<T>& tape, Var x, Var w, Var b, int c_in, int h, int w_in, int c_out) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& wv = tape.value(w);
  const Eigen::Index px = static_cast<Eigen::Index>(h) * w_in;
  if (xv.cols() != c_in * px || wv.rows() != c_in || wv.cols() != c_out || tape.value(b).cols() != c_out) {
    throw ConfigError("conv1x1: shape mismatch");
  }
  Matrix<T> out(xv.rows(), c_out * px);
  for (int co = 0; co < c_out; ++co) {
    auto block = out.middleCols(co * px, px);
    block.setConstant(tape.value(b)(0, co));
    for (int ci = 0; ci < c_in; ++ci) block += wv(ci, co) * xv.middleCols(ci * px, px);
  }
  return tape.custom({x, w, b}, std::move(out), [=](Tape<T>& t, const Matrix<T>& g) {
    const Matrix<T>& xv2 = t.value(x);
    const Matrix<T>& wv2 = t.value(w);
    Matrix<T> gx = Matrix<T>::Zero(xv2.rows(), xv2.cols());
    Matrix<T> gw(c_in, c_out);
    Matrix<T> gb(1, c_out);
    for (int co = 0; co < c_out; ++co) {
      const auto gblock = g.middleCols(co * px, px);
      gb(0, co) = gblock.sum();
      for (int ci = 0; ci < c_in; ++ci) {
        gx.middleCols(ci * px, px) += wv2(ci, co) * gblock;
        gw(ci, co) = gblock.cwiseProduct(xv2.middleCols(ci * px, px)).sum();
      }
    }
    t.accumulate(x, gx);
    t.accumulate(w, gw);
    t.accumulate(b, gb);
  });
}

CnnGeometry cnn_geometry(const ModelConfig& config) {
  config.validate();
  const auto& g = config.state_grid;
  CnnGeometry out;
  out.fields = g.size() == 3 ? static_cast<int>(g[0]) : 1;
  out.g1 = static_cast<int>(g[g.size() - 2]);
  out.g2 = static_cast<int>(g[g.size() - 1]);
  return out;
}

template <typename T>
Var cnn_decode(Tape<T>& tape, Var z, const CnnVars& p, const ModelConfig& config) {
  const CnnGeometry geo = cnn_geometry(config);
  const auto& ch = config.decoder.channels;
  const int h0 = geo.g1 / 4, w0 = geo.g2 / 4;
  Var x = nn::affine(tape, z, p.lift.w, p.lift.b);
  x = tape.relu(conv_transpose2d(tape, x, p.conv2.w, p.conv2.b, ch[0], h0, w0, ch[1]));
  x = tape.relu(conv_transpose2d(tape, x, p.conv1.w, p.conv1.b, ch[1], 2 * h0, 2 * w0, ch[2]));
  return conv1x1(tape, x, p.out.w, p.out.b, ch[2], geo.g1, geo.g2, geo.fields);
}

template <typename T>
void add_decoder_params(ParamStore<T>& params, const ModelConfig& config) {
  using nn::Init;
  config.validate();
  const Eigen::Index d = config.encoder.d_model;
  if (config.decoder.variant == DecoderVariant::mlp) {
    Eigen::Index in = d;
    for (int i = 0; i < config.decoder.n_layers; ++i) {
      const bool last = i + 1 == config.decoder.n_layers;
      const Eigen::Index out = last ? config.n_state : config.decoder.hidden_width;
      const std::string pre = "decoder.mlp" + std::to_string(i) + ".";
      params.add(pre + "w", in, out, Init::uniform_fan_in);
      params.add(pre + "b", 1, out, Init::zeros);
      in = out;
    }
    return;
  }
  const CnnGeometry geo = cnn_geometry(config);
  const auto& ch = config.decoder.channels;
  const Eigen::Index coarse = static_cast<Eigen::Index>(ch[0]) * (geo.g1 / 4) * (geo.g2 / 4);
  params.add("decoder.lift.w", d, coarse, Init::uniform_fan_in);
  params.add("decoder.lift.b", 1, coarse, Init::zeros);
  params.add("decoder.conv2.w", ch[0], ch[1] * 16, Init::uniform_fan_in);
  params.add("decoder.conv2.b", 1, ch[1], Init::zeros);
  params.add("decoder.conv1.w", ch[1], ch[2] * 16, Init::uniform_fan_in);
  params.add("decoder.conv1.b", 1, ch[2], Init::zeros);
  params.add("decoder.out.w", ch[2], geo.fields, Init::uniform_fan_in);
  params.add("decoder.out.b", 1, geo.fields, Init::zeros);
}

template <typename T>
DecoderVars bind_decoder(Tape<T>& tape, ParamStore<T>& params, const ModelConfig& config) {
  DecoderVars v;
  auto dense = [&](const std::string& pre) {
    return Dense{tape.param(params.get(pre + "w")), tape.param(params.get(pre + "b"))};
  };
  if (config.decoder.variant == DecoderVariant::mlp) {
    for (int i = 0; i < config.decoder.n_layers; ++i) v.mlp.push_back(dense("decoder.mlp" + std::to_string(i) + "."));
  } else {
    v.cnn = CnnVars{dense("decoder.lift."), dense("decoder.conv2."), dense("decoder.conv1."), dense("decoder.out.")};
  }
  return v;
}

template <typename T>
Var decode(Tape<T>& tape, Var z, const DecoderVars& vars, const ModelConfig& config) {
  if (config.decoder.variant == DecoderVariant::mlp) return mlp_decode(tape, z, vars.mlp);
  return cnn_decode(tape, z, *vars.cnn, config);
}

#define SHREDLAB_INSTANTIATE(T)                                                                   \
  template Var mlp_decode(Tape<T>&, Var, const std::vector<Dense>&);                             \
  template Var conv_transpose2d(Tape<T>&, Var, Var, Var, int, int, int, int);                    \
  template Var conv1x1(Tape<T>&, Var, Var, Var, int, int, int, int);                             \
  template Var cnn_decode(Tape<T>&, Var, const CnnVars&, const ModelConfig&);                    \
  template void add_decoder_params(ParamStore<T>&, const ModelConfig&);                          \
  template DecoderVars bind_decoder(Tape<T>&, ParamStore<T>&, const ModelConfig&);               \
  template Var decode(Tape<T>&, Var, const DecoderVars&, const ModelConfig&);

SHREDLAB_INSTANTIATE(float)
SHREDLAB_INSTANTIATE(double)
#undef SHREDLAB_INSTANTIATE

}  // namespace shredlab::model
