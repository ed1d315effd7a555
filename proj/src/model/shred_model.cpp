#include "shredlab/model/shred_model.hpp"

#include <algorithm>

#include "shredlab/errors.hpp"

namespace shredlab::model {

template <typename T>
ShredModel<T>::ShredModel(ModelConfig config, std::uint64_t init_seed)
    : config_(std::move(config)), params_(init_seed) {
  config_.validate();
  add_encoder_params(params_, config_.encoder, config_.n_sensors);
  add_decoder_params(params_, config_);
}

template <typename T>
typename ShredModel<T>::Forward ShredModel<T>::forward(Tape<T>& tape, std::span<const Matrix<T>> windows) {
  for (const auto& w : windows) {
    if (w.cols() != config_.n_sensors || w.rows() != windows.front().rows()) {
      throw ConfigError("forward: windows must all be [k_lag x " + std::to_string(config_.n_sensors) + "]");
    }
  }
  const EncoderVars ev = bind_encoder(tape, params_, config_.encoder);
  const DecoderVars dv = bind_decoder(tape, params_, config_);
  EncodeResult enc = encode_batch(tape, ev, config_.encoder, windows);
  Forward out{decode(tape, enc.last, dv, config_), std::move(enc.systems), {}};
  for (const auto& layer : ev.sindy_attention) {
    out.coefficients.insert(out.coefficients.end(), layer.xi.begin(), layer.xi.end());
  }
  if (ev.latent_xi) out.coefficients.push_back(*ev.latent_xi);
  return out;
}

template <typename T>
Matrix<T> ShredModel<T>::predict(std::span<const Matrix<T>> windows, std::size_t batch_size) {
  Matrix<T> out(static_cast<Eigen::Index>(windows.size()), config_.n_state);
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, windows.size() - start);
    Tape<T> tape(false);
    const Forward f = forward(tape, windows.subspan(start, n));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = tape.value(f.prediction);
  }
  return out;
}

template <typename T>
sindy::SymbolicSystem ShredModel<T>::symbolic_system(int precision) const {
  sindy::SymbolicSystem sys;
  sys.precision = precision;
  const auto& enc = config_.encoder;
  if (enc.variant != EncoderVariant::transformer_sindy) return sys;
  for (int l = 0; l < enc.n_layers; ++l) {
    for (int h = 0; h < enc.n_heads; ++h) {
      const auto& p = params_.get(head_xi_name(l, h));
      sys.heads.push_back(sindy::make_head_system(l, h, p.value.template cast<double>(),
                                                  p.mask->template cast<double>(), enc.sindy.library, precision));
    }
  }
  return sys;
}

template <typename T>
Var compose_loss(Tape<T>& tape, const ShredModel<T>& model, const typename ShredModel<T>::Forward& fwd,
                 const Matrix<T>& target, const std::vector<bool>& column_mask, T lambda_sindy) {
  Var loss = tape.masked_mse(fwd.prediction, target, column_mask);
  if (lambda_sindy == T(0)) return loss;
  const auto& s = model.config().encoder.sindy;
  const T h = static_cast<T>(s.h_step());
  for (const auto& sys : fwd.systems) {
    Var l = sindy::sindy_pair_loss(tape, sys.prev, sys.next, sys.xi, s.library, h, s.k_steps, T(0));
    loss = tape.add(loss, tape.scale(l, lambda_sindy));
  }
  if (s.lambda_reg > 0.0) {
    const T reg = lambda_sindy * static_cast<T>(s.lambda_reg);
    for (Var xi : fwd.coefficients) loss = tape.add(loss, tape.scale(tape.sum_squares(xi), reg));
  }
  return loss;
}

template class ShredModel<float>;
template class ShredModel<double>;

template Var compose_loss(Tape<float>&, const ShredModel<float>&, const ShredModel<float>::Forward&,
                          const Matrix<float>&, const std::vector<bool>&, float);
template Var compose_loss(Tape<double>&, const ShredModel<double>&, const ShredModel<double>::Forward&,
                          const Matrix<double>&, const std::vector<bool>&, double);

}  // namespace shredlab::model
