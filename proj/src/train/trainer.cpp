#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "shredlab/errors.hpp"
#include "shredlab/train.hpp"

namespace shredlab::train {

void TrainConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (n_epochs < 1) throw ConfigError("train: n_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (k_lag < 1) throw ConfigError("train: k_lag must be >= 1");
  if (n_sensors < 1) throw ConfigError("train: n_sensors must be >= 1");
  if (lambda_sindy < 0.0) throw ConfigError("train: lambda_sindy must be >= 0");
  if (prune_every < 0) throw ConfigError("train: prune_every must be >= 0");
  if (prune_tau < 0.0) throw ConfigError("train: prune_tau must be >= 0");
  if (min_checkpoint_epoch < 1) throw ConfigError("train: min_checkpoint_epoch must be >= 1");
  if (rom && (rom->rank < 1 || rom->n_fields < 1)) throw ConfigError("train: rom rank and n_fields must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"dataset", c.dataset},
       {"encoder", c.encoder},
       {"decoder", c.decoder},
       {"k_lag", c.k_lag},
       {"n_sensors", c.n_sensors},
       {"target_offset", c.target_offset},
       {"splits", c.splits},
       {"normalize_fit", c.normalize_on_train ? "train" : "full"},
       {"lr", c.lr},
       {"n_epochs", c.n_epochs},
       {"batch_size", c.batch_size},
       {"lambda_sindy", c.lambda_sindy},
       {"prune_every", c.prune_every},
       {"prune_tau", c.prune_tau},
       {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
       {"seed", c.seed},
       {"seeds", c.seeds},
       {"min_checkpoint_epoch", c.min_checkpoint_epoch}};
  j["rom"] = c.rom ? nlohmann::json{{"rank", c.rom->rank}, {"n_fields", c.rom->n_fields}} : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.dataset = j.value("dataset", nlohmann::json());
  c.encoder = j.value("encoder", d.encoder);
  c.decoder = j.value("decoder", d.decoder);
  c.k_lag = j.value("k_lag", d.k_lag);
  c.n_sensors = j.value("n_sensors", d.n_sensors);
  c.target_offset = j.value("target_offset", d.target_offset);
  c.splits = j.value("splits", d.splits);
  const std::string fit = j.value("normalize_fit", std::string("full"));
  if (fit != "full" && fit != "train") throw ConfigError("normalize_fit must be full or train");
  c.normalize_on_train = fit == "train";
  c.lr = j.value("lr", d.lr);
  c.n_epochs = j.value("n_epochs", d.n_epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lambda_sindy = j.value("lambda_sindy", d.lambda_sindy);
  c.prune_every = j.value("prune_every", d.prune_every);
  c.prune_tau = j.value("prune_tau", d.prune_tau);
  const std::string opt = j.value("optimizer", std::string("adam"));
  if (opt != "adam" && opt != "sgd") throw ConfigError("optimizer must be adam or sgd");
  c.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  c.seeds = j.value("seeds", d.seeds);
  c.seed = j.value("seed", c.seeds.empty() ? d.seed : c.seeds.front());
  c.min_checkpoint_epoch = j.value("min_checkpoint_epoch", d.min_checkpoint_epoch);
  c.rom.reset();
  if (j.contains("rom") && !j.at("rom").is_null()) {
    RomSettings r;
    r.rank = j.at("rom").value("rank", r.rank);
    r.n_fields = j.at("rom").value("n_fields", r.n_fields);
    c.rom = r;
  }
}

template <typename T>
SplitData<T> to_split_data(const LaggedDataset& ds) {
  SplitData<T> out;
  const auto k = static_cast<Eigen::Index>(ds.k_lag);
  const auto m = static_cast<Eigen::Index>(ds.n_sensors);
  out.windows.reserve(ds.n_samples);
  for (std::size_t s = 0; s < ds.n_samples; ++s) {
    out.windows.push_back(Eigen::Map<const Matrix<float>>(ds.window(s).data(), k, m).template cast<T>());
  }
  out.targets = Eigen::Map<const Matrix<float>>(ds.targets.data(), static_cast<Eigen::Index>(ds.n_samples),
                                                static_cast<Eigen::Index>(ds.n_state))
                    .template cast<T>();
  out.column_mask = ds.target_mask;
  return out;
}

template <typename T>
PreparedData<T> prepare_data(const SpatioTemporalField& field, const TrainConfig& config, std::uint64_t data_seed) {
  config.validate();
  const SplitBounds b = split_bounds(field.n_time, config.splits);
  auto [norm, scaler] =
      minmax_normalize(field, config.normalize_on_train ? std::optional<std::size_t>(b.train_end) : std::nullopt);

  PreparedData<T> out;
  out.scaler = scaler;
  out.sensors = sample_sensors(norm, config.n_sensors, data_seed);
  const SpatioTemporalField parts[3] = {norm.slice_time(0, b.train_end), norm.slice_time(b.train_end, b.val_end),
                                        norm.slice_time(b.val_end, b.n_time)};
  SplitData<T>* dest[3] = {&out.train, &out.val, &out.test};
  const char* names[3] = {"train", "val", "test"};

  if (config.rom) {
    RsvdOptions opts;
    opts.rank = config.rom->rank;
    opts.seed = data_seed;
    out.rom = fit_rom(parts[0], config.rom->n_fields, opts);
    out.n_state = rom_dimension(out.rom);
  } else {
    out.n_state = field.n_cells();
    out.state_grid = field.grid_dims;
  }
  for (int i = 0; i < 3; ++i) {
    try {
      if (config.rom) {
        const SpatioTemporalField coeffs = rom_encode(parts[i], out.rom);
        *dest[i] = to_split_data<T>(make_lagged_dataset(parts[i], out.sensors, config.k_lag, config.target_offset, &coeffs));
      } else {
        *dest[i] = to_split_data<T>(make_lagged_dataset(parts[i], out.sensors, config.k_lag, config.target_offset));
      }
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(names[i]) + " split: " + e.what());
    }
  }
  return out;
}

model::ModelConfig model_config(const TrainConfig& config, std::size_t n_state,
                                const std::vector<std::size_t>& state_grid) {
  model::ModelConfig m;
  m.encoder = config.encoder;
  m.decoder = config.decoder;
  m.n_sensors = static_cast<int>(config.n_sensors);
  m.n_state = static_cast<int>(n_state);
  m.state_grid = state_grid;
  return m;
}

template <typename T>
void Optimizer<T>::step(nn::ParamStore<T>& params) {
  ++t_;
  const T lr = static_cast<T>(lr_);
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      p.value -= lr * p.grad;
      if (p.mask) p.value = p.value.cwiseProduct(*p.mask);
    }
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Matrix<T>::Zero(params[i].value.rows(), params[i].value.cols()));
      v_.push_back(m_.back());
    }
  }
  const T c1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    m_[i] = T(b1) * m_[i] + T(1 - b1) * p.grad;
    v_[i] = T(b2) * v_[i] + T(1 - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + T(eps));
    if (p.mask) p.value = p.value.cwiseProduct(*p.mask);
  }
}

template <typename T>
std::size_t prune_model(model::ShredModel<T>& model, T threshold) {
  std::size_t active = 0;
  for (const auto& name : model.sindy_params()) {
    auto& p = model.params().get(name);
    sindy::prune_in_place(p.value, *p.mask, threshold);
    active += static_cast<std::size_t>((p.mask->array() != T(0)).count());
  }
  return active;
}

template <typename T>
double masked_mse(const Matrix<T>& pred, const Matrix<T>& target, const std::vector<bool>& column_mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      column_mask.size() != static_cast<std::size_t>(pred.cols())) {
    throw ConfigError("masked_mse: shape mismatch");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    if (!column_mask[static_cast<std::size_t>(c)]) continue;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      const double d = static_cast<double>(pred(r, c)) - static_cast<double>(target(r, c));
      sum += d * d;
    }
    n += static_cast<std::size_t>(pred.rows());
  }
  if (n == 0) throw ConfigError("masked_mse: no valid entries");
  return sum / static_cast<double>(n);
}

template <typename T>
double evaluate(model::ShredModel<T>& model, const SplitData<T>& split) {
  if (split.size() == 0) throw ConfigError("evaluate: empty split");
  return masked_mse(model.predict(split.windows), split.targets, split.column_mask);
}

CheckpointChoice select_checkpoint(const std::vector<double>& val_losses, int min_epoch) {
  if (val_losses.empty()) throw ConfigError("select_checkpoint: no epochs");
  const int n = static_cast<int>(val_losses.size());
  const int first = std::min(std::max(min_epoch, 1), n);
  CheckpointChoice best{first, val_losses[static_cast<std::size_t>(first - 1)]};
  for (int e = first + 1; e <= n; ++e) {
    if (val_losses[static_cast<std::size_t>(e - 1)] < best.val_loss) best = {e, val_losses[static_cast<std::size_t>(e - 1)]};
  }
  return best;
}

template <typename T>
TrainRun train(model::ShredModel<T>& model, const PreparedData<T>& data, const TrainConfig& config,
               std::uint64_t shuffle_seed, const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.size() == 0 || data.val.size() == 0) throw ConfigError("train: empty train or val split");
  const auto start = std::chrono::steady_clock::now();
  Rng rng(shuffle_seed);
  Optimizer<T> opt(config.optimizer, config.lr);
  auto& params = model.params();
  const int min_epoch = std::min(config.min_checkpoint_epoch, config.n_epochs);
  const T lambda = static_cast<T>(config.lambda_sindy);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainRun run;
  typename nn::ParamStore<T>::Snapshot best;
  double best_val = 0.0;
  bool have_best = false;

  for (int epoch = 1; epoch <= config.n_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size, ++batch_no) {
      const std::size_t n = std::min(config.batch_size, order.size() - b0);
      std::vector<Matrix<T>> windows;
      Matrix<T> target(static_cast<Eigen::Index>(n), data.train.targets.cols());
      for (std::size_t i = 0; i < n; ++i) {
        windows.push_back(data.train.windows[order[b0 + i]]);
        target.row(static_cast<Eigen::Index>(i)) = data.train.targets.row(static_cast<Eigen::Index>(order[b0 + i]));
      }
      params.zero_grad();
      nn::Tape<T> tape;
      const auto fwd = model.forward(tape, windows);
      nn::Var loss = compose_loss(tape, model, fwd, target, data.train.column_mask, lambda);
      const double value = static_cast<double>(tape.value(loss)(0, 0));
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
      }
      tape.backward(loss);
      opt.step(params);
      total += value * static_cast<double>(n);
    }
    if (config.prune_every > 0 && epoch % config.prune_every == 0) prune_model(model, static_cast<T>(config.prune_tau));

    const double val = evaluate(model, data.val);
    if (!std::isfinite(val)) throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    run.train_losses.push_back(total / static_cast<double>(order.size()));
    run.val_losses.push_back(val);
    if (epoch >= min_epoch && (!have_best || val < best_val)) {
      best = params.snapshot();
      best_val = val;
      run.best_epoch = epoch;
      have_best = true;
    }
    if (on_epoch) on_epoch(epoch, run.train_losses.back(), val);
  }

  params.restore(best);
  run.best_val = best_val;
  run.test_mse = data.test.size() > 0 ? evaluate(model, data.test) : 0.0;
  if (model.config().encoder.variant == model::EncoderVariant::transformer_sindy) run.system = model.symbolic_system();
  run.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

template <typename T>
SeededRun<T> run_seed(const SpatioTemporalField& field, const TrainConfig& config, std::uint64_t seed,
                      const EpochCallback& on_epoch) {
  const SeedSet seeds = derive_seeds(seed);
  PreparedData<T> data = prepare_data<T>(field, config, seeds.data);
  model::ShredModel<T> m(model_config(config, data.n_state, data.state_grid), seeds.init);
  TrainRun run = train(m, data, config, seeds.shuffle, on_epoch);
  return {std::move(m), std::move(data), std::move(run)};
}

#define SHREDLAB_INSTANTIATE(T)                                                                               \
  template SplitData<T> to_split_data<T>(const LaggedDataset&);                                              \
  template PreparedData<T> prepare_data<T>(const SpatioTemporalField&, const TrainConfig&, std::uint64_t);   \
  template class Optimizer<T>;                                                                                \
  template std::size_t prune_model(model::ShredModel<T>&, T);                                                 \
  template double masked_mse(const Matrix<T>&, const Matrix<T>&, const std::vector<bool>&);                   \
  template double evaluate(model::ShredModel<T>&, const SplitData<T>&);                                       \
  template TrainRun train(model::ShredModel<T>&, const PreparedData<T>&, const TrainConfig&, std::uint64_t,  \
                          const EpochCallback&);                                                              \
  template SeededRun<T> run_seed<T>(const SpatioTemporalField&, const TrainConfig&, std::uint64_t,           \
                                    const EpochCallback&);

SHREDLAB_INSTANTIATE(float)
SHREDLAB_INSTANTIATE(double)
#undef SHREDLAB_INSTANTIATE

}  // namespace shredlab::train
