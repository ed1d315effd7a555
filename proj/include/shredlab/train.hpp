#pragma once

// Data preparation, optimization loop, checkpoint selection, evaluation and
// the hyperparameter sweep.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shredlab/data.hpp"
#include "shredlab/model/shred_model.hpp"

namespace shredlab::train {

using nn::Matrix;

enum class OptimizerKind { adam, sgd };

struct RomSettings {
  std::size_t rank = 20;
  std::size_t n_fields = 1;
};

struct TrainConfig {
  nlohmann::json dataset;  // STF1 path, or an inline generator spec {kind, grid_dims, n_time, ...}
  model::EncoderConfig encoder;
  model::DecoderConfig decoder;
  std::size_t k_lag = 50;
  std::size_t n_sensors = 50;
  std::size_t target_offset = 1;
  std::array<double, 3> splits = {0.8, 0.1, 0.1};
  std::optional<RomSettings> rom;
  bool normalize_on_train = false;  // min/max from the training steps only instead of the full series
  double lr = 1e-3;
  int n_epochs = 100;
  std::size_t batch_size = 64;
  double lambda_sindy = 0.1;
  int prune_every = 10;  // 0 disables pruning
  double prune_tau = 0.05;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0};
  int min_checkpoint_epoch = 10;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Windows and targets for one split, converted to matrices.
template <typename T>
struct SplitData {
  std::vector<Matrix<T>> windows;  // [k_lag x n_sensors] each
  Matrix<T> targets;               // [n_samples x n_state]
  std::vector<bool> column_mask;   // valid state entries

  std::size_t size() const { return windows.size(); }
};

template <typename T>
SplitData<T> to_split_data(const LaggedDataset& ds);

template <typename T>
struct PreparedData {
  SplitData<T> train, val, test;
  Scaler scaler;
  SensorSet sensors;
  std::vector<RomBasis> rom;
  std::size_t n_state = 0;
  std::vector<std::size_t> state_grid;  // empty for ROM targets
};

/// Min-max normalize (full series, or training steps only), split chronologically,
/// place sensors with `data_seed`, optionally project onto rSVD modes fit on
/// the training split, and window each split independently.
template <typename T>
PreparedData<T> prepare_data(const SpatioTemporalField& field, const TrainConfig& config, std::uint64_t data_seed);

model::ModelConfig model_config(const TrainConfig& config, std::size_t n_state,
                                const std::vector<std::size_t>& state_grid);

/// Adam (β₁ 0.9, β₂ 0.999, ε 1e-8) or plain SGD. After each step masked
/// parameters are multiplied by their mask again.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}
  void step(nn::ParamStore<T>& params);
  std::size_t steps() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

/// Prune every SINDy coefficient matrix of the model. Returns the number of active entries left.
template <typename T>
std::size_t prune_model(model::ShredModel<T>& model, T threshold);

/// Mean squared error over masked-valid entries of every sample.
template <typename T>
double masked_mse(const Matrix<T>& pred, const Matrix<T>& target, const std::vector<bool>& column_mask);

template <typename T>
double evaluate(model::ShredModel<T>& model, const SplitData<T>& split);

struct CheckpointChoice {
  int epoch = 0;  // 1-based
  double val_loss = 0.0;
};

/// Lowest validation loss among epochs >= min_epoch (1-based). If the run is
/// shorter than min_epoch, the last epoch's floor is used instead.
CheckpointChoice select_checkpoint(const std::vector<double>& val_losses, int min_epoch);

struct TrainRun {
  std::vector<double> train_losses;  // mean total loss per epoch
  std::vector<double> val_losses;    // reconstruction MSE per epoch
  int best_epoch = 0;
  double best_val = 0.0;
  double test_mse = 0.0;
  double wall_s = 0.0;
  std::optional<sindy::SymbolicSystem> system;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

/// Train in place; the model ends with the best checkpoint restored.
template <typename T>
TrainRun train(model::ShredModel<T>& model, const PreparedData<T>& data, const TrainConfig& config,
               std::uint64_t shuffle_seed, const EpochCallback& on_epoch = {});

/// Full pipeline for one master seed: derive seeds, prepare data, build, train.
template <typename T>
struct SeededRun {
  model::ShredModel<T> model;
  PreparedData<T> data;
  TrainRun run;
};

template <typename T>
SeededRun<T> run_seed(const SpatioTemporalField& field, const TrainConfig& config, std::uint64_t seed,
                      const EpochCallback& on_epoch = {});

// Sweep

struct SweepGrid {
  TrainConfig base;
  std::vector<std::string> encoders;  // labels: lstm, sl-lstm, gru, sl-gru, t, sl-t, sa-t, sasl-t
  std::vector<std::string> decoders;  // mlp, cnn
  std::vector<int> n_layers;
  std::vector<double> lrs;
  std::vector<std::uint64_t> seeds;

  /// Experiment-1 axes: 8 encoders x 2 decoders x {1,2,3,4} layers x {1e-2, 1e-3}.
  static SweepGrid experiment1(TrainConfig base, std::vector<std::uint64_t> seeds);
};

void from_json(const nlohmann::json& j, SweepGrid& g);

struct SweepCell {
  std::string encoder;
  std::string decoder;
  int n_layers = 1;
  double lr = 1e-3;
};

std::vector<SweepCell> enumerate_cells(const SweepGrid& grid);
TrainConfig cell_config(const SweepGrid& grid, const SweepCell& cell, std::uint64_t seed);

struct SweepRow {
  SweepCell cell;
  std::uint64_t seed = 0;
  double best_val = 0.0;
  double test_mse = 0.0;
  std::size_t params = 0;
  std::size_t checkpoint_bytes = 0;
  double wall_s = 0.0;
};

struct SweepFailure {
  SweepCell cell;
  std::uint64_t seed = 0;
  std::string error;
};

struct AggregateRow {
  SweepCell cell;
  std::size_t n_runs = 0;
  double mean_test_mse = 0.0;
  double std_test_mse = 0.0;  // sample standard deviation; 0 for a single run
  double mean_best_val = 0.0;
  std::size_t params = 0;
};

struct SweepResults {
  std::vector<SweepRow> rows;  // sorted by cell then seed, independent of execution order
  std::vector<SweepFailure> failures;
};

using CellRunner = std::function<SweepRow(const TrainConfig& config, const SweepCell& cell, std::uint64_t seed)>;

/// Runs every (cell, seed) pair on up to `jobs` threads. Runner exceptions are
/// recorded as failures and the sweep continues.
SweepResults run_sweep(const SweepGrid& grid, const CellRunner& runner, int jobs = 1);

/// Mean/std of test MSE per cell, sorted ascending by mean.
std::vector<AggregateRow> aggregate(const std::vector<SweepRow>& rows);

/// Best `n` transformer-encoder cells (t, sl-t, sa-t, sasl-t), ascending.
std::vector<AggregateRow> top_transformers(const std::vector<AggregateRow>& agg, std::size_t n = 12);

void write_results_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);
void write_failures_csv(const std::filesystem::path& path, const std::vector<SweepFailure>& failures);

}  // namespace shredlab::train
