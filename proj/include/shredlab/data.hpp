#pragma once

// Spatio-temporal field storage, preprocessing and dataset construction.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace shredlab {

/// Raw state u(x, t): time-major float32 values over a (possibly masked) grid.
struct SpatioTemporalField {
  std::string name;
  std::vector<std::size_t> grid_dims;
  std::size_t n_time = 0;
  double dt = 1.0;
  std::vector<bool> mask;     // length n_cells; false = invalid cell
  std::vector<float> values;  // n_time * n_cells, time-major

  std::size_t n_cells() const;
  std::size_t n_valid() const;
  float at(std::size_t t, std::size_t cell) const { return values[t * n_cells() + cell]; }
  float& at(std::size_t t, std::size_t cell) { return values[t * n_cells() + cell]; }

  /// Empty field with an all-valid mask and zero values.
  static SpatioTemporalField zeros(std::string name, std::vector<std::size_t> grid_dims,
                                   std::size_t n_time, double dt = 1.0);

  /// Throws ConfigError when shape/mask/finiteness invariants are violated.
  void validate() const;

  /// Copy of time steps [begin, end).
  SpatioTemporalField slice_time(std::size_t begin, std::size_t end) const;
};

// STF1 container
void save_field(const SpatioTemporalField& field, const std::filesystem::path& path);
SpatioTemporalField load_field(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_field(const SpatioTemporalField& field);
SpatioTemporalField decode_field(std::span<const std::uint8_t> bytes);

struct Scaler {
  double min = 0.0;
  double max = 1.0;
  bool degenerate = false;

  double apply(double v) const { return degenerate ? 0.0 : (v - min) / (max - min); }
  double invert(double v) const { return degenerate ? min : min + v * (max - min); }
};

/// Fit one global min/max over the valid cells of time steps [0, fit_steps)
/// (all steps when fit_steps is empty) and map the whole field to [0, 1].
std::pair<SpatioTemporalField, Scaler> minmax_normalize(
    const SpatioTemporalField& field, std::optional<std::size_t> fit_steps = std::nullopt);
SpatioTemporalField apply_scaler(const SpatioTemporalField& field, const Scaler& scaler);
SpatioTemporalField invert_scaler(const SpatioTemporalField& field, const Scaler& scaler);

struct SplitBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t n_time = 0;
};

SplitBounds split_bounds(std::size_t n_time, std::array<double, 3> fractions = {0.8, 0.1, 0.1});

struct FieldSplits {
  SpatioTemporalField train;
  SpatioTemporalField val;
  SpatioTemporalField test;
};

FieldSplits chronological_split(const SpatioTemporalField& field,
                                std::array<double, 3> fractions = {0.8, 0.1, 0.1});

struct SensorSet {
  std::vector<std::size_t> indices;
  std::uint64_t seed = 0;
};

SensorSet sample_sensors(const SpatioTemporalField& field, std::size_t n_sensors,
                         std::uint64_t seed);

/// Sliding windows of sensor traces paired with full-state targets.
struct LaggedDataset {
  std::size_t n_samples = 0;
  std::size_t k_lag = 0;
  std::size_t n_sensors = 0;
  std::size_t n_state = 0;
  std::size_t target_offset = 1;
  std::vector<float> inputs;   // [n_samples, k_lag, n_sensors]
  std::vector<float> targets;  // [n_samples, n_state]
  std::vector<bool> target_mask;  // [n_state]

  std::span<const float> window(std::size_t s) const {
    return {inputs.data() + s * k_lag * n_sensors, k_lag * n_sensors};
  }
  std::span<const float> target(std::size_t s) const {
    return {targets.data() + s * n_state, n_state};
  }
};

/// Windows over `field`; targets come from `target_field` when given (e.g.
/// reduced-order coefficients), otherwise from `field` itself.
LaggedDataset make_lagged_dataset(const SpatioTemporalField& field, const SensorSet& sensors,
                                  std::size_t k_lag, std::size_t target_offset = 1,
                                  const SpatioTemporalField* target_field = nullptr);

// Reduced-order modelling

struct RomBasis {
  Eigen::MatrixXd modes;            // [n_cells_field, rank], orthonormal columns
  Eigen::VectorXd singular_values;  // [rank], non-increasing
  std::size_t rank = 0;
};

struct RsvdOptions {
  std::size_t rank = 20;
  std::size_t oversample = 10;
  std::size_t n_power_iters = 2;
  std::uint64_t seed = 0;
};

/// Randomized SVD (range finder with power iteration) returning the top
/// `rank` left singular vectors and singular values of `a`.
RomBasis rsvd(const Eigen::MatrixXd& a, const RsvdOptions& options);

/// Fit one basis per physical field; the field's cells are split into
/// `n_fields` equal contiguous blocks. Uses all time steps of `field`.
std::vector<RomBasis> fit_rom(const SpatioTemporalField& field, std::size_t n_fields,
                              const RsvdOptions& options);

/// Project onto the per-field modes: output has one cell per retained mode.
SpatioTemporalField rom_encode(const SpatioTemporalField& field, std::span<const RomBasis> bases);
SpatioTemporalField rom_decode(const SpatioTemporalField& coeffs, std::span<const RomBasis> bases,
                               const std::vector<std::size_t>& grid_dims);
std::size_t rom_dimension(std::span<const RomBasis> bases);

// Synthetic data

/// kind: traveling_waves | linear_modes | noisy_mix. See README for params.
SpatioTemporalField gen_synthetic(const std::string& kind, const std::vector<std::size_t>& grid_dims,
                                  std::size_t n_time, const nlohmann::json& params,
                                  std::uint64_t seed, double dt = 1.0);

}  // namespace shredlab
