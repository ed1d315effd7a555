#include <algorithm>
#include <cmath>
#include <limits>

#include "shredlab/data.hpp"
#include "shredlab/errors.hpp"
#include "shredlab/rng.hpp"

namespace shredlab {

SpatioTemporalField apply_scaler(const SpatioTemporalField& field, const Scaler& scaler) {
  SpatioTemporalField out = field;
  const std::size_t cells = field.n_cells();
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (field.mask[i % cells]) out.values[i] = static_cast<float>(scaler.apply(field.values[i]));
  }
  return out;
}

SpatioTemporalField invert_scaler(const SpatioTemporalField& field, const Scaler& scaler) {
  SpatioTemporalField out = field;
  const std::size_t cells = field.n_cells();
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (field.mask[i % cells]) out.values[i] = static_cast<float>(scaler.invert(field.values[i]));
  }
  return out;
}

std::pair<SpatioTemporalField, Scaler> minmax_normalize(const SpatioTemporalField& field,
                                                        std::optional<std::size_t> fit_steps) {
  if (field.n_valid() == 0) throw ConfigError("minmax_normalize: field has no valid cells");
  const std::size_t steps = std::min(fit_steps.value_or(field.n_time), field.n_time);
  if (steps == 0) throw ConfigError("minmax_normalize: no time steps to fit on");
  const std::size_t cells = field.n_cells();

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < cells; ++c) {
      if (!field.mask[c]) continue;
      const double v = field.at(t, c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  Scaler scaler{lo, hi, hi == lo};
  return {apply_scaler(field, scaler), scaler};
}

SplitBounds split_bounds(std::size_t n_time, std::array<double, 3> fractions) {
  if (n_time < 3) throw ConfigError("chronological_split: need at least 3 time steps");
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("chronological_split: fractions must be non-negative");
  }
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("chronological_split: fractions sum to " + std::to_string(total) + ", not 1");
  }
  // The small offset keeps exact products such as 10 * 0.9 from flooring to 8.
  auto boundary = [n_time](double cum) {
    return std::min(n_time, static_cast<std::size_t>(std::floor(n_time * cum + 1e-9)));
  };
  SplitBounds b;
  b.n_time = n_time;
  b.train_end = boundary(fractions[0]);
  b.val_end = boundary(fractions[0] + fractions[1]);
  return b;
}

FieldSplits chronological_split(const SpatioTemporalField& field, std::array<double, 3> fractions) {
  const SplitBounds b = split_bounds(field.n_time, fractions);
  return {field.slice_time(0, b.train_end), field.slice_time(b.train_end, b.val_end),
          field.slice_time(b.val_end, b.n_time)};
}

SensorSet sample_sensors(const SpatioTemporalField& field, std::size_t n_sensors,
                         std::uint64_t seed) {
  std::vector<std::size_t> valid;
  valid.reserve(field.n_valid());
  for (std::size_t c = 0; c < field.mask.size(); ++c) {
    if (field.mask[c]) valid.push_back(c);
  }
  if (n_sensors > valid.size()) {
    throw ConfigError("sample_sensors: requested " + std::to_string(n_sensors) +
                      " sensors but only " + std::to_string(valid.size()) + " valid cells");
  }
  // Partial Fisher-Yates: the first n_sensors slots are a uniform draw without replacement.
  Rng rng(seed);
  for (std::size_t i = 0; i < n_sensors; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(valid.size() - i));
    std::swap(valid[i], valid[j]);
  }
  valid.resize(n_sensors);
  return {std::move(valid), seed};
}

LaggedDataset make_lagged_dataset(const SpatioTemporalField& field, const SensorSet& sensors,
                                  std::size_t k_lag, std::size_t target_offset,
                                  const SpatioTemporalField* target_field) {
  if (k_lag == 0) throw ConfigError("make_lagged_dataset: k_lag must be >= 1");
  const SpatioTemporalField& tf = target_field ? *target_field : field;
  if (tf.n_time != field.n_time) {
    throw ConfigError("make_lagged_dataset: target field has a different number of time steps");
  }
  const std::size_t required = k_lag + target_offset;
  if (field.n_time < required) {
    throw ConfigError("make_lagged_dataset: series has " + std::to_string(field.n_time) +
                      " steps; at least k_lag + target_offset = " + std::to_string(required) +
                      " required");
  }
  for (std::size_t idx : sensors.indices) {
    if (idx >= field.n_cells()) throw ConfigError("make_lagged_dataset: sensor index out of range");
  }

  LaggedDataset ds;
  ds.k_lag = k_lag;
  ds.target_offset = target_offset;
  ds.n_sensors = sensors.indices.size();
  ds.n_state = tf.n_cells();
  ds.n_samples = field.n_time - k_lag - target_offset + 1;
  ds.target_mask = tf.mask;
  ds.inputs.resize(ds.n_samples * k_lag * ds.n_sensors);
  ds.targets.resize(ds.n_samples * ds.n_state);

  for (std::size_t s = 0; s < ds.n_samples; ++s) {
    for (std::size_t j = 0; j < k_lag; ++j) {
      for (std::size_t i = 0; i < ds.n_sensors; ++i) {
        ds.inputs[(s * k_lag + j) * ds.n_sensors + i] = field.at(s + j, sensors.indices[i]);
      }
    }
    const std::size_t t_target = s + k_lag - 1 + target_offset;
    std::copy_n(tf.values.begin() + static_cast<std::ptrdiff_t>(t_target * ds.n_state), ds.n_state,
                ds.targets.begin() + static_cast<std::ptrdiff_t>(s * ds.n_state));
  }
  return ds;
}

}  // namespace shredlab
