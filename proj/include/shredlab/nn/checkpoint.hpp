#pragma once

// Checkpoint file: 8-byte magic "SHRCKPT1", u32 LE header length, JSON
// header {names, shapes, dtype, init_seed, masked, meta}, then every
// parameter's values in header order followed by the masks of masked
// parameters, all little-endian in the header dtype.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shredlab/nn/params.hpp"

namespace shredlab::nn {

struct StoredTensor {
  std::string name;
  Matrix<double> value;
  std::optional<Matrix<double>> mask;
};

struct Checkpoint {
  std::string dtype;  // "f32" | "f64"
  std::uint64_t init_seed = 0;
  std::vector<StoredTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const StoredTensor& at(const std::string& name) const;
};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParamStore<T>& params, const nlohmann::json& meta);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& params, const nlohmann::json& meta);

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copy stored values/masks into an existing store; names and shapes must match.
template <typename T>
void restore_params(ParamStore<T>& params, const Checkpoint& ckpt);

}  // namespace shredlab::nn
