#pragma once

// Command-line front end: generate, train, sweep, eval, extract.
// Exit codes: 0 success, 2 usage/config error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "shredlab/data.hpp"

namespace shredlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Field from a generator spec {kind, grid_dims, n_time, dt?, seed?, params?}.
SpatioTemporalField generate_from_spec(const nlohmann::json& spec);

/// Dataset entry of a train config: STF1 path (relative to base_dir) or inline generator spec.
SpatioTemporalField load_dataset(const nlohmann::json& dataset, const std::filesystem::path& base_dir);

/// Apply "key=value" overrides; key may be a dotted path, value is JSON (or a bare string).
void apply_overrides(nlohmann::json& config, const std::vector<std::string>& overrides);

/// 64-bit FNV-1a, hex encoded.
std::string checksum(std::span<const std::uint8_t> bytes);

}  // namespace shredlab::cli
