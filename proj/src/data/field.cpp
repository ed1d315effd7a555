#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "shredlab/data.hpp"
#include "shredlab/errors.hpp"

namespace shredlab {

static_assert(std::endian::native == std::endian::little, "STF1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'T', 'F', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace

std::size_t SpatioTemporalField::n_cells() const {
  return std::accumulate(grid_dims.begin(), grid_dims.end(), std::size_t{1},
                         std::multiplies<>());
}

std::size_t SpatioTemporalField::n_valid() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

SpatioTemporalField SpatioTemporalField::zeros(std::string name, std::vector<std::size_t> grid_dims,
                                               std::size_t n_time, double dt) {
  SpatioTemporalField f;
  f.name = std::move(name);
  f.grid_dims = std::move(grid_dims);
  f.n_time = n_time;
  f.dt = dt;
  f.mask.assign(f.n_cells(), true);
  f.values.assign(n_time * f.n_cells(), 0.0f);
  return f;
}

void SpatioTemporalField::validate() const {
  if (grid_dims.empty()) throw ConfigError("field '" + name + "': grid_dims is empty");
  const std::size_t cells = n_cells();
  if (mask.size() != cells) {
    throw ConfigError("field '" + name + "': mask length " + std::to_string(mask.size()) +
                      " != n_cells " + std::to_string(cells));
  }
  if (values.size() != n_time * cells) {
    throw ConfigError("field '" + name + "': values length " + std::to_string(values.size()) +
                      " != n_time * n_cells " + std::to_string(n_time * cells));
  }
  for (std::size_t t = 0; t < n_time; ++t) {
    for (std::size_t c = 0; c < cells; ++c) {
      const float v = values[t * cells + c];
      if (!std::isfinite(v)) {
        throw ConfigError("field '" + name + "': non-finite value at t=" + std::to_string(t) +
                          " cell=" + std::to_string(c));
      }
      if (!mask[c] && v != 0.0f) {
        throw ConfigError("field '" + name + "': masked cell " + std::to_string(c) +
                          " is non-zero at t=" + std::to_string(t));
      }
    }
  }
}

SpatioTemporalField SpatioTemporalField::slice_time(std::size_t begin, std::size_t end) const {
  if (begin > end || end > n_time) throw ConfigError("slice_time: invalid range");
  SpatioTemporalField out;
  out.name = name;
  out.grid_dims = grid_dims;
  out.n_time = end - begin;
  out.dt = dt;
  out.mask = mask;
  const std::size_t cells = n_cells();
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * cells),
                    values.begin() + static_cast<std::ptrdiff_t>(end * cells));
  return out;
}

std::vector<std::uint8_t> encode_field(const SpatioTemporalField& field) {
  field.validate();
  nlohmann::json header = {{"name", field.name},
                           {"grid_dims", field.grid_dims},
                           {"n_time", field.n_time},
                           {"dt", field.dt},
                           {"mask_encoding", "bitpacked"}};
  const std::string text = header.dump();
  const std::size_t cells = field.n_cells();

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + (cells + 7) / 8 + field.values.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());

  std::vector<std::uint8_t> packed((cells + 7) / 8, 0);
  for (std::size_t c = 0; c < cells; ++c) {
    if (field.mask[c]) packed[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
  }
  out.insert(out.end(), packed.begin(), packed.end());

  const auto* raw = reinterpret_cast<const std::uint8_t*>(field.values.data());
  out.insert(out.end(), raw, raw + field.values.size() * sizeof(float));
  return out;
}

SpatioTemporalField decode_field(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  if (bytes.size() < 8) throw FormatError(K::size_mismatch, "STF1: file shorter than preamble");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(K::bad_magic, "STF1: bad magic");
  const std::uint32_t header_len = get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + std::size_t{header_len}) {
    throw FormatError(K::size_mismatch, "STF1: header length exceeds file size");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(K::bad_header, std::string("STF1: header is not valid JSON: ") + e.what());
  }

  SpatioTemporalField field;
  try {
    field.name = header.at("name").get<std::string>();
    field.grid_dims = header.at("grid_dims").get<std::vector<std::size_t>>();
    field.n_time = header.at("n_time").get<std::size_t>();
    field.dt = header.at("dt").get<double>();
    if (header.at("mask_encoding").get<std::string>() != "bitpacked") {
      throw FormatError(K::bad_header, "STF1: unsupported mask_encoding");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(K::bad_header, std::string("STF1: bad header: ") + e.what());
  }
  if (field.grid_dims.empty()) throw FormatError(K::bad_header, "STF1: empty grid_dims");

  const std::size_t cells = field.n_cells();
  const std::size_t mask_bytes = (cells + 7) / 8;
  const std::size_t payload = field.n_time * cells * sizeof(float);
  const std::size_t expected = 8 + std::size_t{header_len} + mask_bytes + payload;
  if (bytes.size() != expected) {
    throw FormatError(K::size_mismatch, "STF1: expected " + std::to_string(expected) +
                                            " bytes, found " + std::to_string(bytes.size()));
  }

  const std::uint8_t* mp = bytes.data() + 8 + header_len;
  field.mask.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) field.mask[c] = (mp[c / 8] >> (c % 8)) & 1u;

  field.values.resize(field.n_time * cells);
  std::memcpy(field.values.data(), mp + mask_bytes, payload);
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    if (!std::isfinite(field.values[i])) {
      throw FormatError(K::non_finite, "STF1: non-finite value at t=" + std::to_string(i / cells) +
                                           " cell=" + std::to_string(i % cells));
    }
  }
  return field;
}

void save_field(const SpatioTemporalField& field, const std::filesystem::path& path) {
  const auto bytes = encode_field(field);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
}

SpatioTemporalField load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_field(bytes);
}

}  // namespace shredlab
