#include "shredlab/nn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "shredlab/errors.hpp"

namespace shredlab::nn {

namespace {

constexpr char kMagic[8] = {'S', 'H', 'R', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename S>
void put(std::vector<std::uint8_t>& out, S v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(S));
}

template <typename S, typename T>
void put_matrix(std::vector<std::uint8_t>& out, const Matrix<T>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put(out, static_cast<S>(m.data()[i]));
}

template <typename S>
Matrix<double> read_matrix(const std::uint8_t*& p, const std::uint8_t* end, Eigen::Index rows, Eigen::Index cols) {
  const auto n = static_cast<std::size_t>(rows * cols);
  if (static_cast<std::size_t>(end - p) < n * sizeof(S)) {
    throw FormatError(FormatError::Kind::size_mismatch, "checkpoint: payload shorter than header implies");
  }
  Matrix<double> m(rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    S v;
    std::memcpy(&v, p, sizeof(S));
    p += sizeof(S);
    m.data()[i] = static_cast<double>(v);
  }
  return m;
}

}  // namespace

const StoredTensor& Checkpoint::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ConfigError("checkpoint has no tensor named '" + name + "'");
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParamStore<T>& params, const nlohmann::json& meta) {
  nlohmann::json header;
  header["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  header["init_seed"] = params.init_seed();
  header["names"] = nlohmann::json::array();
  header["shapes"] = nlohmann::json::array();
  header["masked"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    header["names"].push_back(p.name);
    header["shapes"].push_back({p.value.rows(), p.value.cols()});
    if (p.mask) header["masked"].push_back(p.name);
  }
  header["meta"] = meta;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (std::size_t i = 0; i < params.size(); ++i) put_matrix<T>(out, params[i].value);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].mask) put_matrix<T>(out, *params[i].mask);
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& params, const nlohmann::json& meta) {
  const auto bytes = encode_checkpoint(params, meta);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "not a checkpoint file (bad magic)");
  }
  std::uint32_t len;
  std::memcpy(&len, bytes.data() + 8, 4);
  if (bytes.size() < 12 + static_cast<std::size_t>(len)) {
    throw FormatError(FormatError::Kind::size_mismatch, "checkpoint: truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_header, std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  ck.dtype = header.at("dtype").get<std::string>();
  ck.init_seed = header.at("init_seed").get<std::uint64_t>();
  ck.meta = header.value("meta", nlohmann::json::object());
  const auto names = header.at("names").get<std::vector<std::string>>();
  const auto shapes = header.at("shapes").get<std::vector<std::array<Eigen::Index, 2>>>();
  const auto masked = header.at("masked").get<std::vector<std::string>>();
  if (names.size() != shapes.size()) throw FormatError(FormatError::Kind::bad_header, "checkpoint: names/shapes differ");
  if (ck.dtype != "f32" && ck.dtype != "f64") throw FormatError(FormatError::Kind::bad_header, "checkpoint: bad dtype");

  const std::uint8_t* p = bytes.data() + 12 + len;
  const std::uint8_t* end = bytes.data() + bytes.size();
  auto read = [&](Eigen::Index r, Eigen::Index c) {
    return ck.dtype == "f32" ? read_matrix<float>(p, end, r, c) : read_matrix<double>(p, end, r, c);
  };
  for (std::size_t i = 0; i < names.size(); ++i) {
    ck.tensors.push_back({names[i], read(shapes[i][0], shapes[i][1]), std::nullopt});
  }
  for (auto& t : ck.tensors) {
    if (std::find(masked.begin(), masked.end(), t.name) != masked.end()) t.mask = read(t.value.rows(), t.value.cols());
  }
  if (p != end) throw FormatError(FormatError::Kind::size_mismatch, "checkpoint: trailing bytes after payload");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
void restore_params(ParamStore<T>& params, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != params.size()) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& t = ckpt.tensors[i];
    if (t.name != p.name || t.value.rows() != p.value.rows() || t.value.cols() != p.value.cols()) {
      throw ConfigError("checkpoint tensor '" + t.name + "' does not match parameter '" + p.name + "'");
    }
    p.value = t.value.template cast<T>();
    if (t.mask) p.mask = t.mask->template cast<T>();
  }
}

#define SHREDLAB_INSTANTIATE(T)                                                                              \
  template std::vector<std::uint8_t> encode_checkpoint(const ParamStore<T>&, const nlohmann::json&);        \
  template void save_checkpoint(const std::filesystem::path&, const ParamStore<T>&, const nlohmann::json&); \
  template void restore_params(ParamStore<T>&, const Checkpoint&);

SHREDLAB_INSTANTIATE(float)
SHREDLAB_INSTANTIATE(double)
#undef SHREDLAB_INSTANTIATE

}  // namespace shredlab::nn
