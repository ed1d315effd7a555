#include <cmath>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

#include "shredlab/data.hpp"
#include "shredlab/errors.hpp"
#include "shredlab/rng.hpp"

namespace shredlab {

namespace {

using nlohmann::json;

// Normalized coordinates of a cell in [0, 1) per axis (row-major grid).
std::vector<double> cell_coords(std::size_t cell, const std::vector<std::size_t>& dims) {
  std::vector<double> x(dims.size());
  for (std::size_t d = dims.size(); d-- > 0;) {
    x[d] = static_cast<double>(cell % dims[d]) / static_cast<double>(dims[d]);
    cell /= dims[d];
  }
  return x;
}

void traveling_waves(SpatioTemporalField& f, const json& params) {
  const json waves = params.value("waves", json::array({json{{"amplitude", 1.0}, {"k", {1.0}}, {"omega", 0.2}}}));
  if (!waves.is_array() || waves.empty() || waves.size() > 5) {
    throw ConfigError("traveling_waves: 'waves' must list 1..5 plane waves");
  }
  const double offset = params.value("offset", 0.0);
  const std::size_t cells = f.n_cells();
  for (std::size_t c = 0; c < cells; ++c) {
    const auto x = cell_coords(c, f.grid_dims);
    for (std::size_t t = 0; t < f.n_time; ++t) {
      double v = offset;
      for (const auto& w : waves) {
        const auto k = w.value("k", std::vector<double>{});
        double phase = w.value("phase", 0.0) - w.value("omega", 0.0) * static_cast<double>(t) * f.dt;
        for (std::size_t d = 0; d < std::min(k.size(), x.size()); ++d) {
          phase += 2.0 * std::numbers::pi * k[d] * x[d];
        }
        v += w.value("amplitude", 1.0) * std::sin(phase);
      }
      f.at(t, c) = static_cast<float>(v);
    }
  }
}

void linear_modes(SpatioTemporalField& f, const json& params, std::uint64_t seed) {
  if (!params.contains("A")) throw ConfigError("linear_modes: missing generator matrix 'A'");
  const auto a_rows = params.at("A").get<std::vector<std::vector<double>>>();
  const auto r = static_cast<Eigen::Index>(a_rows.size());
  Eigen::MatrixXd a(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(a_rows[static_cast<std::size_t>(i)].size()) != r) {
      throw ConfigError("linear_modes: 'A' must be square");
    }
    for (Eigen::Index j = 0; j < r; ++j) a(i, j) = a_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  Eigen::VectorXd z0 = Eigen::VectorXd::Ones(r);
  if (params.contains("z0")) {
    const auto v = params.at("z0").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != r) throw ConfigError("linear_modes: z0 length != dim(A)");
    z0 = Eigen::Map<const Eigen::VectorXd>(v.data(), r);
  }

  const auto cells = static_cast<Eigen::Index>(f.n_cells());
  Eigen::MatrixXd modes(cells, r);
  if (params.contains("modes")) {
    const auto m = params.at("modes").get<std::vector<std::vector<double>>>();
    if (static_cast<Eigen::Index>(m.size()) != r) throw ConfigError("linear_modes: need one mode per latent");
    for (Eigen::Index j = 0; j < r; ++j) {
      if (static_cast<Eigen::Index>(m[static_cast<std::size_t>(j)].size()) != cells) {
        throw ConfigError("linear_modes: mode length != n_cells");
      }
      for (Eigen::Index c = 0; c < cells; ++c) modes(c, j) = m[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
    }
  } else {
    if (r > cells) throw ConfigError("linear_modes: more modes than cells");
    Rng rng(seed);
    Eigen::MatrixXd g(cells, r);
    for (Eigen::Index j = 0; j < r; ++j) {
      for (Eigen::Index c = 0; c < cells; ++c) g(c, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    modes = qr.householderQ() * Eigen::MatrixXd::Identity(cells, r);
  }

  const double offset = params.value("offset", 0.0);
  for (std::size_t t = 0; t < f.n_time; ++t) {
    const Eigen::MatrixXd prop = (a * (static_cast<double>(t) * f.dt)).exp();
    const Eigen::VectorXd frame = modes * (prop * z0);
    for (Eigen::Index c = 0; c < cells; ++c) {
      f.at(t, static_cast<std::size_t>(c)) = static_cast<float>(offset + frame(c));
    }
  }
}

void apply_invalid_cells(SpatioTemporalField& f, const json& params) {
  if (!params.contains("invalid_cells")) return;
  for (auto c : params.at("invalid_cells").get<std::vector<std::size_t>>()) {
    if (c >= f.n_cells()) throw ConfigError("invalid_cells: index out of range");
    f.mask[c] = false;
    for (std::size_t t = 0; t < f.n_time; ++t) f.at(t, c) = 0.0f;
  }
}

}  // namespace

SpatioTemporalField gen_synthetic(const std::string& kind, const std::vector<std::size_t>& grid_dims,
                                  std::size_t n_time, const json& params, std::uint64_t seed,
                                  double dt) {
  if (grid_dims.empty()) throw ConfigError("gen_synthetic: grid_dims is empty");
  if (!(dt > 0.0)) throw ConfigError("gen_synthetic: dt must be positive");
  SpatioTemporalField f = SpatioTemporalField::zeros(kind, grid_dims, n_time, dt);

  if (kind == "traveling_waves") {
    traveling_waves(f, params);
  } else if (kind == "linear_modes") {
    linear_modes(f, params, seed);
  } else if (kind == "noisy_mix") {
    const std::string base = params.value("base", std::string("traveling_waves"));
    if (base == "noisy_mix") throw ConfigError("noisy_mix: base cannot itself be noisy_mix");
    f = gen_synthetic(base, grid_dims, n_time, params.value("base_params", json::object()), seed, dt);
    f.name = kind;
    const double sigma = params.value("sigma", 0.1);
    if (sigma < 0.0) throw ConfigError("noisy_mix: sigma must be >= 0");
    if (sigma > 0.0) {
      // Separate stream so the noiseless part does not depend on sigma.
      Rng noise(seed ^ 0xA5A5A5A55A5A5A5AULL);
      for (auto& v : f.values) v = static_cast<float>(v + sigma * noise.normal());
    }
  } else {
    throw ConfigError("gen_synthetic: unknown kind '" + kind +
                      "' (expected traveling_waves, linear_modes or noisy_mix)");
  }
  apply_invalid_cells(f, params);
  return f;
}

}  // namespace shredlab
