#include <algorithm>

#include "shredlab/data.hpp"
#include "shredlab/errors.hpp"
#include "shredlab/rng.hpp"

namespace shredlab {

namespace {

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

}  // namespace

RomBasis rsvd(const Eigen::MatrixXd& a, const RsvdOptions& options) {
  const auto m = static_cast<std::size_t>(a.rows());
  const auto n = static_cast<std::size_t>(a.cols());
  const std::size_t smallest = std::min(m, n);
  if (options.rank == 0) throw ConfigError("rsvd: rank must be >= 1");
  if (options.rank > smallest) {
    throw ConfigError("rsvd: rank " + std::to_string(options.rank) + " exceeds min(m, n) = " +
                      std::to_string(smallest));
  }
  const std::size_t sketch = std::min(options.rank + options.oversample, smallest);

  Rng rng(options.seed);
  Eigen::MatrixXd omega(n, sketch);
  for (Eigen::Index j = 0; j < omega.cols(); ++j) {
    for (Eigen::Index i = 0; i < omega.rows(); ++i) omega(i, j) = rng.normal();
  }

  Eigen::MatrixXd q = orthonormal_basis(a * omega);
  for (std::size_t it = 0; it < options.n_power_iters; ++it) {
    const Eigen::MatrixXd z = orthonormal_basis(a.transpose() * q);
    q = orthonormal_basis(a * z);
  }

  const Eigen::MatrixXd b = q.transpose() * a;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU);
  const auto r = static_cast<Eigen::Index>(options.rank);

  RomBasis basis;
  basis.rank = options.rank;
  basis.modes = q * svd.matrixU().leftCols(r);
  basis.singular_values = svd.singularValues().head(r);
  return basis;
}

std::vector<RomBasis> fit_rom(const SpatioTemporalField& field, std::size_t n_fields,
                              const RsvdOptions& options) {
  const std::size_t cells = field.n_cells();
  if (n_fields == 0 || cells % n_fields != 0) {
    throw ConfigError("fit_rom: n_cells " + std::to_string(cells) + " not divisible into " +
                      std::to_string(n_fields) + " fields");
  }
  const std::size_t per = cells / n_fields;
  std::vector<RomBasis> bases;
  bases.reserve(n_fields);
  for (std::size_t f = 0; f < n_fields; ++f) {
    Eigen::MatrixXd snapshot(per, field.n_time);
    for (std::size_t t = 0; t < field.n_time; ++t) {
      for (std::size_t c = 0; c < per; ++c) snapshot(c, t) = field.at(t, f * per + c);
    }
    RsvdOptions opt = options;
    opt.seed = options.seed + f;
    bases.push_back(rsvd(snapshot, opt));
  }
  return bases;
}

std::size_t rom_dimension(std::span<const RomBasis> bases) {
  std::size_t d = 0;
  for (const auto& b : bases) d += b.rank;
  return d;
}

SpatioTemporalField rom_encode(const SpatioTemporalField& field, std::span<const RomBasis> bases) {
  std::size_t cells_expected = 0;
  for (const auto& b : bases) cells_expected += static_cast<std::size_t>(b.modes.rows());
  if (bases.empty() || cells_expected != field.n_cells()) {
    throw ConfigError("rom_encode: field has " + std::to_string(field.n_cells()) +
                      " cells but bases cover " + std::to_string(cells_expected));
  }
  SpatioTemporalField out =
      SpatioTemporalField::zeros(field.name + ":rom", {rom_dimension(bases)}, field.n_time, field.dt);
  std::size_t cell0 = 0;
  std::size_t coeff0 = 0;
  for (const auto& b : bases) {
    const auto per = static_cast<std::size_t>(b.modes.rows());
    Eigen::VectorXd x(per);
    for (std::size_t t = 0; t < field.n_time; ++t) {
      for (std::size_t c = 0; c < per; ++c) x(static_cast<Eigen::Index>(c)) = field.at(t, cell0 + c);
      const Eigen::VectorXd coeff = b.modes.transpose() * x;
      for (std::size_t r = 0; r < b.rank; ++r) {
        out.at(t, coeff0 + r) = static_cast<float>(coeff(static_cast<Eigen::Index>(r)));
      }
    }
    cell0 += per;
    coeff0 += b.rank;
  }
  return out;
}

SpatioTemporalField rom_decode(const SpatioTemporalField& coeffs, std::span<const RomBasis> bases,
                               const std::vector<std::size_t>& grid_dims) {
  if (bases.empty() || coeffs.n_cells() != rom_dimension(bases)) {
    throw ConfigError("rom_decode: coefficient width " + std::to_string(coeffs.n_cells()) +
                      " does not match ROM dimension " + std::to_string(rom_dimension(bases)));
  }
  SpatioTemporalField out = SpatioTemporalField::zeros(coeffs.name, grid_dims, coeffs.n_time, coeffs.dt);
  std::size_t cells_expected = 0;
  for (const auto& b : bases) cells_expected += static_cast<std::size_t>(b.modes.rows());
  if (cells_expected != out.n_cells()) throw ConfigError("rom_decode: grid_dims do not match bases");

  std::size_t cell0 = 0;
  std::size_t coeff0 = 0;
  for (const auto& b : bases) {
    const auto per = static_cast<std::size_t>(b.modes.rows());
    Eigen::VectorXd c(b.rank);
    for (std::size_t t = 0; t < coeffs.n_time; ++t) {
      for (std::size_t r = 0; r < b.rank; ++r) c(static_cast<Eigen::Index>(r)) = coeffs.at(t, coeff0 + r);
      const Eigen::VectorXd x = b.modes * c;
      for (std::size_t k = 0; k < per; ++k) out.at(t, cell0 + k) = static_cast<float>(x(static_cast<Eigen::Index>(k)));
    }
    cell0 += per;
    coeff0 += b.rank;
  }
  return out;
}

}  // namespace shredlab
