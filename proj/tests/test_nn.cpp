#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "shredlab/errors.hpp"
#include "shredlab/nn/checkpoint.hpp"
#include "shredlab/nn/grad_check.hpp"
#include "shredlab/nn/layers.hpp"
#include "shredlab/nn/tape.hpp"
#include "support.hpp"

using namespace shredlab;
using namespace shredlab::nn;
using testing::random_matrix;

namespace {

constexpr double kTol = 1e-4;

GradCheckReport check_unary(const std::function<Var(Tape<double>&, Var)>& op, Eigen::Index rows, Eigen::Index cols,
                            std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  ParamStore<double> ps(seed);
  Rng rng(seed);
  Block<double> block = [&](Tape<double>& t, std::span<const Var> in) { return op(t, in[0]); };
  GradCheckOptions opts;
  opts.seed = seed;
  return grad_check(block, ps, {random_matrix(rows, cols, rng, lo, hi)}, opts);
}

}  // namespace

TEST_CASE("rng streams are reproducible and sub-seeds differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const SeedSet s = derive_seeds(7);
  CHECK(s.data != s.init);
  CHECK(s.init != s.shuffle);
  Rng u(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("affine identity and bias broadcast") {
  Rng rng(1);
  Tape<double> t;
  const Matrix<double> x = random_matrix(3, 2, rng);
  Var xv = t.constant(x);
  Var y = affine(t, xv, t.constant(Matrix<double>::Identity(2, 2)), t.constant(Matrix<double>::Zero(1, 2)));
  CHECK(testing::max_abs_diff(t.value(y), x) == 0.0);

  Matrix<double> b(1, 4);
  b << 1, 2, 3, 4;
  Var z = affine(t, t.constant(Matrix<double>::Zero(3, 2)), t.constant(random_matrix(2, 4, rng)), t.constant(b));
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(testing::max_abs_diff(t.value(z).row(r), b) == 0.0);
}

TEST_CASE("affine gradient matches finite differences over 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore<double> ps(seed);
    ps.add("w", 2, 4, Init::uniform_fan_in);
    ps.add("b", 1, 4, Init::uniform_fan_in);
    Rng rng(seed + 100);
    Block<double> block = [&](Tape<double>& t, std::span<const Var> in) {
      return affine(t, in[0], t.param(ps.get("w")), t.param(ps.get("b")));
    };
    GradCheckOptions opts;
    opts.seed = seed;
    const auto rep = grad_check(block, ps, {random_matrix(3, 2, rng)}, opts);
    INFO(rep.summary());
    CHECK(rep.passed);
    CHECK(rep.max_error() < kTol);
  }
}

TEST_CASE("planted backward fault is caught") {
  ParamStore<double> ps(0);
  Block<double> doubled = [](Tape<double>& t, std::span<const Var> in) {
    Var x = in[0];
    return t.custom({x}, t.value(x), [x](Tape<double>& tt, const Matrix<double>& g) { tt.accumulate(x, 2.0 * g); });
  };
  Rng rng(5);
  const auto rep = grad_check(doubled, ps, {random_matrix(3, 3, rng)});
  CHECK_FALSE(rep.passed);
  CHECK(rep.max_error() == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("row_softmax values") {
  Tape<double> t;
  Matrix<double> x(2, 2);
  x << 3, 3, 1000, 0;
  const Matrix<double>& y = t.value(t.row_softmax(t.constant(x)));
  CHECK(y(0, 0) == doctest::Approx(0.5));
  CHECK(y(0, 1) == doctest::Approx(0.5));
  CHECK(y(1, 0) == doctest::Approx(1.0));
  CHECK(y(1, 1) == doctest::Approx(0.0));
  CHECK(std::isfinite(y(1, 1)));

  Matrix<double> bad(1, 2);
  bad << std::nan(""), 0.0;
  CHECK_THROWS_AS(t.row_softmax(t.constant(bad)), NumericalError);
}

TEST_CASE("row_softmax rows sum to one for random inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Tape<double> t;
    const double scale = std::pow(10.0, static_cast<double>(seed % 5));
    const Matrix<double>& y = t.value(t.row_softmax(t.constant(random_matrix(6, 6, rng, -scale, scale))));
    for (Eigen::Index r = 0; r < y.rows(); ++r) CHECK(std::abs(y.row(r).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm closed forms and row statistics") {
  Tape<double> t;
  Var g = t.constant(Matrix<double>::Ones(1, 2));
  Var b = t.constant(Matrix<double>::Zero(1, 2));
  Matrix<double> x(2, 2);
  x << -1, 1, 4, 4;
  const Matrix<double>& y = t.value(t.layer_norm(t.constant(x), g, b));
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y(0, 0) == doctest::Approx(-s).epsilon(1e-12));
  CHECK(y(0, 1) == doctest::Approx(s).epsilon(1e-12));
  CHECK(y(1, 0) == 0.0);
  CHECK(y(1, 1) == 0.0);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Tape<double> tt;
    const Matrix<double> in = random_matrix(5, 8, rng, -3, 3);
    const Matrix<double>& out = tt.value(tt.layer_norm(tt.constant(in), tt.constant(Matrix<double>::Ones(1, 8)),
                                                       tt.constant(Matrix<double>::Zero(1, 8))));
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double mean = out.row(r).mean();
      const double var = (out.row(r).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("activation values") {
  Tape<double> t;
  Matrix<double> x(1, 3);
  x << -3, 0, 3;
  Var v = t.constant(x);
  CHECK(t.value(t.relu(v))(0, 0) == 0.0);
  CHECK(t.value(t.relu(v))(0, 2) == 3.0);
  CHECK(t.value(t.sigmoid(v))(0, 1) == 0.5);
  CHECK(t.value(t.tanh(v))(0, 1) == 0.0);
}

TEST_CASE("primitive gradients match finite differences over 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    CHECK(check_unary([](Tape<double>& t, Var x) { return t.row_softmax(x); }, 4, 4, seed).passed);
    CHECK(check_unary([](Tape<double>& t, Var x) { return t.sigmoid(x); }, 3, 5, seed).passed);
    CHECK(check_unary([](Tape<double>& t, Var x) { return t.tanh(x); }, 3, 5, seed).passed);
    CHECK(check_unary([](Tape<double>& t, Var x) { return t.relu(x); }, 3, 5, seed).passed);
    CHECK(check_unary([](Tape<double>& t, Var x) { return t.transpose(t.matmul_nt(x, x)); }, 3, 2, seed).passed);
    CHECK(check_unary(
              [](Tape<double>& t, Var x) {
                Var cols[2] = {t.slice_cols(x, 2, 2), t.slice_cols(x, 0, 1)};
                Var rows[2] = {t.concat_cols(cols), t.slice_cols(x, 1, 3)};
                return t.concat_rows(rows);
              },
              3, 4, seed)
              .passed);
    CHECK(check_unary([](Tape<double>& t, Var x) { return t.mul(t.add_scalar(t.scale(x, 2.0), 1.0), t.sub(t.tanh(x), t.scale(t.transpose(t.transpose(x)), 0.5))); },
                      2, 3, seed)
              .passed);

    ParamStore<double> ps(seed);
    ps.add("g", 1, 6, Init::uniform_fan_in);
    ps.add("b", 1, 6, Init::uniform_fan_in);
    Block<double> ln = [&](Tape<double>& t, std::span<const Var> in) {
      return t.layer_norm(in[0], t.param(ps.get("g")), t.param(ps.get("b")));
    };
    Rng rng(seed);
    GradCheckOptions opts;
    opts.seed = seed;
    const auto rep = grad_check(ln, ps, {random_matrix(4, 6, rng, -2, 2)}, opts);
    INFO(rep.summary());
    CHECK(rep.passed);
  }
}

TEST_CASE("zero_grad then backward equals a fresh backward; gradients accumulate otherwise") {
  ParamStore<double> ps(3);
  ps.add("w", 3, 2, Init::uniform_fan_in);
  Rng rng(9);
  const Matrix<double> x = random_matrix(4, 3, rng);
  auto run = [&] {
    Tape<double> t;
    Var y = t.sum_squares(t.tanh(t.matmul(t.constant(x), t.param(ps.get("w")))));
    t.backward(y);
  };
  run();
  const Matrix<double> once = ps.get("w").grad;
  run();
  CHECK(testing::max_abs_diff(ps.get("w").grad, 2.0 * once) < 1e-12);
  ps.zero_grad();
  run();
  CHECK(testing::max_abs_diff(ps.get("w").grad, once) == 0.0);
}

TEST_CASE("tape is single use") {
  Tape<double> t;
  Var x = t.input(Matrix<double>::Ones(1, 1));
  Var y = t.sum(x);
  t.backward(y);
  CHECK_THROWS_AS(t.backward(y), ConfigError);
}

TEST_CASE("masked parameters get masked gradients") {
  ParamStore<double> ps(1);
  auto& p = ps.add("xi", 2, 2, Init::uniform_fan_in);
  p.mask = Matrix<double>::Ones(2, 2);
  (*p.mask)(0, 1) = 0.0;
  Tape<double> t;
  t.backward(t.sum_squares(t.param(p)));
  CHECK(p.grad(0, 1) == 0.0);
  CHECK(p.grad(0, 0) != 0.0);
}

TEST_CASE("parameter init follows the documented ranges and is seed-deterministic") {
  ParamStore<double> a(11), b(11);
  const auto& w = a.add("w", 16, 8, Init::uniform_fan_in);
  b.add("w", 16, 8, Init::uniform_fan_in);
  CHECK(w.value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(16.0));
  CHECK(testing::max_abs_diff(w.value, b.get("w").value) == 0.0);
  CHECK(a.add("b", 1, 8, Init::zeros).value.isZero());
  CHECK(a.add("g", 1, 8, Init::ones).value.isOnes());
  CHECK_THROWS_AS(a.add("w", 1, 1, Init::zeros), ConfigError);
  CHECK(a.n_scalars() == 16 * 8 + 16);
}

TEST_CASE("checkpoint round trip is exact, including masks") {
  ParamStore<double> ps(21);
  ps.add("a", 3, 4, Init::uniform_fan_in);
  auto& xi = ps.add("xi", 2, 3, Init::uniform_fan_in);
  xi.mask = Matrix<double>::Ones(2, 3);
  (*xi.mask)(1, 2) = 0.0;
  xi.apply_mask();
  const auto bytes = encode_checkpoint(ps, {{"note", "x"}});
  const Checkpoint ck = decode_checkpoint(bytes);
  CHECK(ck.dtype == "f64");
  CHECK(ck.init_seed == 21);
  CHECK(ck.meta.at("note") == "x");

  ParamStore<double> other(21);
  other.add("a", 3, 4, Init::zeros);
  other.add("xi", 2, 3, Init::zeros);
  restore_params(other, ck);
  CHECK(testing::max_abs_diff(other.get("a").value, ps.get("a").value) == 0.0);
  CHECK(testing::max_abs_diff(other.get("xi").value, ps.get("xi").value) == 0.0);
  REQUIRE(other.get("xi").mask);
  CHECK((*other.get("xi").mask)(1, 2) == 0.0);
  CHECK(encode_checkpoint(other, {{"note", "x"}}) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);

  ParamStore<double> wrong(0);
  wrong.add("a", 4, 3, Init::zeros);
  wrong.add("xi", 2, 3, Init::zeros);
  CHECK_THROWS_AS(restore_params(wrong, ck), ConfigError);
}

TEST_CASE("float checkpoints store 32-bit payloads") {
  ParamStore<float> ps(2);
  ps.add("a", 5, 5, Init::uniform_fan_in);
  const auto b32 = encode_checkpoint(ps, nlohmann::json::object());
  const Checkpoint ck = decode_checkpoint(b32);
  CHECK(ck.dtype == "f32");
  CHECK(ck.at("a").value.cast<float>().isApprox(ps.get("a").value));
}
