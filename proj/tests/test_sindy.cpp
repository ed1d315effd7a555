#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shredlab/errors.hpp"
#include "shredlab/nn/grad_check.hpp"
#include "shredlab/sindy.hpp"
#include "sst_fixture.hpp"
#include "support.hpp"

using namespace shredlab;
using namespace shredlab::sindy;
using nn::Block;
using nn::GradCheckOptions;
using nn::Init;
using nn::ParamStore;
using testing::max_abs_diff;
using testing::random_matrix;
using M = Matrix<double>;

namespace {

std::size_t choose(std::size_t n, std::size_t r) {
  std::size_t out = 1;
  for (std::size_t i = 1; i <= r; ++i) out = out * (n - r + i) / i;
  return out;
}

// ℓ = bias + Σ_d C(k+d-1, d) + 2·K·k
std::size_t width_formula(const LibrarySpec& s, std::size_t k) {
  std::size_t w = s.include_bias ? 1 : 0;
  for (int d = 1; d <= s.poly_order; ++d) w += choose(k + static_cast<std::size_t>(d) - 1, static_cast<std::size_t>(d));
  return w + 2 * static_cast<std::size_t>(s.fourier_k) * k;
}

std::string line_of(const std::string& text, const std::string& prefix, int occurrence = 0) {
  std::size_t pos = 0;
  for (int i = 0; i <= occurrence; ++i) {
    pos = text.find(prefix, i == 0 ? 0 : pos + 1);
    if (pos == std::string::npos) return {};
  }
  return text.substr(pos, text.find('\n', pos) - pos);
}

}  // namespace

TEST_CASE("library column values") {
  M z(1, 2);
  z << 2, 3;
  CHECK(eval_library(z, {true, 1, 0}) == (M(1, 3) << 1, 2, 3).finished());

  M w(1, 2);
  w << 2, 5;
  CHECK(eval_library(w, {true, 2, 0}) == (M(1, 6) << 1, 2, 5, 4, 10, 25).finished());
  const auto terms = library_terms({true, 2, 0}, 2);
  std::vector<std::string> names;
  for (const auto& t : terms) names.push_back(t.name());
  CHECK(names == std::vector<std::string>{"1", "z₀", "z₁", "z₀^2", "z₀z₁", "z₁^2"});

  CHECK(eval_library(M(M::Zero(1, 1)), {true, 1, 1}) == (M(1, 4) << 1, 0, 0, 1).finished());

  M f(1, 2);
  f << 0.3, -0.7;
  const M th = eval_library(f, {false, 1, 2});
  const M want = (M(1, 10) << 0.3, -0.7, std::sin(0.3), std::sin(-0.7), std::cos(0.3), std::cos(-0.7), std::sin(0.6),
                  std::sin(-1.4), std::cos(0.6), std::cos(-1.4))
                     .finished();
  CHECK(max_abs_diff(th, want) < 1e-15);
}

TEST_CASE("library width matches the closed-form count across specs") {
  for (bool bias : {false, true})
    for (int p = 1; p <= 4; ++p)
      for (int fk = 0; fk <= 3; ++fk)
        for (std::size_t k = 1; k <= 6; ++k) {
          const LibrarySpec s{bias, p, fk};
          const std::size_t want = width_formula(s, k);
          CHECK(library_width(s, k) == want);
          Rng rng(k);
          CHECK(static_cast<std::size_t>(eval_library(random_matrix(3, static_cast<Eigen::Index>(k), rng), s).cols()) == want);
        }
  CHECK_THROWS_AS(LibrarySpec({true, 0, 0}).validate(), ConfigError);
}

TEST_CASE("library gradient") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore<double> ps(seed);
    Block<double> block = [](nn::Tape<double>& t, std::span<const Var> in) {
      return eval_library(t, in[0], {true, 3, 2});
    };
    Rng rng(seed);
    GradCheckOptions opts;
    opts.seed = seed;
    const auto rep = nn::grad_check(block, ps, {random_matrix(3, 3, rng)}, opts);
    INFO(rep.summary());
    CHECK(rep.passed);
  }
}

TEST_CASE("Euler rollout closed forms") {
  const LibrarySpec lin{false, 1, 0};
  const M out = euler_rollout<double>(M::Ones(1, 1), -M::Identity(1, 1), lin, 0.1, 5);
  CHECK(std::abs(out(0, 0) - std::pow(0.9, 5)) < 1e-12);
  CHECK(std::abs(out(0, 0) - 0.59049) < 1e-12);

  Rng rng(1);
  const M z = random_matrix(4, 3, rng);
  CHECK(euler_rollout<double>(z, M::Zero(4, 3), {true, 1, 0}, 0.2, 5) == z);
  CHECK_THROWS_AS(euler_rollout<double>(z, M::Zero(3, 3), {true, 1, 0}, 0.2, 5), ConfigError);
  CHECK_THROWS_AS(euler_rollout<double>(z, M::Zero(4, 3), {true, 1, 0}, 0.2, 0), ConfigError);
}

TEST_CASE("cubic scalar ODE against a step-by-step scalar oracle") {
  // ż = 0.3 - 0.5 z + 0.2 z² - 0.7 z³
  const double c[4] = {0.3, -0.5, 0.2, -0.7};
  M xi(4, 1);
  xi << c[0], c[1], c[2], c[3];
  for (double z0 : {-1.2, -0.3, 0.0, 0.4, 1.1}) {
    double z = z0;
    const double h = 0.05;
    for (int i = 0; i < 4; ++i) z = z + h * (c[0] + c[1] * z + c[2] * z * z + c[3] * z * z * z);
    const M got = euler_rollout<double>(M::Constant(1, 1, z0), xi, {true, 3, 0}, h, 4);
    CHECK(std::abs(got(0, 0) - z) < 1e-12);
  }
}

TEST_CASE("Euler rollout is first-order accurate") {
  const LibrarySpec lin{false, 1, 0};
  const double exact = std::exp(-1.0);
  double prev = 0.0;
  for (int k = 8; k <= 256; k *= 2) {
    const double got = euler_rollout<double>(M::Ones(1, 1), -M::Identity(1, 1), lin, 1.0 / k, k)(0, 0);
    const double err = std::abs(got - exact);
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("divergent rollout names the sub-step") {
  M xi(3, 1);
  xi << 0.0, 0.0, 1e200;
  try {
    euler_rollout<double>(M::Constant(1, 1, 1e200), xi, {true, 2, 0}, 1.0, 5);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("sub-step 1") != std::string::npos);
  }
}

TEST_CASE("SINDy loss cases") {
  const LibrarySpec spec{true, 1, 0};
  Rng rng(3);
  const M xi = random_matrix(4, 3, rng, -0.5, 0.5);
  M traj(6, 3);
  traj.row(0) = random_matrix(1, 3, rng);
  for (Eigen::Index t = 1; t < 6; ++t) traj.row(t) = euler_rollout<double>(traj.row(t - 1), xi, spec, 0.2, 5);
  CHECK(sindy_loss_value<double>(traj, xi, spec, 0.2, 5, 0.0) < 1e-10);

  const M flat = M::Constant(5, 3, 0.7);
  CHECK(sindy_loss_value<double>(flat, M::Zero(4, 3), spec, 0.2, 5, 0.0) == 0.0);
  CHECK(sindy_loss_value<double>(flat, xi, spec, 0.2, 5, 0.5) == doctest::Approx(0.5 * xi.squaredNorm() + sindy_loss_value<double>(flat, xi, spec, 0.2, 5, 0.0)));

  // mean over transitions of the squared residual
  M two(3, 1);
  two << 1.0, 2.0, 4.0;
  const double l = sindy_loss_value<double>(two, M::Zero(2, 1), spec, 0.2, 5, 0.0);
  CHECK(l == doctest::Approx((1.0 + 4.0) / 2.0));

  CHECK_THROWS_AS(sindy_loss_value<double>(M::Zero(1, 3), M::Zero(4, 3), spec, 0.2, 5, 0.0), ConfigError);
}

TEST_CASE("SINDy loss gradient with respect to coefficients and latents") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const LibrarySpec spec{true, 2, seed % 2 == 0 ? 0 : 1};
    ParamStore<double> ps(seed);
    ps.add("xi", static_cast<Eigen::Index>(library_width(spec, 3)), 3, Init::uniform_fan_in);
    Block<double> block = [&](nn::Tape<double>& t, std::span<const Var> in) {
      return sindy_loss(t, in[0], t.param(ps.get("xi")), spec, 0.2, 5, 0.01);
    };
    Rng rng(seed);
    GradCheckOptions opts;
    opts.seed = seed;
    const auto rep = nn::grad_check(block, ps, {random_matrix(6, 3, rng, -0.8, 0.8)}, opts);
    INFO(rep.summary());
    CHECK(rep.passed);
  }
}

TEST_CASE("SINDy loss is invariant to relabelling latent dimensions") {
  const LibrarySpec spec{true, 1, 0};
  const std::vector<Eigen::Index> perm = {2, 0, 1};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const M traj = random_matrix(7, 3, rng), xi = random_matrix(4, 3, rng, -0.5, 0.5);
    M tp(7, 3), xp(4, 3);
    for (Eigen::Index a = 0; a < 3; ++a) tp.col(a) = traj.col(perm[static_cast<std::size_t>(a)]);
    // row 0 is the bias; rows 1..3 follow the latent permutation, columns likewise
    for (Eigen::Index a = 0; a < 3; ++a) {
      xp(0, a) = xi(0, perm[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < 3; ++b) xp(1 + b, a) = xi(1 + perm[static_cast<std::size_t>(b)], perm[static_cast<std::size_t>(a)]);
    }
    CHECK(sindy_loss_value<double>(tp, xp, spec, 0.2, 5, 0.01) ==
          doctest::Approx(sindy_loss_value<double>(traj, xi, spec, 0.2, 5, 0.01)).epsilon(1e-12));
  }
}

TEST_CASE("prune threshold cases") {
  M xi(2, 2);
  xi << 0.3, 0.001, -0.5, 0.04;
  const auto p = prune(SindyCoefficients::dense(xi), 0.05);
  CHECK(p.mask == (M(2, 2) << 1, 0, 1, 0).finished());
  CHECK(p.xi == (M(2, 2) << 0.3, 0, -0.5, 0).finished());
  CHECK(prune(SindyCoefficients::dense(xi), 0.0).mask == M::Ones(2, 2));
  CHECK_THROWS_AS(prune(SindyCoefficients::dense(xi), -1.0), ConfigError);
}

TEST_CASE("prune is idempotent and monotone") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto c = SindyCoefficients::dense(random_matrix(6, 4, rng, -0.2, 0.2));
    const auto once = prune(c, 0.05);
    const auto twice = prune(once, 0.05);
    CHECK(once.xi == twice.xi);
    CHECK(once.mask == twice.mask);

    // a pruned entry never revives, even if its value is pushed back up
    auto bumped = once;
    bumped.xi.array() += 1.0;
    bumped.xi = bumped.xi.cwiseProduct(bumped.mask);
    const auto again = prune(bumped, 0.05);
    CHECK((again.mask.array() <= once.mask.array()).all());
    for (Eigen::Index i = 0; i < once.mask.size(); ++i)
      if (once.mask.data()[i] == 0.0) CHECK(again.xi.data()[i] == 0.0);
  }
}

TEST_CASE("symbolic form of the two-layer system") {
  const auto sys = testing::sst_symbolic();
  const std::string text = format_system(sys);
  CHECK(text.rfind("L₀\n  H₀\n    ż₀ = -0.699·z₀ + 0.275·z₂\n", 0) == 0);
  CHECK(line_of(text, "ż₁") == "ż₁ = 0.539 -0.382·z₀ + 0.746·z₁ -0.257·z₂");
  CHECK(line_of(text, "ż₂", 2) == "ż₂ = -0.698 + 0.160·z₀ -0.123·z₂");
  CHECK(text.find("L₁\n") != std::string::npos);

  const auto parsed = parse_system(text);
  REQUIRE(parsed.heads.size() == 4);
  const auto fixture = testing::sst_system();
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(parsed.heads[i].layer == fixture[i].layer);
    CHECK(parsed.heads[i].head == fixture[i].head);
    const auto [xi, mask] = head_to_xi(parsed.heads[i], testing::sst_library(), 3);
    CHECK(xi == fixture[i].xi);
    CHECK(mask == fixture[i].mask);
  }
  CHECK(format_system(parsed) == text);

  const auto from_json = system_from_json(system_to_json(sys));
  CHECK(format_system(from_json) == text);
  for (std::size_t i = 0; i < 4; ++i) CHECK(head_to_xi(from_json.heads[i], testing::sst_library(), 3).first == fixture[i].xi);
}

TEST_CASE("all-pruned head prints zero right-hand sides") {
  const auto h = make_head_system(0, 0, M::Zero(4, 3), M::Zero(4, 3), {true, 1, 0});
  SymbolicSystem sys{{h}, 3};
  const std::string text = format_system(sys);
  CHECK(text == "L₀\n  H₀\n    ż₀ = 0\n    ż₁ = 0\n    ż₂ = 0\n");
  const auto back = parse_system(text);
  CHECK(head_to_xi(back.heads[0], {true, 1, 0}, 3).second.isZero());
}

TEST_CASE("printed coefficients round-trip at three decimals for random systems") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const LibrarySpec spec{seed % 2 == 0, 1 + static_cast<int>(seed % 2), static_cast<int>(seed % 3 == 0)};
    const auto k = static_cast<Eigen::Index>(2 + seed % 3);
    const auto ell = static_cast<Eigen::Index>(library_width(spec, static_cast<std::size_t>(k)));
    auto c = prune(SindyCoefficients::dense(random_matrix(ell, k, rng, -3, 3)), 0.5);
    SymbolicSystem sys{{make_head_system(1, 2, c.xi, c.mask, spec)}, 3};
    const auto back = parse_system(format_system(sys));
    const auto [xi, mask] = head_to_xi(back.heads[0], spec, static_cast<std::size_t>(k));
    CHECK(mask == c.mask);
    CHECK(max_abs_diff(xi, c.xi) <= 0.0005 + 1e-12);
  }
}

TEST_CASE("parser rejects malformed text") {
  CHECK_THROWS_AS(parse_system("ż₀ = 1.0\n"), ConfigError);
  CHECK_THROWS_AS(parse_system("H₀\n"), ConfigError);
  CHECK_THROWS_AS(parse_system("L₀\n  H₀\n    nonsense\n"), ConfigError);
  SymbolicSystem bad = parse_system("L₀\n  H₀\n    ż₀ = 0.5·w₉\n");
  CHECK_THROWS_AS(head_to_xi(bad.heads[0], {true, 1, 0}, 1), ConfigError);
}
