#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "shredlab/errors.hpp"
#include "shredlab/model/encoders.hpp"
#include "shredlab/nn/grad_check.hpp"
#include "shredlab/sindy.hpp"
#include "support.hpp"

using namespace shredlab;
using namespace shredlab::model;
using nn::Block;
using nn::GradCheckOptions;
using nn::Init;
using testing::max_abs_diff;
using testing::random_matrix;
using M = Matrix<double>;

namespace {

// Plain-Eigen reference for per-head softmax(Q Kᵀ/√k) V.
std::vector<M> attention_oracle(const M& x, const M& wq, const M& wk, const M& wv, int n_heads) {
  const Eigen::Index d = wq.cols(), k = d / n_heads, n = x.rows();
  const M q = x * wq, kk = x * wk, v = x * wv;
  std::vector<M> out;
  for (int h = 0; h < n_heads; ++h) {
    M o = M::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(n));
      double mx = -1e300;
      for (Eigen::Index j = 0; j < n; ++j) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) dot += q(i, h * k + c) * kk(j, h * k + c);
        s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(k));
        mx = std::max(mx, s[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index c = 0; c < k; ++c) o(i, c) += s[static_cast<std::size_t>(j)] / z * v(j, h * k + c);
    }
    out.push_back(o);
  }
  return out;
}

M hconcat(const std::vector<M>& parts) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  M out(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}

// [1 | T] for a bias + linear library.
M linear_theta(const M& t) {
  M th(t.rows(), t.cols() + 1);
  th.col(0).setOnes();
  th.rightCols(t.cols()) = t;
  return th;
}

M layer_norm_oracle(const M& x) {
  M y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    y.row(r) = (x.row(r).array() - mean) / std::sqrt(var + 1e-5);
  }
  return y;
}

sindy::LibrarySpec linear_library() { return {true, 1, 0}; }

EncoderConfig small_config(EncoderVariant v, int layers = 1, int d = 4, int heads = 2) {
  EncoderConfig c;
  c.variant = v;
  c.n_layers = layers;
  c.d_model = d;
  c.n_heads = heads;
  c.d_ff = 5;
  c.sindy.library = linear_library();
  return c;
}

M run_encode(ParamStore<double>& ps, const EncoderConfig& cfg, const M& window,
             std::vector<AttentionTrace>* traces = nullptr) {
  nn::Tape<double> t(false);
  auto vars = bind_encoder(t, ps, cfg);
  return t.value(encode(t, vars, cfg, t.constant(window), traces));
}

void add_gates(ParamStore<double>& ps, Eigen::Index in, Eigen::Index hidden, Eigen::Index gates) {
  ps.add("w_x", in, gates * hidden, Init::uniform_fan_in);
  ps.add("w_h", hidden, gates * hidden, Init::uniform_fan_in);
  ps.add("b_x", 1, gates * hidden, Init::uniform_fan_in);
  ps.add("b_h", 1, gates * hidden, Init::uniform_fan_in);
}

RecurrentVars bind_gates(nn::Tape<double>& t, ParamStore<double>& ps) {
  return {t.param(ps.get("w_x")), t.param(ps.get("w_h")), t.param(ps.get("b_x")), t.param(ps.get("b_h"))};
}

}  // namespace

TEST_CASE("GRU with zero weights halves the previous state") {
  nn::Tape<double> t;
  Rng rng(1);
  const M h = random_matrix(2, 3, rng);
  RecurrentVars p{t.constant(M::Zero(4, 9)), t.constant(M::Zero(3, 9)), t.constant(M::Zero(1, 9)),
                  t.constant(M::Zero(1, 9))};
  Var out = gru_step(t, t.constant(random_matrix(2, 4, rng)), t.constant(h), p);
  CHECK(max_abs_diff(t.value(out), 0.5 * h) < 1e-15);
  RecurrentVars bad{p.w_x, t.constant(M::Zero(3, 8)), p.b_x, p.b_h};
  CHECK_THROWS_AS(gru_step(t, t.constant(M::Zero(2, 4)), t.constant(h), bad), ConfigError);
}

TEST_CASE("LSTM with a saturated forget gate keeps its cell") {
  nn::Tape<double> t;
  Rng rng(2);
  const M c = random_matrix(2, 3, rng);
  M b = M::Zero(1, 12);
  b.middleCols(3, 3).setConstant(10.0);
  RecurrentVars p{t.constant(M::Zero(4, 12)), t.constant(M::Zero(3, 12)), t.constant(b), t.constant(M::Zero(1, 12))};
  auto [h1, c1] = lstm_step(t, t.constant(random_matrix(2, 4, rng)), t.constant(random_matrix(2, 3, rng)),
                            t.constant(c), p);
  CHECK(max_abs_diff(t.value(c1), c) < 1e-4);
}

TEST_CASE("BPTT over 5 steps matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    for (Eigen::Index gates : {3, 4}) {
      ParamStore<double> ps(seed);
      add_gates(ps, 2, 3, gates);
      Block<double> block = [&](nn::Tape<double>& t, std::span<const Var> in) {
        const auto p = bind_gates(t, ps);
        Var h = t.constant(M::Zero(1, 3));
        Var c = t.constant(M::Zero(1, 3));
        for (Eigen::Index s = 0; s < 5; ++s) {
          Var x = t.slice_rows(in[0], s, 1);
          if (gates == 3) {
            h = gru_step(t, x, h, p);
          } else {
            std::tie(h, c) = lstm_step(t, x, h, c, p);
          }
        }
        return h;
      };
      Rng rng(seed);
      GradCheckOptions opts;
      opts.seed = seed;
      const auto rep = nn::grad_check(block, ps, {random_matrix(5, 2, rng)}, opts);
      INFO(rep.summary());
      CHECK(rep.passed);
    }
  }
}

TEST_CASE("recurrent encode: one step from the zero state; depth changes the output") {
  Rng rng(3);
  const M window = random_matrix(1, 3, rng);
  auto cfg = small_config(EncoderVariant::gru);
  ParamStore<double> ps(5);
  add_encoder_params(ps, cfg, 3);
  const M z = run_encode(ps, cfg, window);
  REQUIRE(z.rows() == 1);

  nn::Tape<double> t;
  Var lifted = t.add(t.matmul(t.constant(window), t.param(ps.get("encoder.lift.w"))), t.param(ps.get("encoder.lift.b")));
  RecurrentVars p{t.param(ps.get("encoder.layer0.w_x")), t.param(ps.get("encoder.layer0.w_h")),
                  t.param(ps.get("encoder.layer0.b_x")), t.param(ps.get("encoder.layer0.b_h"))};
  Var h = gru_step(t, lifted, t.constant(M::Zero(1, 4)), p);
  CHECK(max_abs_diff(z, t.value(h)) < 1e-14);

  const M w = random_matrix(6, 3, rng);
  for (auto v : {EncoderVariant::gru, EncoderVariant::lstm}) {
    ParamStore<double> one(7), two(7);
    add_encoder_params(one, small_config(v, 1), 3);
    add_encoder_params(two, small_config(v, 2), 3);
    const M a = run_encode(one, small_config(v, 1), w);
    const M b = run_encode(two, small_config(v, 2), w);
    CHECK(a.rows() == 6);
    CHECK(max_abs_diff(a.bottomRows(1), b.bottomRows(1)) > 1e-6);
  }
}

TEST_CASE("single-token attention returns V W_o") {
  Rng rng(4);
  nn::Tape<double> t;
  const M x = random_matrix(1, 4, rng), wv = random_matrix(4, 4, rng), wo = random_matrix(4, 4, rng);
  AttentionVars p{t.constant(random_matrix(4, 4, rng)), t.constant(random_matrix(4, 4, rng)), t.constant(wv),
                  t.constant(wo)};
  CHECK(max_abs_diff(t.value(mhsa(t, t.constant(x), p, 2, false)), x * wv * wo) < 1e-14);
}

TEST_CASE("zero query/key weights give uniform attention") {
  Rng rng(5);
  nn::Tape<double> t;
  const M x = random_matrix(5, 4, rng), wv = random_matrix(4, 4, rng), wo = random_matrix(4, 4, rng);
  AttentionVars p{t.constant(M::Zero(4, 4)), t.constant(M::Zero(4, 4)), t.constant(wv), t.constant(wo)};
  const M out = t.value(mhsa(t, t.constant(x), p, 2, false));
  const M mean_v = (x * wv).colwise().mean();
  for (Eigen::Index r = 0; r < 5; ++r) CHECK(max_abs_diff(out.row(r), mean_v * wo) < 1e-14);
}

TEST_CASE("2-token single-head attention matches hand enumeration") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const M x = random_matrix(2, 2, rng), wq = random_matrix(2, 2, rng), wk = random_matrix(2, 2, rng),
            wv = random_matrix(2, 2, rng), wo = random_matrix(2, 2, rng);
    // by hand: a_ij = exp(q_i·k_j/√2) / Σ_j'
    const M q = x * wq, k = x * wk, v = x * wv;
    M heads(2, 2);
    for (int i = 0; i < 2; ++i) {
      const double s0 = q.row(i).dot(k.row(0)) / std::sqrt(2.0);
      const double s1 = q.row(i).dot(k.row(1)) / std::sqrt(2.0);
      const double a0 = 1.0 / (1.0 + std::exp(s1 - s0));
      heads.row(i) = a0 * v.row(0) + (1.0 - a0) * v.row(1);
    }
    nn::Tape<double> t;
    AttentionVars p{t.constant(wq), t.constant(wk), t.constant(wv), t.constant(wo)};
    CHECK(max_abs_diff(t.value(mhsa(t, t.constant(x), p, 1, false)), heads * wo) < 1e-10);
  }
}

TEST_CASE("multi-head attention matches the oracle and attention rows sum to one") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const M x = random_matrix(6, 6, rng, -2, 2), wq = random_matrix(6, 6, rng), wk = random_matrix(6, 6, rng),
            wv = random_matrix(6, 6, rng);
    nn::Tape<double> t;
    AttentionVars p{t.constant(wq), t.constant(wk), t.constant(wv), std::nullopt};
    AttentionTrace trace;
    const auto heads = attention_heads(t, t.constant(x), p, 3, false, &trace);
    const auto want = attention_oracle(x, wq, wk, wv, 3);
    REQUIRE(heads.size() == 3);
    for (std::size_t h = 0; h < 3; ++h) {
      CHECK(max_abs_diff(t.value(heads[h]), want[h]) < 1e-12);
      CHECK(t.value(heads[h]).cols() * 3 == 6);
      const M& w = t.value(trace.weights[h]);
      for (Eigen::Index r = 0; r < w.rows(); ++r) CHECK(std::abs(w.row(r).sum() - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("causal mask zeroes future keys") {
  Rng rng(6);
  nn::Tape<double> t;
  AttentionVars p{t.constant(random_matrix(4, 4, rng)), t.constant(random_matrix(4, 4, rng)),
                  t.constant(random_matrix(4, 4, rng)), std::nullopt};
  AttentionTrace trace;
  attention_heads(t, t.constant(random_matrix(5, 4, rng)), p, 2, true, &trace);
  const M& w = t.value(trace.weights[0]);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = i + 1; j < 5; ++j) CHECK(w(i, j) < 1e-12);
  CHECK(w(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("transformer layer with zero weights is LayerNorm(LayerNorm(x))") {
  Rng rng(7);
  const M x = random_matrix(5, 4, rng, -2, 2);
  nn::Tape<double> t;
  auto zero = [&](Eigen::Index r, Eigen::Index c) { return t.constant(M::Zero(r, c)); };
  TransformerVars p;
  p.attn = {zero(4, 4), zero(4, 4), zero(4, 4), zero(4, 4)};
  p.ln1_g = t.constant(M::Ones(1, 4));
  p.ln1_b = zero(1, 4);
  p.w_1 = zero(4, 3);
  p.w_2 = zero(3, 4);
  p.ln2_g = t.constant(M::Ones(1, 4));
  p.ln2_b = zero(1, 4);
  const M z = t.value(transformer_layer(t, t.constant(x), p, 2, false));
  CHECK(max_abs_diff(z, layer_norm_oracle(layer_norm_oracle(x))) < 1e-12);
}

TEST_CASE("transformer layer: gradients and row means") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    ParamStore<double> ps(seed);
    for (const char* n : {"w_q", "w_k", "w_v", "w_o"}) ps.add(n, 4, 4, Init::uniform_fan_in);
    ps.add("ln1.g", 1, 4, Init::uniform_fan_in);
    ps.add("ln1.b", 1, 4, Init::uniform_fan_in);
    ps.add("w_1", 4, 6, Init::uniform_fan_in);
    ps.add("w_2", 6, 4, Init::uniform_fan_in);
    ps.add("ln2.g", 1, 4, Init::uniform_fan_in);
    ps.add("ln2.b", 1, 4, Init::uniform_fan_in);
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].value.array() += (ps[i].name.find(".g") != std::string::npos);
    auto bind = [&](nn::Tape<double>& t) {
      auto p = [&](const char* n) { return t.param(ps.get(n)); };
      return TransformerVars{{p("w_q"), p("w_k"), p("w_v"), p("w_o")}, p("ln1.g"), p("ln1.b"), p("w_1"),
                             p("w_2"),                                 p("ln2.g"), p("ln2.b")};
    };
    Block<double> block = [&](nn::Tape<double>& t, std::span<const Var> in) {
      return transformer_layer(t, in[0], bind(t), 2, seed % 2 == 1);
    };
    Rng rng(seed);
    GradCheckOptions opts;
    opts.seed = seed;
    const auto rep = nn::grad_check(block, ps, {random_matrix(4, 4, rng)}, opts);
    INFO(rep.summary());
    CHECK(rep.passed);

    // with unit gain and zero bias the output rows are centred
    ParamStore<double> plain(seed);
    for (const char* n : {"w_q", "w_k", "w_v", "w_o"}) plain.add(n, 4, 4, Init::uniform_fan_in);
    plain.add("ln1.g", 1, 4, Init::ones);
    plain.add("ln1.b", 1, 4, Init::zeros);
    plain.add("w_1", 4, 6, Init::uniform_fan_in);
    plain.add("w_2", 6, 4, Init::uniform_fan_in);
    plain.add("ln2.g", 1, 4, Init::ones);
    plain.add("ln2.b", 1, 4, Init::zeros);
    nn::Tape<double> t;
    auto p = [&](const char* n) { return t.param(plain.get(n)); };
    TransformerVars tv{{p("w_q"), p("w_k"), p("w_v"), p("w_o")}, p("ln1.g"), p("ln1.b"), p("w_1"),
                       p("w_2"),                                 p("ln2.g"), p("ln2.b")};
    const M z = t.value(transformer_layer(t, t.constant(random_matrix(7, 4, rng, -3, 3)), tv, 2, false));
    for (Eigen::Index r = 0; r < z.rows(); ++r) CHECK(std::abs(z.row(r).mean()) < 1e-6);
  }
}

namespace {

struct SaFixture {
  M wq, wk, wv, wff1, wff2;
  std::vector<M> xi;
};

SaFixture sa_fixture(Rng& rng, Eigen::Index d, int heads, Eigen::Index m) {
  const Eigen::Index k = d / heads;
  SaFixture f{random_matrix(d, d, rng), random_matrix(d, d, rng), random_matrix(d, d, rng), random_matrix(d, m, rng),
              random_matrix(m, d, rng), {}};
  for (int h = 0; h < heads; ++h) f.xi.push_back(random_matrix(k + 1, k, rng));
  return f;
}

M sa_run(const SaFixture& f, const M& x, int heads, SindyAttentionOptions opts = {}) {
  opts.library = linear_library();
  nn::Tape<double> t;
  SindyAttentionVars p;
  p.attn = {t.constant(f.wq), t.constant(f.wk), t.constant(f.wv), std::nullopt};
  for (const auto& xi : f.xi) p.xi.push_back(t.constant(xi));
  p.w_ff1 = t.constant(f.wff1);
  p.w_ff2 = t.constant(f.wff2);
  return t.value(sindy_attention_layer(t, t.constant(x), p, heads, opts));
}

}  // namespace

TEST_CASE("SINDy-Attention with zero coefficients outputs zero") {
  Rng rng(8);
  auto f = sa_fixture(rng, 6, 2, 4);
  for (auto& xi : f.xi) xi.setZero();
  CHECK(sa_run(f, random_matrix(5, 6, rng), 2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("SINDy-Attention with the identity embedding reduces to attention and two affine maps") {
  Rng rng(9);
  auto f = sa_fixture(rng, 6, 2, 4);
  for (auto& xi : f.xi) {
    xi.setZero();
    xi.bottomRows(3) = M::Identity(3, 3);
  }
  const M x = random_matrix(5, 6, rng);
  const M heads = hconcat(attention_oracle(x, f.wq, f.wk, f.wv, 2));
  CHECK(max_abs_diff(sa_run(f, x, 2), heads * f.wff1 * f.wff2) < 1e-6);
}

TEST_CASE("2-token 2-head SINDy-Attention matches direct evaluation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto f = sa_fixture(rng, 6, 2, 5);
    const M x = random_matrix(2, 6, rng);
    const auto t_heads = attention_oracle(x, f.wq, f.wk, f.wv, 2);
    std::vector<M> s;
    for (int h = 0; h < 2; ++h) s.push_back(linear_theta(t_heads[static_cast<std::size_t>(h)]) * f.xi[static_cast<std::size_t>(h)]);
    CHECK(max_abs_diff(sa_run(f, x, 2), hconcat(s) * f.wff1 * f.wff2) < 1e-10);

    SindyAttentionOptions euler;
    euler.residual_euler = true;
    euler.h_step = 0.2;
    std::vector<M> se;
    for (int h = 0; h < 2; ++h) se.push_back(t_heads[static_cast<std::size_t>(h)] + 0.2 * s[static_cast<std::size_t>(h)]);
    CHECK(max_abs_diff(sa_run(f, x, 2, euler), hconcat(se) * f.wff1 * f.wff2) < 1e-10);
  }
}

TEST_CASE("SINDy-Attention rejects a coefficient matrix of the wrong width") {
  Rng rng(10);
  auto f = sa_fixture(rng, 6, 2, 4);
  f.xi[1] = M::Zero(5, 3);
  CHECK_THROWS_AS(sa_run(f, random_matrix(2, 6, rng), 2), ConfigError);
}

TEST_CASE("SINDy-Attention gradients, including the coefficients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const bool wrap = seed % 2 == 1;
    ParamStore<double> ps(seed);
    for (const char* n : {"w_q", "w_k", "w_v"}) ps.add(n, 6, 6, Init::uniform_fan_in);
    // bias + linear + one Fourier pair: ℓ = 1 + 3 + 6
    ps.add("xi0", 10, 3, Init::uniform_fan_in);
    ps.add("xi1", 10, 3, Init::uniform_fan_in);
    ps.add("w_ff1", 6, 5, Init::uniform_fan_in);
    ps.add("w_ff2", 5, 6, Init::uniform_fan_in);
    ps.add("ln.g", 1, 6, Init::ones);
    ps.add("ln.b", 1, 6, Init::zeros);
    SindyAttentionOptions opts;
    opts.library = {true, 1, 1};
    opts.wrap_norm = wrap;
    opts.residual_euler = seed % 3 == 0;
    Block<double> block = [&](nn::Tape<double>& t, std::span<const Var> in) {
      auto p = [&](const char* n) { return t.param(ps.get(n)); };
      SindyAttentionVars v;
      v.attn = {p("w_q"), p("w_k"), p("w_v"), std::nullopt};
      v.xi = {p("xi0"), p("xi1")};
      v.w_ff1 = p("w_ff1");
      v.w_ff2 = p("w_ff2");
      v.ln_g = p("ln.g");
      v.ln_b = p("ln.b");
      return sindy_attention_layer(t, in[0], v, 2, opts);
    };
    Rng rng(seed);
    GradCheckOptions gopts;
    gopts.seed = seed;
    const auto rep = nn::grad_check(block, ps, {random_matrix(4, 6, rng)}, gopts);
    INFO(rep.summary());
    CHECK(rep.passed);
  }
}

TEST_CASE("encode: validation, shapes and determinism") {
  auto bad = small_config(EncoderVariant::transformer_vanilla, 0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto odd = small_config(EncoderVariant::transformer_sindy, 1, 6, 4);
  CHECK_THROWS_AS(odd.validate(), ConfigError);

  auto e2 = small_config(EncoderVariant::transformer_sindy, 2, 6, 2);
  CHECK(e2.head_width() == 3);
  ParamStore<double> ps(3);
  add_encoder_params(ps, e2, 5);
  CHECK(ps.get(head_xi_name(1, 1)).value.rows() == 4);
  CHECK(ps.get(head_xi_name(1, 1)).value.cols() == 3);

  Rng rng(11);
  const M w = random_matrix(8, 5, rng);
  for (const auto& label : all_encoder_labels()) {
    CAPTURE(label);
    EncoderConfig c = small_config(EncoderVariant::gru, 2, 6, 2);
    apply_encoder_label(label, c);
    ParamStore<double> a(42), b(42);
    add_encoder_params(a, c, 5);
    add_encoder_params(b, c, 5);
    std::vector<AttentionTrace> traces;
    const M za = run_encode(a, c, w, &traces);
    const M zb = run_encode(b, c, w);
    CHECK(za.rows() == 8);
    CHECK(za.cols() == 6);
    CHECK(za == zb);
    CHECK(za.allFinite());
    for (const auto& tr : traces) CHECK(tr.heads.size() == 2);
  }
}

TEST_CASE("permuting sensors together with the lift rows leaves the encoding unchanged") {
  Rng rng(12);
  const M w = random_matrix(7, 5, rng);
  std::vector<Eigen::Index> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[0], perm[2]);
  M wp(7, 5);
  for (Eigen::Index j = 0; j < 5; ++j) wp.col(j) = w.col(perm[static_cast<std::size_t>(j)]);
  for (const auto& label : all_encoder_labels()) {
    CAPTURE(label);
    EncoderConfig c = small_config(EncoderVariant::gru, 2, 4, 2);
    apply_encoder_label(label, c);
    ParamStore<double> ps(1);
    add_encoder_params(ps, c, 5);
    const M base = run_encode(ps, c, w);
    auto& lift = ps.get("encoder.lift.w").value;
    const M orig = lift;
    for (Eigen::Index j = 0; j < 5; ++j) lift.row(j) = orig.row(perm[static_cast<std::size_t>(j)]);
    CHECK(max_abs_diff(run_encode(ps, c, wp), base) < 1e-6);
  }
}

TEST_CASE("every encoder variant passes a gradient check through encode") {
  for (const auto& label : all_encoder_labels()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CAPTURE(label);
      CAPTURE(seed);
      EncoderConfig c = small_config(EncoderVariant::gru, 2, 4, 2);
      apply_encoder_label(label, c);
      ParamStore<double> ps(seed);
      add_encoder_params(ps, c, 3);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        // break the zero-bias symmetry so every bias path is exercised
        Rng r(seed * 31 + i);
        ps[i].value += random_matrix(ps[i].value.rows(), ps[i].value.cols(), r, -0.1, 0.1);
      }
      Block<double> block = [&](nn::Tape<double>& t, std::span<const Var> in) {
        auto vars = bind_encoder(t, ps, c);
        return encode(t, vars, c, in[0]);
      };
      Rng rng(seed);
      GradCheckOptions opts;
      opts.seed = seed;
      const auto rep = nn::grad_check(block, ps, {random_matrix(10, 3, rng)}, opts);
      INFO(rep.summary());
      CHECK(rep.passed);
    }
  }
}
