#include <doctest.h>

#include <cmath>

#include "casenbr/autodiff.hpp"
#include "casenbr/errors.hpp"
#include "casenbr/gradcheck.hpp"
#include "casenbr/optim.hpp"
#include "casenbr/params.hpp"
#include "helpers.hpp"

using namespace casenbr;
using testing::random_tensor;
using G = ad::Graph<double>;
using V = ad::Var<double>;

namespace {

double scalar(const V& v) { return v->value[0]; }

/// Contracts an op's output against fixed random weights so every output
/// coordinate influences the checked scalar.
V probe(G& g, const V& out, std::uint64_t seed) {
  Rng rng(seed);
  auto w = ad::constant(random_tensor<double>(out->value.rows(), out->value.cols(), rng));
  return ad::sum(g, ad::mul(g, out, w));
}

ParamSet<double> params_of(std::initializer_list<std::pair<const char*, Tensor<double>>> items) {
  ParamSet<double> p;
  for (const auto& [name, t] : items) p.add(name, t);
  return p;
}

}  // namespace

TEST_CASE("softmax rows") {
  G g(false);
  auto s = ad::softmax_rows(g, ad::constant(Tensor<double>::from_rows({{0, 0}, {1000, 0}})));
  CHECK(s->value(0, 0) == doctest::Approx(0.5));
  CHECK(s->value(0, 1) == doctest::Approx(0.5));
  CHECK(s->value(1, 0) == doctest::Approx(1.0));
  CHECK(s->value(1, 1) < 1e-300);

  Rng rng(4);
  const auto x = random_tensor<double>(5, 9, rng, 3.0);
  auto y = ad::softmax_rows(g, ad::constant(x));
  for (std::size_t r = 0; r < 5; ++r) {
    double z = 0.0, total = 0.0;
    for (std::size_t c = 0; c < 9; ++c) z += std::exp(x(r, c));
    for (std::size_t c = 0; c < 9; ++c) {
      const double want = std::exp(x(r, c)) / z;
      CHECK(std::abs(y->value(r, c) - want) / want < 1e-12);
      total += y->value(r, c);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("layer norm") {
  G g(false);
  auto gain = ad::constant(Tensor<double>(1, 2, 1.0));
  auto shift = ad::constant(Tensor<double>(1, 2));
  auto c = ad::layer_norm(g, ad::constant(Tensor<double>::from_rows({{3, 3}})), gain, shift);
  CHECK(c->value(0, 0) == 0.0);
  CHECK(c->value(0, 1) == 0.0);
  auto u = ad::layer_norm(g, ad::constant(Tensor<double>::from_rows({{1, -1}})), gain, shift);
  CHECK(u->value(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(u->value(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));

  Rng rng(5);
  auto gain8 = ad::constant(Tensor<double>(1, 8, 1.0));
  auto shift8 = ad::constant(Tensor<double>(1, 8));
  auto y = ad::layer_norm(g, ad::constant(random_tensor<double>(6, 8, rng, 4.0)), gain8, shift8);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0.0, v = 0.0;
    for (double x : y->value.row(r)) m += x / 8;
    for (double x : y->value.row(r)) v += (x - m) * (x - m) / 8;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-4);
  }
}

TEST_CASE("dropout") {
  Rng rng(9);
  G g(false);
  const auto x = ad::constant(random_tensor<double>(4, 5, rng));
  CHECK(ad::dropout(g, x, 0.0, rng, true)->value == x->value);
  CHECK(ad::dropout(g, x, 0.5, rng, false)->value == x->value);
  CHECK_THROWS_AS(ad::dropout(g, x, 1.0, rng, true), ConfigError);
  CHECK_THROWS_AS(ad::dropout(g, x, -0.1, rng, true), ConfigError);

  const auto ones = ad::constant(Tensor<double>(1000, 1000, 1.0));
  const auto d = ad::dropout(g, ones, 0.1, rng, true);
  std::size_t kept = 0;
  for (double v : d->value.values()) {
    if (v != 0.0) {
      ++kept;
      CHECK(v == doctest::Approx(1.0 / 0.9));
    }
  }
  const double frac = static_cast<double>(kept) / 1e6;
  CHECK(frac > 0.897);
  CHECK(frac < 0.903);
}

TEST_CASE("bce with logits") {
  G g(false);
  const double ln2 = std::log(2.0);
  const std::vector<double> one = {1.0};
  CHECK(scalar(ad::bce_with_logits<double>(g, ad::constant(Tensor<double>(1, 1)), one)) ==
        doctest::Approx(ln2));
  const double big = scalar(ad::bce_with_logits<double>(g, ad::constant(Tensor<double>(1, 1, 40.0)), one));
  CHECK(big >= 0.0);
  CHECK(big < 1e-15);

  Rng rng(10);
  const auto s = random_tensor<double>(50, 1, rng, 3.0);
  std::vector<double> y(50);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  double naive = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-s[i]));
    naive -= y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p);
  }
  naive /= 50;
  const double got = scalar(ad::bce_with_logits<double>(g, ad::constant(s), y));
  CHECK(std::abs(got - naive) / naive < 1e-10);
}

TEST_CASE("segmented bce averages per segment first") {
  G g(false);
  const auto s = ad::constant(Tensor<double>::from_rows({{0}, {0}, {0}, {40}}));
  const std::vector<double> y = {1, 1, 1, 1};
  const ad::Offsets off = {0, 3, 4};
  const double l = scalar(ad::bce_with_logits<double>(g, s, y, off));
  CHECK(l == doctest::Approx(std::log(2.0) / 2).epsilon(1e-12));
}

TEST_CASE("graph rejects non-finite values") {
  G g;
  auto a = ad::parameter(Tensor<double>(1, 1, 1e308));
  CHECK_THROWS_AS(ad::scale(g, a, 10.0), NumericError);
}

TEST_CASE("every op passes a gradient check") {
  Rng rng(21);
  const auto check = [](const char* name, auto&& build, ParamSet<double>& p) {
    const auto r = grad_check(build, p);
    INFO(name << " worst " << r.worst_param << "[" << r.worst_index << "]");
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.coordinates_checked > 0);
  };

  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t m = 2 + rng.below(4), k = 1 + rng.below(5), n = 1 + rng.below(4);
    auto p = params_of({{"a", random_tensor<double>(m, k, rng)},
                        {"b", random_tensor<double>(k, n, rng)},
                        {"c", random_tensor<double>(m, n, rng)},
                        {"bias", random_tensor<double>(1, n, rng)}});
    const auto a = p.get("a"), b = p.get("b"), c = p.get("c"), bias = p.get("bias");
    check("matmul", [&](G& g) { return probe(g, ad::matmul(g, a, b), 1); }, p);
    check("transpose", [&](G& g) { return probe(g, ad::transpose(g, a), 2); }, p);
    check("add", [&](G& g) { return probe(g, ad::add(g, c, ad::matmul(g, a, b)), 3); }, p);
    check("add_bias", [&](G& g) { return probe(g, ad::add_bias(g, c, bias), 4); }, p);
    check("mul", [&](G& g) { return probe(g, ad::mul(g, c, c), 5); }, p);
    check("scale", [&](G& g) { return probe(g, ad::scale(g, c, -1.7), 6); }, p);
    check("relu", [&](G& g) { return probe(g, ad::relu(g, c), 7); }, p);
    check("concat", [&](G& g) { return probe(g, ad::concat_cols(g, {c, a, c}), 8); }, p);
    check("slice", [&](G& g) { return probe(g, ad::slice_cols(g, a, k > 1 ? 1 : 0, 1), 9); }, p);
    check("softmax", [&](G& g) { return probe(g, ad::softmax_rows(g, c), 10); }, p);
    check("layer_norm", [&](G& g) {
      auto gain = ad::slice_cols(g, bias, 0, n);
      return probe(g, ad::layer_norm(g, ad::add(g, c, ad::matmul(g, a, b)), gain, bias), 11);
    }, p);
    const std::vector<std::size_t> idx = {0, m - 1, 0};
    check("gather", [&](G& g) { return probe(g, ad::gather_rows(g, a, idx), 12); }, p);
    check("tile", [&](G& g) { return probe(g, ad::tile_rows(g, a, 3), 13); }, p);
    const ad::Offsets off = {0, 1, m};
    check("segment_mean", [&](G& g) { return probe(g, ad::segment_mean(g, c, off), 14); }, p);
    check("segment_broadcast", [&](G& g) {
      auto pooled = ad::segment_mean(g, c, off);
      return probe(g, ad::segment_broadcast(g, pooled, off), 15);
    }, p);
    check("dropout", [&](G& g) {
      Rng fixed(77);
      return probe(g, ad::dropout(g, c, 0.3, fixed, true), 16);
    }, p);
    std::vector<double> labels(m);
    for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<double>(i % 2);
    check("bce", [&](G& g) {
      return ad::bce_with_logits<double>(g, ad::slice_cols(g, c, 0, 1), labels, off);
    }, p);
  }

  {
    auto p = params_of({{"signal", random_tensor<double>(3, 28, rng)},
                        {"kernel", random_tensor<double>(2, 7, rng)},
                        {"bias", random_tensor<double>(1, 2, rng)}});
    check("conv1d", [&](G& g) {
      return probe(g, ad::conv1d_strided(g, p.get("signal"), p.get("kernel"), p.get("bias")), 17);
    }, p);
  }
  {
    const ad::Offsets qo = {0, 2, 5}, ko = {0, 3, 4};
    auto p = params_of({{"q", random_tensor<double>(5, 8, rng)},
                        {"k", random_tensor<double>(4, 8, rng)},
                        {"v", random_tensor<double>(4, 8, rng)}});
    check("attention", [&](G& g) {
      return probe(g, ad::segment_attention(g, p.get("q"), p.get("k"), p.get("v"), qo, ko, 2), 18);
    }, p);
  }
}

TEST_CASE("matmul plus bce graph is accurate to 1e-6") {
  Rng rng(31);
  auto p = params_of({{"x", random_tensor<double>(6, 4, rng)}, {"w", random_tensor<double>(4, 1, rng)}});
  const std::vector<double> y = {1, 0, 0, 1, 1, 0};
  const auto r = grad_check(
      [&](G& g) { return ad::bce_with_logits<double>(g, ad::matmul(g, p.get("x"), p.get("w")), y); }, p);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("gradient check detects a corrupted backward rule") {
  Rng rng(41);
  auto p = params_of({{"x", random_tensor<double>(3, 3, rng)}});
  const auto broken_square = [](G& g, const V& x) {
    Tensor<double> out = x->value;
    for (auto& v : out.values()) v *= v;
    return g.record("broken_square", std::move(out), {x}, [x](ad::Node<double>& self) {
      auto& gx = x->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * x->value[i];  // missing factor 2
    });
  };
  const auto r = grad_check([&](G& g) { return probe(g, broken_square(g, p.get("x")), 1); }, p);
  CHECK(r.max_rel_error > 1e-2);
}

TEST_CASE("gradient check rejects a non-finite loss") {
  auto p = params_of({{"x", Tensor<double>(1, 1, 1.0)}});
  CHECK_THROWS_AS(grad_check([&](G&) { return ad::constant(Tensor<double>(1, 1, NAN)); }, p),
                  NumericError);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient without decay leaves parameters unchanged") {
    ParamSet<double> p;
    auto w = p.add("w", Tensor<double>::from_rows({{1.5, -2}}));
    Adam<double> opt(p, AdamConfig{});
    w->grad_buffer();
    opt.step();
    CHECK(w->value == Tensor<double>::from_rows({{1.5, -2}}));
  }
  SUBCASE("first step moves by lr") {
    ParamSet<double> p;
    auto w = p.add("w", Tensor<double>(1, 1, 0.0));
    Adam<double> opt(p, AdamConfig{});
    w->grad_buffer()[0] = 1.0;
    opt.step();
    CHECK(w->value[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("coupled decay works through the moments") {
    ParamSet<double> p;
    auto w = p.add("w", Tensor<double>(1, 1, 2.0));
    AdamConfig cfg;
    cfg.weight_decay = 0.1;
    Adam<double> opt(p, cfg);
    w->grad_buffer();
    opt.step();
    // effective gradient 0.2 → bias-corrected ratio 1 → step of exactly lr
    CHECK(w->value[0] == doctest::Approx(2.0 - 1e-3).epsilon(1e-9));

    ParamSet<double> q;
    auto u = q.add("u", Tensor<double>(1, 1, 2.0));
    cfg.decoupled_decay = true;
    Adam<double> dec(q, cfg);
    u->grad_buffer();
    dec.step();
    CHECK(u->value[0] == doctest::Approx(2.0 * (1.0 - 1e-3 * 0.1)).epsilon(1e-12));
  }
}

TEST_CASE("gradient clipping") {
  ParamSet<double> p;
  auto w = p.add("w", Tensor<double>(1, 2));
  w->grad_buffer()[0] = 3.0;
  w->grad_buffer()[1] = 4.0;
  CHECK(clip_grad_norm(p, 1.0) == doctest::Approx(5.0));
  CHECK(w->grad[0] == doctest::Approx(0.6));
  CHECK(w->grad[1] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(p, 10.0) == doctest::Approx(1.0));
  CHECK(w->grad[1] == doctest::Approx(0.8));
}
