#include <doctest.h>

#include <algorithm>
#include <array>
#include <sstream>
#include <cmath>
#include <numeric>
#include <set>

#include "casenbr/checkpoint.hpp"
#include "casenbr/errors.hpp"
#include "casenbr/fit.hpp"
#include "casenbr/gradcheck.hpp"
#include "casenbr/kernels.hpp"
#include "casenbr/model.hpp"
#include "casenbr/train.hpp"
#include "helpers.hpp"

using namespace casenbr;
using testing::random_example;
using testing::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.horizon = 28;
  c.scales = {7, 14};
  c.cadence_dim = 8;
  c.embedding_dim = 8;
  c.hidden_dim = 16;
  c.induced_points = 4;
  c.heads = 2;
  return c;
}

template <typename Real>
void jitter(CaseModel<Real>& m, std::uint64_t seed, double sd = 0.1) {
  Rng rng(seed);
  for (auto& [_, v] : m.params())
    for (auto& x : v->value.values()) x += static_cast<Real>(rng.normal(0.0, sd));
}

std::vector<double> scores_of(const CaseModel<float>& m, const Example& e) {
  return m.score(std::span(&e, 1)).front();
}

}  // namespace

TEST_CASE("config derived widths") {
  ModelConfig c;
  CHECK(c.conv_features() == 97);
  CHECK(c.scorer_width() == 128);
  CHECK_FALSE(c.needs_adapter());
  c.filters_per_scale = 2;
  CHECK(c.conv_features() == 194);
  c.scales = {7, 400};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig d;
  d.use_cnn = false;
  d.use_item_embedding = false;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  ModelConfig e;
  e.heads = 3;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  CHECK(ModelConfig::from_json(ModelConfig{}.to_json()).to_json() == ModelConfig{}.to_json());
}

TEST_CASE("parameter shapes follow the configuration") {
  CaseModel<float> m(ModelConfig{}, 50, 1);
  CHECK(m.params().get("cadence.fc1.weight")->value.shape() == std::array<std::size_t, 2>{97, 128});
  CHECK(m.params().get("embedding")->value.rows() == 50);
  CHECK(m.params().get("isab.1.induced")->value.shape() == std::array<std::size_t, 2>{32, 256});
  CHECK(m.params().get("scorer.fc2.weight")->value.shape() == std::array<std::size_t, 2>{128, 1});
  CHECK_FALSE(m.params().contains("adapter.weight"));

  auto c = small_config();
  c.embedding_dim = 5;
  CaseModel<float> adapted(c, 10, 1);
  CHECK(adapted.params().get("adapter.weight")->value.shape() == std::array<std::size_t, 2>{13, 16});
}

TEST_CASE("zero signal gives a bias-only cadence vector") {
  auto c = small_config();
  CaseModel<double> m(c, 4, 3);
  Batch<double> b;
  b.signals = Tensor<double>(2, 28);
  b.items = {0, 1};
  b.labels = {0, 0};
  b.offsets = {0, 2};
  ad::Graph<double> g(false);
  Rng rng(0);
  const auto out = m.forward(g, b, rng, false);
  const auto& fc1b = m.params().get("cadence.fc1.bias")->value;
  const auto& fc2w = m.params().get("cadence.fc2.weight")->value;
  const auto& fc2b = m.params().get("cadence.fc2.bias")->value;
  for (std::size_t j = 0; j < c.cadence_dim; ++j) {
    double want = fc2b[j];
    for (std::size_t i = 0; i < c.cadence_dim; ++i) want += std::max(0.0, fc1b[i]) * fc2w(i, j);
    CHECK(out.cadence->value(0, j) == doctest::Approx(want));
    CHECK(out.cadence->value(1, j) == out.cadence->value(0, j));
  }
}

TEST_CASE("mab with a single key gives each query the same attended value") {
  auto c = small_config();
  CaseModel<double> m(c, 4, 5);
  jitter(m, 6);
  Rng rng(7);
  ParamSet<double> p;
  MabParams<double> mp;
  const auto lin = [&](const char* n) {
    return Linear<double>{p.add(std::string(n) + ".w", random_tensor<double>(16, 16, rng, 0.3)),
                          p.add(std::string(n) + ".b", random_tensor<double>(1, 16, rng, 0.1))};
  };
  mp.query = lin("q");
  mp.key = lin("k");
  mp.value = lin("v");
  mp.output = lin("o");
  mp.feed_forward = lin("f");
  mp.ln0_gain = p.add("g0", Tensor<double>(1, 16, 1.0));
  mp.ln0_shift = p.add("s0", Tensor<double>(1, 16));
  mp.ln1_gain = p.add("g1", Tensor<double>(1, 16, 1.0));
  mp.ln1_shift = p.add("s1", Tensor<double>(1, 16));

  const auto x = ad::constant(random_tensor<double>(3, 16, rng));
  const auto y = ad::constant(random_tensor<double>(1, 16, rng));
  const auto y_other = ad::constant(random_tensor<double>(1, 16, rng));
  ad::Graph<double> g(false);
  const auto out = mab(g, mp, x, {0, 3}, y, {0, 1}, 2);

  // oracle: A = LN(x + (y Wv + bv) Wo + bo), out = LN(A + relu(A Wf + bf))
  const auto apply = [](const Tensor<double>& in, const Linear<double>& l) {
    Tensor<double> r(in.rows(), l.weight->value.cols());
    for (std::size_t i = 0; i < in.rows(); ++i)
      for (std::size_t j = 0; j < r.cols(); ++j) {
        double s = l.bias->value[j];
        for (std::size_t k = 0; k < in.cols(); ++k) s += in(i, k) * l.weight->value(k, j);
        r(i, j) = s;
      }
    return r;
  };
  const auto ln = [](Tensor<double> t) {
    for (std::size_t i = 0; i < t.rows(); ++i) {
      double m = 0.0, v = 0.0;
      for (double x : t.row(i)) m += x / static_cast<double>(t.cols());
      for (double x : t.row(i)) v += (x - m) * (x - m) / static_cast<double>(t.cols());
      for (auto& x : t.row(i)) x = (x - m) / std::sqrt(v + 1e-5);
    }
    return t;
  };
  const auto attended = apply(apply(y->value, mp.value), mp.output);
  Tensor<double> a = x->value;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 16; ++j) a(i, j) += attended(0, j);
  a = ln(a);
  auto f = apply(a, mp.feed_forward);
  for (auto& v : f.values()) v = std::max(0.0, v);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += f[i];
  a = ln(a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(out->value[i] - a[i]) < 1e-10);

  // permuting the key/value rows of y leaves the output unchanged
  const auto y3 = random_tensor<double>(3, 16, rng);
  Tensor<double> y3p(3, 16);
  const std::size_t perm[3] = {2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 16; ++j) y3p(i, j) = y3(perm[i], j);
  const auto o1 = mab(g, mp, x, {0, 3}, ad::constant(y3), {0, 3}, 2);
  const auto o2 = mab(g, mp, x, {0, 3}, ad::constant(y3p), {0, 3}, 2);
  for (std::size_t i = 0; i < o1->value.size(); ++i)
    CHECK(std::abs(o1->value[i] - o2->value[i]) < 1e-12);
  (void)y_other;
}

TEST_CASE("shared-query mab equals mab on tiled queries") {
  Rng rng(12);
  auto c = small_config();
  CaseModel<double> m(c, 4, 13);
  jitter(m, 14);
  ParamSet<double> p;
  const auto lin = [&](const std::string& n) {
    return Linear<double>{p.add(n + ".w", random_tensor<double>(16, 16, rng, 0.3)),
                          p.add(n + ".b", random_tensor<double>(1, 16, rng, 0.1))};
  };
  MabParams<double> mp{lin("q"), lin("k"), lin("v"), lin("o"), lin("f"),
                       p.add("g0", Tensor<double>(1, 16, 1.0)), p.add("s0", Tensor<double>(1, 16)),
                       p.add("g1", Tensor<double>(1, 16, 1.0)), p.add("s1", Tensor<double>(1, 16))};
  const auto induced = ad::constant(random_tensor<double>(4, 16, rng));
  const auto y = ad::constant(random_tensor<double>(7, 16, rng));
  const ad::Offsets yo = {0, 2, 7};
  ad::Graph<double> g(false);
  const auto shared = mab_shared_query(g, mp, induced, y, yo, 2);
  const auto tiled = mab(g, mp, ad::tile_rows(g, induced, 2), {0, 4, 8}, y, yo, 2);
  REQUIRE(shared->value.same_shape(tiled->value));
  for (std::size_t i = 0; i < shared->value.size(); ++i)
    CHECK(std::abs(shared->value[i] - tiled->value[i]) < 1e-12);
}

TEST_CASE("singleton sets and batch collation") {
  Rng rng(15);
  CaseModel<float> m(small_config(), 20, 16);
  std::vector<Example> ex = {random_example(rng, 1, 28, 20), random_example(rng, 3, 28, 20),
                             random_example(rng, 5, 28, 20)};
  const auto b = collate<float>(std::span<const Example>(ex));
  CHECK(b.offsets == ad::Offsets{0, 1, 4, 9});
  CHECK(b.max_size() == 5);
  const auto mask = b.mask();
  CHECK(mask[1] == std::vector<std::uint8_t>{1, 1, 1, 0, 0});
  ad::Graph<float> g(false);
  Rng r(0);
  const auto out = m.forward(g, b, r, false);
  CHECK(out.encoded->value.shape() == std::array<std::size_t, 2>{9, 16});

  // batched scores equal per-example scores (padding neutrality)
  const auto batched = m.score(ex, 64);
  for (std::size_t e = 0; e < ex.size(); ++e) {
    const auto single = scores_of(m, ex[e]);
    for (std::size_t i = 0; i < single.size(); ++i) CHECK(std::abs(single[i] - batched[e][i]) < 1e-5);
  }
}

TEST_CASE("permutation equivariance of every set encoder") {
  Rng rng(17);
  for (auto kind : {0, 1, 2}) {
    auto c = small_config();
    if (kind == 1) c.set_encoder = SetEncoderKind::perm_eq_mean;
    if (kind == 2) c.use_set_encoder = false;
    CaseModel<float> m(c, 30, 18);
    jitter(m, 19);
    for (int trial = 0; trial < 20; ++trial) {
      const auto e = random_example(rng, 1 + rng.below(9), 28, 30, 0.2);
      std::vector<std::size_t> perm(e.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      const auto s = scores_of(m, e);
      const auto sp = scores_of(m, testing::permuted(e, perm));
      for (std::size_t i = 0; i < perm.size(); ++i) CHECK(std::abs(sp[i] - s[perm[i]]) < 1e-5);
    }
  }
}

TEST_CASE("identical candidates score identically") {
  Rng rng(20);
  CaseModel<float> m(small_config(), 10, 21);
  auto e = random_example(rng, 4, 28, 10);
  e.candidates[2] = e.candidates[0];
  for (std::size_t t = 0; t < 28; ++t) e.signals[2 * 28 + t] = e.signals[t];
  const auto s = scores_of(m, e);
  CHECK(s[0] == s[2]);
}

TEST_CASE("ablations zero their slice") {
  Rng rng(22);
  auto c = small_config();
  c.use_cnn = false;
  CaseModel<float> m(c, 10, 23);
  CHECK_FALSE(m.params().contains("cadence.fc1.weight"));
  const auto e = random_example(rng, 3, 28, 10);
  const auto b = collate<float>(std::span(&e, 1));
  ad::Graph<float> g(false);
  Rng r(0);
  const auto out = m.forward(g, b, r, false);
  for (float v : out.cadence->value.values()) CHECK(v == 0.0f);

  auto d = small_config();
  d.use_item_embedding = false;
  CaseModel<float> no_emb(d, 10, 23);
  auto e2 = e;
  e2.candidates = {9, 9, 9};
  CHECK(scores_of(no_emb, e) == scores_of(no_emb, e2));

  CHECK_THROWS_AS(CaseModel<float>(small_config(), 5, 1).score(std::vector<Example>{random_example(rng, 2, 28, 50)}),
                  DataError);
}

TEST_CASE("rank tie-breaking and truncation") {
  Example e;
  e.candidates = {4, 2, 7, 1};
  e.purchase_counts = {1, 3, 3, 2};
  e.last_purchase = {0, 0, 0, 0};
  const std::vector<double> top = {0.9, 0.1, 0.2, 0.3};
  CHECK(rank_candidates(top, e, 1) == std::vector<std::size_t>{0});
  const std::vector<double> flat = {0.5, 0.5, 0.5, 0.5};
  CHECK(rank_candidates(flat, e, 10) == std::vector<std::size_t>{1, 2, 3, 0});
}

TEST_CASE("full model gradient check on a toy instance") {
  Rng rng(24);
  for (auto kind : {0, 1}) {
    auto c = small_config();
    c.dropout = 0.0;
    if (kind == 1) c.set_encoder = SetEncoderKind::perm_eq_mean;
    CaseModel<double> m(c, 6, 25);
    jitter(m, 26);
    std::vector<Example> ex = {random_example(rng, 3, 28, 6, 0.3)};
    ex[0].labels = {1, 0, 1};
    const auto batch = collate<double>(std::span<const Example>(ex));
    const auto r = grad_check(
        [&](ad::Graph<double>& g) {
          Rng unused(0);
          return batch_loss(g, m, batch, unused, false);
        },
        m.params());
    INFO("worst " << r.worst_param);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("checkpoint round trip reproduces scores bit-exactly") {
  Rng rng(27);
  const Vocabulary vocab({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"});
  CaseModel<float> m(small_config(), vocab.size(), 28);
  jitter(m, 29);
  const auto ckpt = model_checkpoint(m, vocab);
  std::stringstream ss;
  write_checkpoint(ss, ckpt);
  const auto back = read_checkpoint(ss);
  const auto loaded = load_model<float>(back, vocab);
  const auto e = random_example(rng, 6, 28, 10);
  CHECK(scores_of(m, e) == scores_of(*loaded, e));
  CHECK(checkpoint_bytes(ckpt) == checkpoint_bytes(model_checkpoint(*loaded, vocab)));
  CHECK_THROWS_AS(load_model<float>(back, Vocabulary({"a", "b"})), DataError);
}

TEST_CASE("forward cost is linear in set size and in horizon") {
  Rng rng(30);
  ModelConfig c;
  c.horizon = 364;
  CaseModel<float> m(c, 300, 31);
  std::vector<double> ns, flops;
  for (std::size_t n : {16, 32, 64, 128}) {
    const auto e = random_example(rng, n, 364, 300);
    kernels::reset_flop_count();
    (void)scores_of(m, e);
    ns.push_back(static_cast<double>(n));
    flops.push_back(static_cast<double>(kernels::flop_count()));
  }
  const auto fit = fit_linear(ns, flops);
  CHECK(fit.r2 > 0.999);
  CHECK(flops[3] / flops[2] < 2.05);  // doubling n never quadruples cost

  ModelConfig half = c;
  half.horizon = 182;
  half.scales = {7, 14, 91, 182};
  ModelConfig full = half;
  full.horizon = 364;
  CaseModel<float> mh(half, 300, 32), mf(full, 300, 32);
  const auto eh = random_example(rng, 32, 182, 300);
  const auto ef = random_example(rng, 32, 364, 300);
  kernels::reset_flop_count();
  (void)scores_of(mh, eh);
  const double fh = static_cast<double>(kernels::flop_count());
  kernels::reset_flop_count();
  (void)scores_of(mf, ef);
  const double ff = static_cast<double>(kernels::flop_count());
  CHECK(ff > fh);
}
