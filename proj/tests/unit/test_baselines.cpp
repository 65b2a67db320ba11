#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "casenbr/baselines.hpp"
#include "casenbr/errors.hpp"
#include "helpers.hpp"

using namespace casenbr;
using testing::history;

namespace {

using Dense = std::vector<double>;

// Direct evaluation of the grouped, decayed average on a dense vector.
Dense oracle_vector(const UserHistory& h, Day query_day, const Vocabulary& vocab,
                    const TifuConfig& c) {
  std::vector<const Basket*> bs;
  for (const auto& b : h.baskets)
    if (b.day < query_day) bs.push_back(&b);
  Dense v(vocab.size(), 0.0);
  const std::size_t L = bs.size();
  if (L == 0) return v;
  const std::size_t M = std::min(c.groups, L);
  std::vector<std::size_t> sizes(M, L / M);
  sizes[0] += L % M;
  std::size_t at = 0;
  for (std::size_t G = 1; G <= M; ++G) {
    const std::size_t g = sizes[G - 1];
    for (std::size_t j = 1; j <= g; ++j, ++at) {
      const double w = std::pow(c.within_decay, static_cast<double>(g - j)) / static_cast<double>(g) *
                       std::pow(c.group_decay, static_cast<double>(M - G)) / static_cast<double>(M);
      for (const auto& item : bs[at]->items) v[vocab.index(item)] += w;
    }
  }
  return v;
}

Dense dense(const SparseVector& s, std::size_t n) {
  Dense d(n, 0.0);
  for (std::size_t i = 0; i < s.index.size(); ++i) d[s.index[i]] = s.value[i];
  return d;
}

double dist2(const Dense& a, const Dense& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::vector<UserHistory> toy_corpus() {
  return {history("u0", {{1, {"a", "b"}}, {4, {"a"}}, {9, {"a", "c"}}, {12, {"b"}}}),
          history("u1", {{2, {"b", "c"}}, {3, {"c"}}, {8, {"c", "d"}}}),
          history("u2", {{1, {"a", "d"}}, {5, {"d"}}, {6, {"a", "e"}}, {7, {"e"}}, {10, {"a"}}}),
          history("u3", {{3, {"e"}}, {11, {"b", "e"}}}),
          history("u4", {{1, {"a"}}, {2, {"b"}}, {3, {"c"}}, {4, {"d"}}, {5, {"e"}}, {6, {"a", "b"}},
                         {7, {"c"}}, {8, {"d"}}, {9, {"a"}}})};
}

}  // namespace

TEST_CASE("PersonalTop orders by count then recency then id") {
  const auto h = history("u", {{1, {"milk"}}, {2, {"jam", "milk"}}, {3, {"eggs"}}, {4, {"eggs", "milk"}},
                               {5, {"jam"}}, {10, {"zzz"}}});
  // before day 10: milk 3, eggs 2 (last day 4), jam 2 (last day 5)
  CHECK(personal_top_rank(h, 10, 5) == std::vector<std::string>{"milk", "jam", "eggs"});
  const auto h2 = history("u", {{1, {"milk"}}, {2, {"jam", "milk"}}, {4, {"eggs"}}, {5, {"eggs", "milk"}}});
  CHECK(personal_top_rank(h2, 9, 5) == std::vector<std::string>{"milk", "eggs", "jam"});
  CHECK(personal_top_rank(h2, 9, 1) == std::vector<std::string>{"milk"});
  CHECK(personal_top_rank(history("u", {{3, {"x"}}}), 4, 3) == std::vector<std::string>{"x"});
  // equal count and recency fall back to the item id
  CHECK(personal_top_rank(history("u", {{3, {"b", "a"}}}), 4, 3) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("PersonalTop ranker agrees with the history ranking") {
  const auto corpus = toy_corpus();
  const auto vocab = build_vocabulary(corpus);
  for (const auto& h : corpus) {
    const auto e = *build_example(h, h.baskets.size() - 1, vocab, {30, 64});
    const auto order = PersonalTopRanker{}.rank(std::span(&e, 1), 10).front();
    const auto names = personal_top_rank(h, e.query_day, 10);
    REQUIRE(order.size() == names.size());
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(vocab.item(e.candidates[order[i]]) == names[i]);
  }
}

TEST_CASE("decayed vector examples") {
  const Vocabulary vocab({"a", "b", "c"});
  TifuConfig c;
  const auto one = tifu_build_vector(history("u", {{1, {"a", "c"}}}), 5, vocab, c);
  CHECK(dense(one, 3) == Dense{1.0, 0.0, 1.0});
  CHECK(one.squared_norm == doctest::Approx(2.0));

  c.groups = 1;
  c.within_decay = 0.5;
  const auto three = tifu_build_vector(history("u", {{1, {"a"}}, {2, {"a", "b"}}, {3, {"a", "c"}}}), 5, vocab, c);
  CHECK(three.at(0) == doctest::Approx((0.25 + 0.5 + 1.0) / 3));
  CHECK(three.at(1) == doctest::Approx(0.5 / 3));
  CHECK(three.at(2) == doctest::Approx(1.0 / 3));

  TifuConfig flat;
  flat.within_decay = 1.0;
  flat.group_decay = 1.0;
  flat.groups = 2;
  const auto f = tifu_build_vector(
      history("u", {{1, {"a"}}, {2, {"a", "b"}}, {3, {"a"}}, {4, {"b"}}}), 9, vocab, flat);
  CHECK(f.at(0) / f.at(1) == doctest::Approx(3.0 / 2.0));
  CHECK(f.at(2) == 0.0);
}

TEST_CASE("decayed vectors match the dense oracle") {
  const auto corpus = toy_corpus();
  const auto vocab = build_vocabulary(corpus);
  for (std::size_t m : {1, 2, 3, 7}) {
    TifuConfig c;
    c.groups = m;
    for (const auto& h : corpus)
      for (Day q : {2, 5, 8, 100}) {
        const auto got = dense(tifu_build_vector(h, q, vocab, c), vocab.size());
        const auto want = oracle_vector(h, q, vocab, c);
        for (std::size_t i = 0; i < want.size(); ++i) {
          CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
          CHECK(got[i] >= 0.0);
          CHECK(got[i] <= 1.0);
        }
      }
  }
}

TEST_CASE("neighbor scores match a brute-force oracle on a toy corpus") {
  const auto corpus = toy_corpus();
  const auto vocab = build_vocabulary(corpus);
  const std::vector<std::size_t> population = {0, 1, 2, 3, 4};
  for (std::size_t knn : {1, 2, 3}) {
    TifuConfig c;
    c.neighbors = knn;
    c.alpha = 0.6;
    const TifuIndex index(corpus, population, vocab, c);
    std::vector<Dense> pop;
    for (const auto& h : corpus) pop.push_back(oracle_vector(h, 1 << 30, vocab, c));
    for (std::size_t u = 0; u < corpus.size(); ++u) {
      const auto& h = corpus[u];
      const Day q = h.baskets.back().day;
      const auto own = tifu_build_vector(h, q, vocab, c);
      const auto own_dense = oracle_vector(h, q, vocab, c);
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t p = 0; p < pop.size(); ++p)
        if (p != u) d.emplace_back(dist2(own_dense, pop[p]), p);
      std::stable_sort(d.begin(), d.end(),
                       [](const auto& x, const auto& y) { return x.first < y.first; });
      std::vector<std::size_t> want_nn;
      for (std::size_t i = 0; i < knn; ++i) want_nn.push_back(d[i].second);
      CHECK(index.neighbors(own, knn, h.user_id) == want_nn);

      std::vector<std::size_t> items(vocab.size());
      std::iota(items.begin(), items.end(), std::size_t{0});
      const auto got = index.scores(own, items, h.user_id);
      for (std::size_t i = 0; i < items.size(); ++i) {
        double mean = 0.0;
        for (auto p : want_nn) mean += pop[p][i] / static_cast<double>(knn);
        CHECK(got[i] == doctest::Approx(0.6 * own_dense[i] + 0.4 * mean).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("an exact duplicate is the nearest neighbor at distance zero") {
  auto corpus = toy_corpus();
  auto dup = corpus[2];
  dup.user_id = "twin";
  corpus.push_back(dup);
  const auto vocab = build_vocabulary(corpus);
  const std::vector<std::size_t> population = {0, 1, 3, 4, 5};
  const TifuIndex index(corpus, population, vocab, TifuConfig{});
  const auto own = tifu_build_vector(corpus[2], 1 << 30, vocab, TifuConfig{});
  const auto nn = index.neighbors(own, 1, corpus[2].user_id);
  REQUIRE(nn.size() == 1);
  CHECK(index.user(nn[0]) == "twin");
  const auto& v = index.vector(nn[0]);
  CHECK(dist2(dense(v, vocab.size()), dense(own, vocab.size())) == 0.0);
}

TEST_CASE("alpha one or zero neighbors degenerate to the own vector") {
  const auto corpus = toy_corpus();
  const auto vocab = build_vocabulary(corpus);
  const std::vector<std::size_t> population = {0, 1, 2, 3, 4};
  for (int mode : {0, 1}) {
    TifuConfig c;
    if (mode == 0) c.alpha = 1.0;
    else c.neighbors = 0;
    const TifuIndex index(corpus, population, vocab, c);
    const TifuRanker ranker(index, corpus, vocab);
    for (const auto& h : corpus) {
      const auto e = *build_example(h, h.baskets.size() - 1, vocab, {30, 64});
      const auto own = tifu_build_vector(h, e.query_day, vocab, c);
      std::vector<double> s;
      for (auto item : e.candidates) s.push_back(own.at(item));
      CHECK(ranker.rank(std::span(&e, 1), 10).front() == order_by_score(s, e, 10));
    }
  }
}

TEST_CASE("score ties fall back to PersonalTop order") {
  const auto h = history("u", {{1, {"a", "b", "c"}}, {2, {"b"}}, {3, {"c", "b"}}, {4, {"a"}}});
  const auto vocab = build_vocabulary({h});
  const auto e = *build_query(h, 10, {}, vocab, {7, 16});
  const std::vector<double> flat(e.size(), 1.0);
  const auto by_score = order_by_score(flat, e, 10);
  CHECK(by_score == personal_top_order(e, 10));
  std::vector<std::string> names;
  for (auto p : by_score) names.push_back(vocab.item(e.candidates[p]));
  CHECK(names == std::vector<std::string>{"b", "a", "c"});
}

TEST_CASE("configuration validation") {
  TifuConfig c;
  c.within_decay = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.groups = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("PersonalTop is invariant to reordering the basket list") {
  const auto corpus = toy_corpus();
  for (const auto& h : corpus) {
    auto shuffled = h;
    std::reverse(shuffled.baskets.begin(), shuffled.baskets.end());
    CHECK(personal_top_rank(h, 1 << 30, 10) == personal_top_rank(shuffled, 1 << 30, 10));
  }
}
