#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "casenbr/checkpoint.hpp"
#include "casenbr/errors.hpp"
#include "casenbr/metrics.hpp"
#include "casenbr/synth.hpp"
#include "casenbr/train.hpp"
#include "helpers.hpp"

using namespace casenbr;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.horizon = 56;
  c.scales = {7, 14, 28};
  c.cadence_dim = 8;
  c.embedding_dim = 8;
  c.hidden_dim = 16;
  c.induced_points = 4;
  c.heads = 2;
  return c;
}

struct Data {
  Vocabulary vocab;
  std::vector<Example> train, val;
};

Data tiny_data(std::size_t users) {
  SynthSpec s;
  s.n_users = users;
  s.horizon = 200;
  const auto corpus = generate(s);
  Data d;
  d.vocab = build_vocabulary(corpus.histories);
  for (std::size_t u = 0; u < corpus.histories.size(); ++u) {
    const auto& h = corpus.histories[u];
    auto e = build_example(h, h.baskets.size() - 1, d.vocab, {56, 64});
    if (e) (u % 5 == 0 ? d.val : d.train).push_back(std::move(*e));
  }
  return d;
}

}  // namespace

TEST_CASE("one batch per epoch gives one optimizer step per epoch") {
  const auto d = tiny_data(20);
  CaseModel<float> m(tiny_model(), d.vocab.size(), 1);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 64;
  const auto r = train(m, d.train, d.val, c);
  CHECK(r.steps == 3);
  REQUIRE(r.log.size() == 3);
  for (const auto& e : r.log) CHECK(e.steps == 1);

  c.epochs = 1;
  c.batch_size = 5;
  CaseModel<float> m2(tiny_model(), d.vocab.size(), 1);
  const auto r2 = train(m2, d.train, d.val, c);
  CHECK(r2.steps == (d.train.size() + 4) / 5);
}

TEST_CASE("same seed and data give identical checkpoint bytes") {
  const auto d = tiny_data(40);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.seed = 5;
  const auto run = [&] {
    CaseModel<float> m(tiny_model(), d.vocab.size(), derive_seed(c.seed, "model.init"));
    const auto r = train(m, d.train, d.val, c);
    return std::make_pair(checkpoint_bytes(model_checkpoint(m, d.vocab)), r.log.back().loss);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  c.seed = 6;
  CHECK(run().first != a.first);
}

TEST_CASE("a batch of duplicates has the single-example loss") {
  Rng rng(3);
  CaseModel<double> m(tiny_model(), 50, 4);
  auto e = testing::random_example(rng, 5, 56, 50);
  const auto other = testing::random_example(rng, 9, 56, 50);
  const auto loss_of = [&](std::vector<Example> ex) {
    const auto b = collate<double>(std::span<const Example>(ex));
    ad::Graph<double> g(false);
    Rng unused(0);
    return batch_loss(g, m, b, unused, false)->value[0];
  };
  const double single = loss_of({e});
  CHECK(loss_of({e, e, e}) == doctest::Approx(single).epsilon(1e-12));
  // every example weighs the same regardless of its candidate count
  CHECK(loss_of({e, other}) == doctest::Approx((single + loss_of({other})) / 2).epsilon(1e-12));
}

TEST_CASE("the returned model carries the best logged validation metric") {
  const auto d = tiny_data(60);
  CaseModel<float> m(tiny_model(), d.vocab.size(), 7);
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 8;
  c.selection_metric = "ndcg@3";
  std::vector<double> seen;
  const auto r = train<float>(m, d.train, d.val, c,
                              [&](const EpochLog& e, const CaseModel<float>&) { seen.push_back(e.val_metric); });
  REQUIRE(seen.size() == 4);
  double best = -1.0;
  for (const auto& e : r.log) best = std::max(best, e.val_metric);
  CHECK(r.best_metric == best);
  CHECK(r.log[r.best_epoch - 1].val_metric == best);
  const std::size_t ks[] = {3};
  CHECK(evaluate(CaseRanker<float>(m), d.val, ks).value("ndcg", 3) == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("training reduces the loss on a planted-cadence corpus") {
  const auto d = tiny_data(200);
  CaseModel<float> m(tiny_model(), d.vocab.size(), 8);
  TrainConfig c;
  c.epochs = 8;
  c.batch_size = 16;
  c.lr = 3e-3;
  const auto r = train(m, d.train, d.val, c);
  CHECK(r.log.back().loss < r.log.front().loss);
  for (const auto& e : r.log) CHECK(std::isfinite(e.loss));
}

TEST_CASE("training log format") {
  std::vector<EpochLog> log = {{1, 0.5, 0.25, 1.5, 3}, {2, 0.25, 0.5, 1.0, 3}};
  std::ostringstream out;
  write_train_log(out, log);
  const auto text = out.str();
  CHECK(text.rfind("epoch,loss,val_metric,seconds\n1,0.5,0.25,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.selection_metric = "loss";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CaseModel<float> m(tiny_model(), 5, 1);
  CHECK_THROWS_AS(train(m, {}, {}, TrainConfig{}), DataError);
}
