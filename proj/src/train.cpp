#include "casenbr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "casenbr/errors.hpp"
#include "casenbr/log.hpp"
#include "casenbr/optim.hpp"

namespace casenbr {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be non-negative");
  parse_metric(selection_metric);
}

template <typename Real>
std::vector<std::vector<std::size_t>> CaseRanker<Real>::rank(std::span<const Example> examples,
                                                             std::size_t k) const {
  const auto scores = model_.score(examples, batch_size_);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(examples.size());
  for (std::size_t e = 0; e < examples.size(); ++e)
    out.push_back(rank_candidates(scores[e], examples[e], k));
  return out;
}

template <typename Real>
ad::Var<Real> batch_loss(ad::Graph<Real>& g, const CaseModel<Real>& model,
                         const Batch<Real>& batch, Rng& rng, bool training) {
  const auto out = model.forward(g, batch, rng, training);
  return ad::bce_with_logits(g, out.scores, std::span<const Real>(batch.labels), batch.offsets);
}

namespace {

template <typename Real>
double validation_metric(const CaseModel<Real>& model, std::span<const Example> val,
                         const std::string& metric, std::size_t k) {
  const std::size_t ks[] = {k};
  const auto report = evaluate(CaseRanker<Real>(model), val, ks);
  return report.value(metric, k);
}

}  // namespace

template <typename Real>
TrainResult train(CaseModel<Real>& model, std::span<const Example> train_set,
                  std::span<const Example> val, const TrainConfig& config,
                  const EpochCallback<Real>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  const auto [metric, metric_k] = parse_metric(config.selection_metric);
  if (val.empty()) log::warn("no validation examples; keeping the last epoch");

  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.weight_decay = config.weight_decay;
  adam_cfg.decoupled_decay = config.decoupled_decay;
  Adam<Real> adam(model.params(), adam_cfg);
  Rng shuffle_rng(derive_seed(config.seed, "train.shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "train.dropout"));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::unique_ptr<ParamSet<Real>> best;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += config.batch_size, ++batches) {
      const std::size_t end = std::min(order.size(), at + config.batch_size);
      std::vector<const Example*> members;
      for (std::size_t i = at; i < end; ++i) members.push_back(&train_set[order[i]]);
      const auto batch = collate<Real>(std::span<const Example* const>(members));
      model.params().zero_grad();
      ad::Graph<Real> g;
      ad::Var<Real> loss;
      try {
        loss = batch_loss(g, model, batch, dropout_rng, true);
        g.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + ": " + e.what());
      }
      if (config.clip_norm > 0.0) clip_grad_norm(model.params(), config.clip_norm);
      adam.step();
      loss_sum += static_cast<double>(loss->value[0]);
    }
    result.steps += batches;

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(batches);
    entry.steps = batches;
    entry.val_metric = val.empty() ? std::nan("") : validation_metric(model, val, metric, metric_k);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);

    const bool improved = val.empty() || !have_best || entry.val_metric >= result.best_metric;
    if (improved) {
      result.best_epoch = epoch;
      result.best_metric = entry.val_metric;
      best = std::make_unique<ParamSet<Real>>(model.params().clone());
      have_best = true;
    }
    {
      std::ostringstream msg;
      msg << "epoch " << epoch << " loss " << std::setprecision(6) << entry.loss << ' '
          << config.selection_metric << ' ' << entry.val_metric << " (" << std::setprecision(3)
          << entry.seconds << "s)";
      log::info(msg.str());
    }
    if (on_epoch) on_epoch(entry, model);
  }
  model.params().assign_values(*best);
  return result;
}

void write_train_log(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch,loss,val_metric,seconds\n";
  for (const auto& e : log) {
    std::ostringstream row;
    row << e.epoch << ',' << std::setprecision(17) << e.loss << ',' << e.val_metric << ','
        << std::setprecision(6) << e.seconds;
    out << row.str() << '\n';
  }
}

template <typename Real>
nlohmann::json model_manifest(const CaseModel<Real>& model, const Vocabulary& vocab) {
  return {{"format", "casenbr-model"},
          {"model", model.config().to_json()},
          {"vocab_size", vocab.size()},
          {"vocab_hash", vocab.hash()},
          {"precision", sizeof(Real) == 4 ? "float32" : "float64"}};
}

template <typename Real>
Checkpoint model_checkpoint(const CaseModel<Real>& model, const Vocabulary& vocab) {
  return make_checkpoint(model.params(), model_manifest(model, vocab));
}

template <typename Real>
std::unique_ptr<CaseModel<Real>> load_model(const Checkpoint& ckpt, const Vocabulary& vocab) {
  const auto& m = ckpt.manifest;
  if (!m.contains("format") || m.at("format") != "casenbr-model")
    throw DataError("checkpoint does not hold a model");
  if (m.at("vocab_size").get<std::size_t>() != vocab.size() ||
      m.at("vocab_hash").get<std::uint64_t>() != vocab.hash())
    throw DataError("checkpoint was trained on a different item vocabulary");
  auto model = std::make_unique<CaseModel<Real>>(ModelConfig::from_json(m.at("model")),
                                                 vocab.size(), 0);
  load_into(ckpt, model->params());
  return model;
}

#define CASENBR_TRAIN_INSTANTIATE(Real)                                                        \
  template class CaseRanker<Real>;                                                             \
  template ad::Var<Real> batch_loss(ad::Graph<Real>&, const CaseModel<Real>&,                 \
                                    const Batch<Real>&, Rng&, bool);                           \
  template TrainResult train(CaseModel<Real>&, std::span<const Example>,                      \
                             std::span<const Example>, const TrainConfig&,                     \
                             const EpochCallback<Real>&);                                      \
  template nlohmann::json model_manifest(const CaseModel<Real>&, const Vocabulary&);          \
  template Checkpoint model_checkpoint(const CaseModel<Real>&, const Vocabulary&);            \
  template std::unique_ptr<CaseModel<Real>> load_model(const Checkpoint&, const Vocabulary&);

CASENBR_TRAIN_INSTANTIATE(float)
CASENBR_TRAIN_INSTANTIATE(double)

}  // namespace casenbr
