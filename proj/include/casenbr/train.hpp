#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "casenbr/checkpoint.hpp"
#include "casenbr/metrics.hpp"
#include "casenbr/model.hpp"

namespace casenbr {

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::string selection_metric = "recall@10";
  double clip_norm = 0.0;  // global gradient norm cap; 0 disables clipping
  bool decoupled_decay = false;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean batch loss
  double val_metric = 0.0;
  double seconds = 0.0;
  std::size_t steps = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::size_t steps = 0;
};

/// Ranks candidates by model logits in eval mode.
template <typename Real>
class CaseRanker final : public Ranker {
 public:
  explicit CaseRanker(const CaseModel<Real>& model, std::size_t batch_size = 64)
      : model_(model), batch_size_(batch_size) {}

  [[nodiscard]] std::string name() const override { return "CASE"; }
  [[nodiscard]] std::vector<std::vector<std::size_t>> rank(std::span<const Example> examples,
                                                           std::size_t k) const override;

 private:
  const CaseModel<Real>& model_;
  std::size_t batch_size_;
};

/// Mean over examples of each example's mean candidate BCE.
template <typename Real>
ad::Var<Real> batch_loss(ad::Graph<Real>& g, const CaseModel<Real>& model,
                         const Batch<Real>& batch, Rng& rng, bool training);

/// Called after every epoch with the model holding that epoch's weights.
template <typename Real>
using EpochCallback = std::function<void(const EpochLog&, const CaseModel<Real>&)>;

/// Seeded mini-batch training with Adam. After each epoch the selection
/// metric is measured on `val`; on return the model holds the weights of the
/// best epoch (latest on ties). With no validation examples the last epoch
/// is kept.
template <typename Real>
TrainResult train(CaseModel<Real>& model, std::span<const Example> train_set,
                  std::span<const Example> val, const TrainConfig& config,
                  const EpochCallback<Real>& on_epoch = {});

/// `epoch,loss,val_metric,seconds`.
void write_train_log(std::ostream& out, std::span<const EpochLog> log);

/// Manifest stored with every model checkpoint.
template <typename Real>
nlohmann::json model_manifest(const CaseModel<Real>& model, const Vocabulary& vocab);

template <typename Real>
Checkpoint model_checkpoint(const CaseModel<Real>& model, const Vocabulary& vocab);

/// Rebuilds a model from a checkpoint; DataError when the vocabulary differs
/// from the one the model was trained with.
template <typename Real>
std::unique_ptr<CaseModel<Real>> load_model(const Checkpoint& ckpt, const Vocabulary& vocab);

}  // namespace casenbr
