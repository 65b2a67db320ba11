#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "casenbr/ingest.hpp"
#include "casenbr/metrics.hpp"

namespace casenbr {

/// Items bought before query_day by descending basket count, then most recent
/// purchase, then item id.
std::vector<std::string> personal_top_rank(const UserHistory& history, Day query_day,
                                           std::size_t k);

/// Candidate positions in PersonalTop order using the counts stored in the example.
std::vector<std::size_t> personal_top_order(const Example& example, std::size_t k);

class PersonalTopRanker final : public Ranker {
 public:
  [[nodiscard]] std::string name() const override { return "PersonalTop"; }
  [[nodiscard]] std::vector<std::vector<std::size_t>> rank(std::span<const Example> examples,
                                                           std::size_t k) const override;
};

struct TifuConfig {
  std::size_t groups = 7;     // m
  double within_decay = 0.9;  // r_b
  double group_decay = 0.7;   // r_g
  std::size_t neighbors = 300;
  double alpha = 0.7;

  void validate() const;
};

/// Non-negative item weights keyed by vocabulary index, indices ascending.
struct SparseVector {
  std::vector<std::size_t> index;
  std::vector<double> value;
  double squared_norm = 0.0;

  [[nodiscard]] double at(std::size_t item) const;
};

/// Temporally decayed purchase vector over the baskets before query_day.
/// The L baskets form min(m, L) contiguous groups, the oldest group taking
/// the remainder; basket j of a g-basket group weighs r_b^(g-j), group G of
/// M weighs r_g^(M-G), and both levels are averaged.
SparseVector tifu_build_vector(const UserHistory& history, Day query_day, const Vocabulary& vocab,
                               const TifuConfig& config);

/// Vectors of the neighbor population, each built from the user's full history.
class TifuIndex {
 public:
  TifuIndex(std::span<const UserHistory> histories, std::span<const std::size_t> users,
            const Vocabulary& vocab, TifuConfig config);

  [[nodiscard]] const TifuConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t size() const noexcept { return vectors_.size(); }
  [[nodiscard]] const SparseVector& vector(std::size_t i) const { return vectors_.at(i); }
  [[nodiscard]] const std::string& user(std::size_t i) const { return users_.at(i); }

  /// Exact k nearest neighbors by Euclidean distance (linear scan), closest
  /// first, ties by population index. A user with id `exclude` is skipped.
  [[nodiscard]] std::vector<std::size_t> neighbors(const SparseVector& query, std::size_t k,
                                                   const std::string& exclude = {}) const;

  /// alpha * own + (1 - alpha) * neighbor mean, evaluated at `items`.
  [[nodiscard]] std::vector<double> scores(const SparseVector& own,
                                           std::span<const std::size_t> items,
                                           const std::string& exclude = {}) const;

 private:
  TifuConfig config_;
  std::vector<SparseVector> vectors_;
  std::vector<std::string> users_;
};

/// Reference reimplementation of TIFUKNN over previously purchased items.
/// Holds references to `index`, `histories` and `vocab`, which must outlive it.
class TifuRanker final : public Ranker {
 public:
  TifuRanker(const TifuIndex& index, std::span<const UserHistory> histories,
             const Vocabulary& vocab);

  [[nodiscard]] std::string name() const override { return "TIFUKNN"; }
  [[nodiscard]] std::vector<std::vector<std::size_t>> rank(std::span<const Example> examples,
                                                           std::size_t k) const override;

 private:
  const TifuIndex& index_;
  const Vocabulary& vocab_;
  std::unordered_map<std::string, const UserHistory*> by_user_;
};

/// Candidate positions by descending score with PersonalTop tie-breaking.
std::vector<std::size_t> order_by_score(std::span<const double> scores, const Example& example,
                                        std::size_t k);

struct TimingRow {
  std::string ranker;
  std::size_t population = 0;
  std::size_t queries = 0;
  double seconds_per_query = 0.0;
};

/// Best-of-`repeats` wall-clock seconds per query for ranking `queries`.
double seconds_per_query(const Ranker& ranker, std::span<const Example> queries, std::size_t k,
                         std::size_t repeats);

/// Per-query timings of `model` (population independent) and of a TIFUKNN
/// ranker built by `make_tifu` for each population size.
std::vector<TimingRow> bench_inference(
    const Ranker& model, const std::function<std::unique_ptr<Ranker>(std::size_t)>& make_tifu,
    std::span<const Example> queries, std::span<const std::size_t> populations, std::size_t k,
    std::size_t repeats);

}  // namespace casenbr
