#include "casenbr/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "casenbr/errors.hpp"
#include "casenbr/log.hpp"

namespace casenbr {

std::vector<std::string> personal_top_rank(const UserHistory& history, Day query_day,
                                           std::size_t k) {
  struct Stats {
    std::size_t count = 0;
    Day last = std::numeric_limits<Day>::min();
  };
  std::map<std::string, Stats> stats;
  for (const auto& b : history.baskets) {
    if (b.day >= query_day) continue;
    for (const auto& item : b.items) {
      auto& s = stats[item];
      ++s.count;
      s.last = std::max(s.last, b.day);
    }
  }
  std::vector<std::pair<std::string, Stats>> rows(stats.begin(), stats.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.last > b.second.last;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, rows.size()); ++i) out.push_back(rows[i].first);
  return out;
}

namespace {

bool personal_top_before(const Example& ex, std::size_t a, std::size_t b) {
  if (ex.purchase_counts[a] != ex.purchase_counts[b])
    return ex.purchase_counts[a] > ex.purchase_counts[b];
  if (ex.last_purchase[a] != ex.last_purchase[b]) return ex.last_purchase[a] > ex.last_purchase[b];
  return ex.candidates[a] < ex.candidates[b];
}

}  // namespace

std::vector<std::size_t> personal_top_order(const Example& example, std::size_t k) {
  std::vector<std::size_t> order(example.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return personal_top_before(example, a, b); });
  order.resize(std::min(k, order.size()));
  return order;
}

std::vector<std::vector<std::size_t>> PersonalTopRanker::rank(std::span<const Example> examples,
                                                              std::size_t k) const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(personal_top_order(ex, k));
  return out;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, const Example& example,
                                        std::size_t k) {
  if (scores.size() != example.size()) throw ShapeError("order_by_score: score count mismatch");
  std::vector<std::size_t> order(example.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return personal_top_before(example, a, b);
  });
  order.resize(std::min(k, order.size()));
  return order;
}

void TifuConfig::validate() const {
  if (groups == 0) throw ConfigError("tifu.groups must be positive");
  if (!(within_decay > 0.0 && within_decay <= 1.0))
    throw ConfigError("tifu.within_decay must lie in (0, 1]");
  if (!(group_decay > 0.0 && group_decay <= 1.0))
    throw ConfigError("tifu.group_decay must lie in (0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("tifu.alpha must lie in [0, 1]");
}

double SparseVector::at(std::size_t item) const {
  const auto it = std::lower_bound(index.begin(), index.end(), item);
  if (it == index.end() || *it != item) return 0.0;
  return value[static_cast<std::size_t>(it - index.begin())];
}

SparseVector tifu_build_vector(const UserHistory& history, Day query_day, const Vocabulary& vocab,
                               const TifuConfig& config) {
  config.validate();
  std::vector<const Basket*> baskets;
  for (const auto& b : history.baskets)
    if (b.day < query_day) baskets.push_back(&b);
  SparseVector out;
  const std::size_t n = baskets.size();
  if (n == 0) return out;

  const std::size_t m = std::min(config.groups, n);
  const std::size_t base = n / m;
  const std::size_t first = base + n % m;
  std::map<std::size_t, double> acc;
  std::size_t at = 0;
  for (std::size_t grp = 0; grp < m; ++grp) {
    const std::size_t g = grp == 0 ? first : base;
    const double group_weight =
        std::pow(config.group_decay, static_cast<double>(m - 1 - grp)) / static_cast<double>(m);
    for (std::size_t j = 0; j < g; ++j, ++at) {
      const double w = group_weight *
                       std::pow(config.within_decay, static_cast<double>(g - 1 - j)) /
                       static_cast<double>(g);
      for (const auto& item : baskets[at]->items) acc[vocab.index(item)] += w;
    }
  }
  out.index.reserve(acc.size());
  out.value.reserve(acc.size());
  for (const auto& [i, v] : acc) {
    out.index.push_back(i);
    out.value.push_back(v);
    out.squared_norm += v * v;
  }
  return out;
}

TifuIndex::TifuIndex(std::span<const UserHistory> histories, std::span<const std::size_t> users,
                     const Vocabulary& vocab, TifuConfig config)
    : config_(config) {
  config_.validate();
  vectors_.resize(users.size());
  users_.resize(users.size());
  const auto n = static_cast<std::ptrdiff_t>(users.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& h = histories[users[static_cast<std::size_t>(i)]];
    const Day end = h.baskets.empty() ? 0 : h.baskets.back().day + 1;
    vectors_[static_cast<std::size_t>(i)] = tifu_build_vector(h, end, vocab, config_);
    users_[static_cast<std::size_t>(i)] = h.user_id;
  }
}

std::vector<std::size_t> TifuIndex::neighbors(const SparseVector& query, std::size_t k,
                                              const std::string& exclude) const {
  if (k == 0 || vectors_.empty()) return {};
  std::size_t max_index = 0;
  for (const auto& v : vectors_)
    if (!v.index.empty()) max_index = std::max(max_index, v.index.back());
  if (!query.index.empty()) max_index = std::max(max_index, query.index.back());
  std::vector<double> dense(max_index + 1, 0.0);
  for (std::size_t i = 0; i < query.index.size(); ++i) dense[query.index[i]] = query.value[i];

  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(vectors_.size());
  for (std::size_t u = 0; u < vectors_.size(); ++u) {
    if (!exclude.empty() && users_[u] == exclude) continue;
    const auto& v = vectors_[u];
    double dot = 0.0;
    for (std::size_t i = 0; i < v.index.size(); ++i) dot += dense[v.index[i]] * v.value[i];
    dist.emplace_back(std::max(0.0, query.squared_norm + v.squared_norm - 2.0 * dot), u);
  }
  const std::size_t take = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = dist[i].second;
  return out;
}

std::vector<double> TifuIndex::scores(const SparseVector& own, std::span<const std::size_t> items,
                                      const std::string& exclude) const {
  std::vector<double> out(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) out[i] = config_.alpha * own.at(items[i]);
  if (config_.alpha == 1.0 || config_.neighbors == 0) return out;
  const auto nn = neighbors(own, config_.neighbors, exclude);
  if (nn.empty()) return out;
  std::vector<double> mean(items.size(), 0.0);
  for (auto u : nn)
    for (std::size_t i = 0; i < items.size(); ++i) mean[i] += vectors_[u].at(items[i]);
  const double w = (1.0 - config_.alpha) / static_cast<double>(nn.size());
  for (std::size_t i = 0; i < items.size(); ++i) out[i] += w * mean[i];
  return out;
}

TifuRanker::TifuRanker(const TifuIndex& index, std::span<const UserHistory> histories,
                       const Vocabulary& vocab)
    : index_(index), vocab_(vocab) {
  for (const auto& h : histories) by_user_.emplace(h.user_id, &h);
}

std::vector<std::vector<std::size_t>> TifuRanker::rank(std::span<const Example> examples,
                                                       std::size_t k) const {
  if (index_.size() < index_.config().neighbors)
    log::warn("TIFUKNN population (" + std::to_string(index_.size()) + ") is smaller than " +
              std::to_string(index_.config().neighbors) + " neighbors; using all users");
  for (const auto& ex : examples)
    if (!by_user_.contains(ex.user_id)) throw DataError("no history for user " + ex.user_id);
  std::vector<std::vector<std::size_t>> out(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const auto& ex = examples[static_cast<std::size_t>(e)];
    const auto own =
        tifu_build_vector(*by_user_.at(ex.user_id), ex.query_day, vocab_, index_.config());
    const auto s = index_.scores(own, ex.candidates, ex.user_id);
    out[static_cast<std::size_t>(e)] = order_by_score(s, ex, k);
  }
  return out;
}

double seconds_per_query(const Ranker& ranker, std::span<const Example> queries, std::size_t k,
                         std::size_t repeats) {
  if (queries.empty()) throw ConfigError("timing needs at least one query");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ranked = ranker.rank(queries, k);
    const auto t1 = std::chrono::steady_clock::now();
    if (ranked.size() != queries.size()) throw ShapeError("ranker dropped queries");
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best / static_cast<double>(queries.size());
}

std::vector<TimingRow> bench_inference(
    const Ranker& model, const std::function<std::unique_ptr<Ranker>(std::size_t)>& make_tifu,
    std::span<const Example> queries, std::span<const std::size_t> populations, std::size_t k,
    std::size_t repeats) {
  if (!std::is_sorted(populations.begin(), populations.end()))
    throw ConfigError("bench populations must be ascending");
  std::vector<TimingRow> rows;
  for (auto pop : populations) {
    const auto tifu = make_tifu(pop);
    rows.push_back({model.name(), pop, queries.size(), seconds_per_query(model, queries, k, repeats)});
    rows.push_back({tifu->name(), pop, queries.size(), seconds_per_query(*tifu, queries, k, repeats)});
  }
  return rows;
}

}  // namespace casenbr
