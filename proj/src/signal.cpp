#include "casenbr/signal.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <unordered_set>

#include "casenbr/errors.hpp"

namespace casenbr {

CadenceSignal build_signal(const UserHistory& history, const std::string& item, Day query_day,
                           std::size_t horizon) {
  CadenceSignal s{std::vector<std::uint8_t>(horizon, 0)};
  const Day start = query_day - static_cast<Day>(horizon);
  for (const auto& b : history.baskets) {
    if (b.day < start || b.day >= query_day) continue;
    if (std::binary_search(b.items.begin(), b.items.end(), item))
      s.bits[static_cast<std::size_t>(b.day - start)] = 1;
  }
  return s;
}

std::size_t Example::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

std::optional<Example> build_query(const UserHistory& history, Day query_day,
                                   const std::vector<std::string>& target_items,
                                   const Vocabulary& vocab, const ExampleOptions& options,
                                   bool* capped) {
  if (options.horizon == 0) throw ConfigError("signal horizon must be positive");
  struct Stats {
    std::uint32_t count = 0;
    Day last = 0;
  };
  std::map<std::size_t, Stats> stats;
  for (const auto& b : history.baskets) {
    if (b.day >= query_day) continue;
    for (const auto& item : b.items) {
      auto& s = stats[vocab.index(item)];
      ++s.count;
      s.last = std::max(s.last, b.day);
    }
  }
  if (stats.empty()) return std::nullopt;

  std::vector<std::size_t> order;
  order.reserve(stats.size());
  for (const auto& [idx, _] : stats) order.push_back(idx);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = stats[a];
    const auto& sb = stats[b];
    if (sa.last != sb.last) return sa.last > sb.last;
    if (sa.count != sb.count) return sa.count > sb.count;
    return a < b;
  });
  if (capped) *capped = order.size() > options.max_candidates;
  if (order.size() > options.max_candidates) order.resize(options.max_candidates);

  std::unordered_set<std::size_t> target;
  for (const auto& item : target_items)
    if (vocab.contains(item)) target.insert(vocab.index(item));

  Example ex;
  ex.user_id = history.user_id;
  ex.query_day = query_day;
  ex.horizon = options.horizon;
  ex.candidates = order;
  const std::size_t n = order.size();
  ex.signals.assign(n * options.horizon, 0);
  ex.labels.resize(n);
  ex.purchase_counts.resize(n);
  ex.last_purchase.resize(n);
  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < n; ++i) {
    slot.emplace(order[i], i);
    ex.labels[i] = target.contains(order[i]) ? 1 : 0;
    ex.purchase_counts[i] = stats[order[i]].count;
    ex.last_purchase[i] = stats[order[i]].last;
  }
  const Day start = query_day - static_cast<Day>(options.horizon);
  for (const auto& b : history.baskets) {
    if (b.day < start || b.day >= query_day) continue;
    const auto t = static_cast<std::size_t>(b.day - start);
    for (const auto& item : b.items) {
      const auto it = slot.find(vocab.index(item));
      if (it != slot.end()) ex.signals[it->second * options.horizon + t] = 1;
    }
  }
  return ex;
}

std::optional<Example> build_example(const UserHistory& history, std::size_t target,
                                     const Vocabulary& vocab, const ExampleOptions& options,
                                     bool* capped) {
  if (target >= history.baskets.size()) throw DataError("target basket index out of range");
  const auto& basket = history.baskets[target];
  // Baskets are strictly day-ordered, so everything before `target` is
  // exactly what precedes the target day.
  return build_query(history, basket.day, basket.items, vocab, options, capped);
}

ExampleSet build_example_set(const std::vector<UserHistory>& histories,
                             std::span<const std::size_t> users, const Vocabulary& vocab,
                             const ExampleOptions& options) {
  std::vector<std::optional<Example>> built(users.size());
  std::vector<std::uint8_t> capped(users.size(), 0);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(users.size()); ++i) {
    const auto& h = histories.at(users[static_cast<std::size_t>(i)]);
    bool c = false;
    built[static_cast<std::size_t>(i)] = build_example(h, h.baskets.size() - 1, vocab, options, &c);
    capped[static_cast<std::size_t>(i)] = c;
  }
  ExampleSet set;
  for (std::size_t i = 0; i < built.size(); ++i) {
    if (!built[i]) {
      ++set.dropped;
      continue;
    }
    set.capped += capped[i];
    set.examples.push_back(std::move(*built[i]));
  }
  return set;
}

void write_signal_dump(std::ostream& out, std::span<const Example> examples,
                       const Vocabulary& vocab) {
  for (const auto& ex : examples)
    for (std::size_t i = 0; i < ex.size(); ++i) {
      out << ex.user_id << '\t' << vocab.item(ex.candidates[i]) << '\t' << int(ex.labels[i]) << '\t';
      for (auto b : ex.signal(i)) out << (b ? '1' : '0');
      out << '\n';
    }
}

}  // namespace casenbr
