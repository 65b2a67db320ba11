#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "casenbr/ingest.hpp"

namespace casenbr {

/// Binary purchase indicator over the T days before a query day. Index
/// t-1 (t = 1..T) marks day query_day − 1 − (T − t); t = T is the most recent day.
struct CadenceSignal {
  std::vector<std::uint8_t> bits;
};

CadenceSignal build_signal(const UserHistory& history, const std::string& item, Day query_day,
                           std::size_t horizon);

/// One ranking instance: a user's previously purchased items as of query_day.
struct Example {
  std::string user_id;
  Day query_day = 0;
  std::size_t horizon = 0;
  std::vector<std::size_t> candidates;         // vocabulary indices
  std::vector<std::uint8_t> signals;           // n × horizon, row-major
  std::vector<std::uint8_t> labels;            // 1 iff in the target basket
  std::vector<std::uint32_t> purchase_counts;  // baskets containing the item before query_day
  std::vector<Day> last_purchase;              // most recent purchase day before query_day

  [[nodiscard]] std::size_t size() const noexcept { return candidates.size(); }
  [[nodiscard]] std::span<const std::uint8_t> signal(std::size_t i) const {
    return {signals.data() + i * horizon, horizon};
  }
  [[nodiscard]] std::size_t positives() const;
};

struct ExampleOptions {
  std::size_t horizon = 364;
  std::size_t max_candidates = 512;
};

/// Candidates are the distinct items bought before query_day, ordered by most
/// recent purchase (newest first), then purchase count, then item id, and
/// truncated at max_candidates. Labels mark membership in `target_items`
/// (pass an empty list for unlabeled queries). Returns nullopt when there
/// are no candidates. `capped` is set when truncation happened.
std::optional<Example> build_query(const UserHistory& history, Day query_day,
                                   const std::vector<std::string>& target_items,
                                   const Vocabulary& vocab, const ExampleOptions& options,
                                   bool* capped = nullptr);

/// Leave-one-out example with basket `target` as the label source and all
/// earlier baskets as history.
std::optional<Example> build_example(const UserHistory& history, std::size_t target,
                                     const Vocabulary& vocab, const ExampleOptions& options,
                                     bool* capped = nullptr);

struct ExampleSet {
  std::vector<Example> examples;
  std::size_t dropped = 0;  // no prior purchases
  std::size_t capped = 0;   // candidate cap was binding
};

/// One example per listed user with the user's last basket as target.
ExampleSet build_example_set(const std::vector<UserHistory>& histories,
                             std::span<const std::size_t> users, const Vocabulary& vocab,
                             const ExampleOptions& options);

/// Debug dump: `user<TAB>item<TAB>label<TAB>bitstring` per candidate.
void write_signal_dump(std::ostream& out, std::span<const Example> examples,
                       const Vocabulary& vocab);

}  // namespace casenbr
