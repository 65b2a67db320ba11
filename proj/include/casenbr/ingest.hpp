#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace casenbr {

using Day = std::int64_t;

/// One purchase record.
struct Transaction {
  std::string user_id;
  std::string item_id;
  Day day = 0;
  std::int64_t basket_seq = 0;
};

struct Basket {
  Day day = 0;
  std::vector<std::string> items;  // sorted, unique, non-empty
  bool operator==(const Basket&) const = default;
};

/// A user's baskets in strictly increasing day order (same-day purchases merged).
struct UserHistory {
  std::string user_id;
  std::vector<Basket> baskets;
  bool operator==(const UserHistory&) const = default;
};

enum class Schema {
  absolute_day,  // user,item,day
  gap,           // user,item,order_seq,days_since_prior_order
};

enum class DayFormat {
  integer,  // non-negative day index
  date,     // YYYY-MM-DD or M/D/YYYY, converted to days since 1970-01-01
};

struct CsvFormat {
  Schema schema = Schema::absolute_day;
  std::string user_column = "user";
  std::string item_column = "item";
  std::string day_column = "day";
  std::string order_column = "order_seq";
  std::string gap_column = "days_since_prior_order";
  DayFormat day_format = DayFormat::integer;
  char delimiter = ',';
};

struct ParseResult {
  std::vector<Transaction> transactions;
  std::size_t skipped_rows = 0;
};

/// Reads a header-led CSV. Rows with missing or unparsable fields are skipped
/// and counted. Gap-schema input has its days reconstructed per user.
/// Throws ConfigError for a missing named column, DataError for an empty
/// file or a negative gap.
ParseResult parse_transactions(std::istream& in, const CsvFormat& format);

struct OrderGap {
  std::int64_t basket_seq = 0;
  std::optional<Day> gap;  // absent for a user's first order
};

struct OrderDay {
  std::int64_t basket_seq = 0;
  Day day = 0;
  bool operator==(const OrderDay&) const = default;
};

/// Cumulative sum of inter-order gaps, first order on day 0. `orders` must be
/// sorted by basket_seq; only the first order may lack a gap.
/// Throws DataError naming the user for a negative or missing gap.
std::vector<OrderDay> reconstruct_days(const std::string& user_id,
                                       const std::vector<OrderGap>& orders);

struct HistoryBuild {
  std::vector<UserHistory> histories;  // sorted by user_id
  std::size_t dropped_users = 0;       // fewer than two baskets
};

HistoryBuild build_histories(const std::vector<Transaction>& transactions);

struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  std::uint64_t seed = 0;
};

/// Indices into the history list, each part sorted ascending.
struct UserSplit {
  std::vector<std::size_t> train, val, test;
};

/// Seeded user-level partition. Throws ConfigError for invalid fractions and
/// DataError when a part with non-zero fraction ends up empty.
UserSplit split_users(std::size_t n_users, const SplitSpec& spec);

/// Sorted item vocabulary; index order equals lexicographic order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> items);

  [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
  [[nodiscard]] const std::string& item(std::size_t index) const { return items_.at(index); }
  [[nodiscard]] const std::vector<std::string>& items() const noexcept { return items_; }
  [[nodiscard]] bool contains(const std::string& item) const { return index_.contains(item); }
  /// Throws DataError for an unknown item.
  [[nodiscard]] std::size_t index(const std::string& item) const;
  /// FNV-1a over the sorted item list.
  [[nodiscard]] std::uint64_t hash() const noexcept;

 private:
  std::vector<std::string> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

Vocabulary build_vocabulary(const std::vector<UserHistory>& histories);

/// Canonical history file: one basket per line, `user<TAB>day<TAB>i1,i2,...`.
void write_histories(std::ostream& out, const std::vector<UserHistory>& histories);
/// Parses and validates a canonical history file (users re-sorted, same-day
/// lines merged). Throws DataError on malformed lines.
std::vector<UserHistory> read_histories(std::istream& in);

struct CorpusSummary {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t baskets = 0;
  double baskets_per_user = 0.0;
  double items_per_basket = 0.0;
};

CorpusSummary summarize(const std::vector<UserHistory>& histories);

}  // namespace casenbr
