#include "casenbr/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "casenbr/errors.hpp"
#include "casenbr/rng.hpp"

namespace casenbr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_record(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  // Accept integral floats such as "7.0" (pandas exports).
  if (const auto dot = s.find('.'); dot != std::string_view::npos) {
    const auto frac = s.substr(dot + 1);
    if (!std::all_of(frac.begin(), frac.end(), [](char c) { return c == '0'; })) return std::nullopt;
    s = s.substr(0, dot);
  }
  Int v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<Day> parse_date(std::string_view s) {
  s = trim(s);
  int y = 0, m = 0, d = 0;
  auto take = [](std::string_view part) { return parse_int<int>(part); };
  std::optional<int> a, b, c;
  if (const auto p1 = s.find('-'); p1 != std::string_view::npos) {
    const auto p2 = s.find('-', p1 + 1);
    if (p2 == std::string_view::npos) return std::nullopt;
    a = take(s.substr(0, p1));
    b = take(s.substr(p1 + 1, p2 - p1 - 1));
    c = take(s.substr(p2 + 1, 2));
    if (!a || !b || !c) return std::nullopt;
    y = *a, m = *b, d = *c;
  } else if (const auto q1 = s.find('/'); q1 != std::string_view::npos) {
    const auto q2 = s.find('/', q1 + 1);
    if (q2 == std::string_view::npos) return std::nullopt;
    a = take(s.substr(0, q1));
    b = take(s.substr(q1 + 1, q2 - q1 - 1));
    c = take(s.substr(q2 + 1, 4));
    if (!a || !b || !c) return std::nullopt;
    m = *a, d = *b, y = *c;
  } else {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

bool representable_id(const std::string& id) {
  return !id.empty() && id.find_first_of(",\t\n") == std::string::npos;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("input CSV has no column named '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

ParseResult parse_transactions(std::istream& in, const CsvFormat& format) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("input CSV is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_record(line, format.delimiter);
  const std::size_t u_col = column_index(header, format.user_column);
  const std::size_t i_col = column_index(header, format.item_column);
  const bool gap_schema = format.schema == Schema::gap;
  const std::size_t d_col = gap_schema ? 0 : column_index(header, format.day_column);
  const std::size_t o_col = gap_schema ? column_index(header, format.order_column) : 0;
  const std::size_t g_col = gap_schema ? column_index(header, format.gap_column) : 0;
  const std::size_t needed = std::max({u_col, i_col, d_col, o_col, g_col}) + 1;

  ParseResult result;
  // Gap schema: (user → (order_seq → gap)).
  std::map<std::string, std::map<std::int64_t, std::optional<Day>>> orders;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++rows;
    const auto f = split_record(line, format.delimiter);
    if (f.size() < needed || !representable_id(f[u_col]) || !representable_id(f[i_col])) {
      ++result.skipped_rows;
      continue;
    }
    Transaction t{f[u_col], f[i_col], 0, 0};
    if (gap_schema) {
      const auto seq = parse_int<std::int64_t>(f[o_col]);
      const auto gap_text = trim(f[g_col]);
      const auto gap = parse_int<Day>(gap_text);
      if (!seq || (!gap_text.empty() && !gap)) {
        ++result.skipped_rows;
        continue;
      }
      t.basket_seq = *seq;
      auto& user_orders = orders[t.user_id];
      const auto [it, inserted] = user_orders.emplace(*seq, gap);
      if (!inserted && it->second != gap) {
        throw DataError("user " + t.user_id + " order " + std::to_string(*seq) +
                        " has conflicting gap values");
      }
    } else {
      const auto day = format.day_format == DayFormat::integer ? parse_int<Day>(f[d_col])
                                                               : parse_date(f[d_col]);
      if (!day || *day < 0) {
        ++result.skipped_rows;
        continue;
      }
      t.day = *day;
      t.basket_seq = *day;
    }
    result.transactions.push_back(std::move(t));
  }
  if (rows == 0) throw DataError("input CSV has a header but no rows");

  if (gap_schema) {
    std::map<std::string, std::map<std::int64_t, Day>> days;
    for (const auto& [user, seqs] : orders) {
      std::vector<OrderGap> list;
      list.reserve(seqs.size());
      for (const auto& [seq, gap] : seqs) list.push_back({seq, gap});
      auto& out = days[user];
      for (const auto& od : reconstruct_days(user, list)) out[od.basket_seq] = od.day;
    }
    for (auto& t : result.transactions) t.day = days[t.user_id][t.basket_seq];
  }
  return result;
}

std::vector<OrderDay> reconstruct_days(const std::string& user_id,
                                       const std::vector<OrderGap>& orders) {
  std::vector<OrderDay> out;
  out.reserve(orders.size());
  Day day = 0;
  for (std::size_t k = 0; k < orders.size(); ++k) {
    if (k > 0) {
      if (!orders[k].gap)
        throw DataError("user " + user_id + " order " + std::to_string(orders[k].basket_seq) +
                        " has no days-since-prior value");
      if (*orders[k].gap < 0)
        throw DataError("user " + user_id + " has negative inter-order gap " +
                        std::to_string(*orders[k].gap));
      day += *orders[k].gap;
    }
    out.push_back({orders[k].basket_seq, day});
  }
  return out;
}

HistoryBuild build_histories(const std::vector<Transaction>& transactions) {
  std::map<std::string, std::map<Day, std::set<std::string>>> grouped;
  for (const auto& t : transactions) grouped[t.user_id][t.day].insert(t.item_id);
  HistoryBuild out;
  for (auto& [user, by_day] : grouped) {
    if (by_day.size() < 2) {
      ++out.dropped_users;
      continue;
    }
    UserHistory h{user, {}};
    h.baskets.reserve(by_day.size());
    for (auto& [day, items] : by_day) h.baskets.push_back({day, {items.begin(), items.end()}});
    out.histories.push_back(std::move(h));
  }
  return out;
}

UserSplit split_users(std::size_t n_users, const SplitSpec& spec) {
  if (!(spec.train_frac > 0.0 && spec.train_frac < 1.0) ||
      !(spec.val_frac >= 0.0 && spec.val_frac < 1.0) || spec.train_frac + spec.val_frac >= 1.0) {
    throw ConfigError("invalid split fractions: train " + std::to_string(spec.train_frac) +
                      ", val " + std::to_string(spec.val_frac));
  }
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * n_users + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * n_users + 1e-9));
  if (n_train == 0 || (spec.val_frac > 0.0 && n_val == 0) || n_train + n_val >= n_users) {
    throw DataError("split of " + std::to_string(n_users) + " users leaves an empty part");
  }
  std::vector<std::size_t> order(n_users);
  for (std::size_t i = 0; i < n_users; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(order));
  UserSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Vocabulary::Vocabulary(std::vector<std::string> items) : items_(std::move(items)) {
  std::sort(items_.begin(), items_.end());
  items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
  index_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) index_.emplace(items_[i], i);
}

std::size_t Vocabulary::index(const std::string& item) const {
  const auto it = index_.find(item);
  if (it == index_.end()) throw DataError("item '" + item + "' is not in the vocabulary");
  return it->second;
}

std::uint64_t Vocabulary::hash() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : items_) {
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    h = (h ^ 0xffU) * 0x100000001b3ULL;
  }
  return h;
}

Vocabulary build_vocabulary(const std::vector<UserHistory>& histories) {
  std::vector<std::string> items;
  for (const auto& h : histories)
    for (const auto& b : h.baskets) items.insert(items.end(), b.items.begin(), b.items.end());
  return Vocabulary(std::move(items));
}

void write_histories(std::ostream& out, const std::vector<UserHistory>& histories) {
  for (const auto& h : histories)
    for (const auto& b : h.baskets) {
      out << h.user_id << '\t' << b.day << '\t';
      for (std::size_t i = 0; i < b.items.size(); ++i) out << (i ? "," : "") << b.items[i];
      out << '\n';
    }
}

std::vector<UserHistory> read_histories(std::istream& in) {
  std::map<std::string, std::map<Day, std::set<std::string>>> grouped;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw DataError("history line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    const std::string user = line.substr(0, t1);
    const auto day = parse_int<Day>(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    if (user.empty() || !day || *day < 0) throw DataError("history line " + std::to_string(line_no) + ": bad user or day");
    auto& items = grouped[user][*day];
    std::string_view rest = trim(std::string_view(line).substr(t2 + 1));
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = trim(rest.substr(0, comma));
      if (!item.empty()) items.emplace(item);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (items.empty()) throw DataError("history line " + std::to_string(line_no) + ": empty basket");
  }
  std::vector<UserHistory> out;
  for (auto& [user, by_day] : grouped) {
    UserHistory h{user, {}};
    for (auto& [day, items] : by_day) h.baskets.push_back({day, {items.begin(), items.end()}});
    out.push_back(std::move(h));
  }
  return out;
}

CorpusSummary summarize(const std::vector<UserHistory>& histories) {
  CorpusSummary s;
  s.users = histories.size();
  s.items = build_vocabulary(histories).size();
  std::size_t item_slots = 0;
  for (const auto& h : histories) {
    s.baskets += h.baskets.size();
    for (const auto& b : h.baskets) item_slots += b.items.size();
  }
  if (s.users) s.baskets_per_user = static_cast<double>(s.baskets) / static_cast<double>(s.users);
  if (s.baskets) s.items_per_basket = static_cast<double>(item_slots) / static_cast<double>(s.baskets);
  return s;
}

}  // namespace casenbr
