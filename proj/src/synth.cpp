#include "casenbr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "casenbr/baselines.hpp"
#include "casenbr/errors.hpp"
#include "casenbr/rng.hpp"

namespace casenbr {

void SynthSpec::validate() const {
  if (n_users == 0) throw ConfigError("synth.n_users must be positive");
  if (periodic_items == 0) throw ConfigError("synth.periodic_items must be positive");
  if (periods.empty()) throw ConfigError("synth.periods must not be empty");
  for (auto p : periods)
    if (p < 2) throw ConfigError("synth.periods must all be at least 2");
  const Day longest = *std::max_element(periods.begin(), periods.end());
  if (horizon < 2 * longest) throw ConfigError("synth.horizon must be at least twice the longest period");
  if (periodic_items > item_pool || distractor_items > item_pool)
    throw ConfigError("synth.item_pool is smaller than the items drawn per user");
  if (!(jitter_sd >= 0.0)) throw ConfigError("synth.jitter_sd must be non-negative");
  if (!(p_miss >= 0.0 && p_miss <= 1.0)) throw ConfigError("synth.p_miss must lie in [0, 1]");
  if (!(distractor_rate >= 0.0)) throw ConfigError("synth.distractor_rate must be non-negative");
}

Day schedule_distance(Day period, Day phase, Day day) {
  if (day <= phase) return phase - day;
  const Day r = (day - phase) % period;
  return std::min(r, period - r);
}

namespace {

std::string label(char family, std::size_t i, std::size_t width) {
  std::string digits = std::to_string(i);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(1, family) + digits;
}

std::vector<std::size_t> draw_distinct(Rng& rng, std::size_t pool, std::size_t n) {
  std::vector<std::size_t> all(pool);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.below(pool - i)]);
  all.resize(n);
  return all;
}

}  // namespace

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t user_width = std::to_string(spec.n_users - 1).size();
  const std::size_t item_width = std::to_string(spec.item_pool - 1).size();
  std::vector<UserHistory> histories(spec.n_users);
  std::vector<std::vector<PlantedCadence>> planted(spec.n_users);

  const auto n = static_cast<std::ptrdiff_t>(spec.n_users);
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t ui = 0; ui < n; ++ui) {
    const auto u = static_cast<std::size_t>(ui);
    Rng rng(derive_seed(spec.seed, "synth.user." + std::to_string(u)));
    const std::string user = label('u', u, user_width);

    const auto periodic = draw_distinct(rng, spec.item_pool, spec.periodic_items);
    const auto distractors = draw_distinct(rng, spec.item_pool, spec.distractor_items);
    std::vector<PlantedCadence> items;
    double rate = 0.0;
    for (auto i : periodic) {
      const Day period = spec.periods[rng.below(spec.periods.size())];
      const Day phase = static_cast<Day>(rng.below(static_cast<std::uint64_t>(period)));
      items.push_back({user, label('p', i, item_width), period, phase});
      rate += (1.0 - spec.p_miss) / static_cast<double>(period);
    }
    rate /= static_cast<double>(items.size());

    const auto& anchor = items[rng.below(items.size())];
    const Day query = anchor.phase + anchor.period * ((spec.horizon - 1 - anchor.phase) / anchor.period);

    std::map<Day, std::vector<std::string>> days;
    std::vector<std::string> target;
    for (const auto& it : items) {
      for (Day s = it.phase; s <= query - 2; s += it.period) {
        if (rng.bernoulli(spec.p_miss)) continue;
        const Day jitter = static_cast<Day>(std::llround(rng.normal(0.0, spec.jitter_sd)));
        days[std::clamp<Day>(s + jitter, 0, query - 1)].push_back(it.item_id);
      }
      if (schedule_distance(it.period, it.phase, query) <= 1) target.push_back(it.item_id);
    }
    const double p_buy = std::min(1.0, spec.distractor_rate * rate);
    for (auto i : distractors) {
      const std::string item = label('d', i, item_width);
      for (Day d = 0; d < query; ++d)
        if (rng.bernoulli(p_buy)) days[d].push_back(item);
    }

    UserHistory h{user, {}};
    for (auto& [day, basket] : days) {
      std::sort(basket.begin(), basket.end());
      basket.erase(std::unique(basket.begin(), basket.end()), basket.end());
      h.baskets.push_back({day, std::move(basket)});
    }
    std::sort(target.begin(), target.end());
    h.baskets.push_back({query, std::move(target)});
    histories[u] = std::move(h);
    planted[u] = std::move(items);
  }

  SynthCorpus corpus;
  corpus.histories = std::move(histories);
  for (auto& p : planted)
    for (auto& c : p) corpus.truth.push_back(std::move(c));
  return corpus;
}

void write_truth_csv(std::ostream& out, std::span<const PlantedCadence> truth) {
  out << "user,item,period,phase\n";
  for (const auto& t : truth)
    out << t.user_id << ',' << t.item_id << ',' << t.period << ',' << t.phase << '\n';
}

std::vector<PlantedCadence> read_truth_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("user,item,period,phase", 0) != 0)
    throw DataError("truth file must start with the header user,item,period,phase");
  std::vector<PlantedCadence> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    PlantedCadence c;
    std::string period, phase;
    if (!std::getline(ss, c.user_id, ',') || !std::getline(ss, c.item_id, ',') ||
        !std::getline(ss, period, ',') || !std::getline(ss, phase))
      throw DataError("truth file line " + std::to_string(lineno) + " has too few fields");
    try {
      c.period = std::stoll(period);
      c.phase = std::stoll(phase);
    } catch (const std::exception&) {
      throw DataError("truth file line " + std::to_string(lineno) + " is not numeric");
    }
    if (c.period < 1 || c.phase < 0)
      throw DataError("truth file line " + std::to_string(lineno) + " has an invalid schedule");
    out.push_back(std::move(c));
  }
  return out;
}

DueDateRanker::DueDateRanker(std::span<const PlantedCadence> truth, const Vocabulary& vocab) {
  for (const auto& t : truth)
    if (vocab.contains(t.item_id))
      planted_[t.user_id][vocab.index(t.item_id)] = {t.period, t.phase};
}

std::vector<std::vector<std::size_t>> DueDateRanker::rank(std::span<const Example> examples,
                                                          std::size_t k) const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    std::vector<double> scores(ex.size(), -std::numeric_limits<double>::infinity());
    const auto user = planted_.find(ex.user_id);
    if (user != planted_.end()) {
      for (std::size_t i = 0; i < ex.size(); ++i) {
        const auto it = user->second.find(ex.candidates[i]);
        if (it == user->second.end()) continue;
        const auto [period, phase] = it->second;
        scores[i] = -static_cast<double>(schedule_distance(period, phase, ex.query_day));
      }
    }
    out.push_back(order_by_score(scores, ex, k));
  }
  return out;
}

}  // namespace casenbr
