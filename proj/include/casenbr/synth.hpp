#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "casenbr/ingest.hpp"
#include "casenbr/metrics.hpp"

namespace casenbr {

struct SynthSpec {
  std::size_t n_users = 2000;
  std::size_t periodic_items = 4;  // per user
  std::size_t distractor_items = 4;
  std::vector<Day> periods = {7, 14, 28};
  double jitter_sd = 1.0;        // days, rounded Gaussian
  double p_miss = 0.1;           // per scheduled occurrence
  double distractor_rate = 2.0;  // relative to the user's mean periodic rate
  Day horizon = 730;
  std::size_t item_pool = 100;  // catalogue size for each item family
  std::uint64_t seed = 1;

  void validate() const;
};

struct PlantedCadence {
  std::string user_id;
  std::string item_id;
  Day period = 0;
  Day phase = 0;  // scheduled days are phase + j * period, j >= 0
};

struct SynthCorpus {
  std::vector<UserHistory> histories;   // sorted by user id; last basket is the target
  std::vector<PlantedCadence> truth;    // periodic items only
};

/// Each user has periodic items bought near phase + j * period and aperiodic
/// distractors bought on uniformly random days at a higher average rate. The
/// final basket sits on a scheduled day of one periodic item and holds exactly
/// the periodic items with a scheduled day within one day of it.
SynthCorpus generate(const SynthSpec& spec);

/// Distance in days from `day` to the nearest scheduled day.
Day schedule_distance(Day period, Day phase, Day day);

void write_truth_csv(std::ostream& out, std::span<const PlantedCadence> truth);
std::vector<PlantedCadence> read_truth_csv(std::istream& in);

/// Ranks planted items by distance to their nearest scheduled day; other
/// items follow in PersonalTop order.
class DueDateRanker final : public Ranker {
 public:
  DueDateRanker(std::span<const PlantedCadence> truth, const Vocabulary& vocab);

  [[nodiscard]] std::string name() const override { return "DueDateOracle"; }
  [[nodiscard]] std::vector<std::vector<std::size_t>> rank(std::span<const Example> examples,
                                                           std::size_t k) const override;

 private:
  std::unordered_map<std::string, std::unordered_map<std::size_t, std::pair<Day, Day>>> planted_;
};

}  // namespace casenbr
