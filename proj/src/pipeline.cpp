#include "casenbr/pipeline.hpp"

#include <fstream>

#include "casenbr/errors.hpp"
#include "casenbr/log.hpp"

namespace casenbr {

const ExampleSet& Dataset::part(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

Dataset prepare_dataset(std::vector<UserHistory> histories, const RunConfig& config) {
  Dataset d;
  d.histories = std::move(histories);
  d.vocab = build_vocabulary(d.histories);
  d.split = split_users(d.histories.size(), config.split());
  const auto options = config.example_options();
  d.train = build_example_set(d.histories, d.split.train, d.vocab, options);
  d.val = build_example_set(d.histories, d.split.val, d.vocab, options);
  d.test = build_example_set(d.histories, d.split.test, d.vocab, options);
  const std::size_t capped = d.train.capped + d.val.capped + d.test.capped;
  if (capped > 0)
    log::warn(std::to_string(capped) + " examples hit the candidate cap of " +
              std::to_string(options.max_candidates));
  return d;
}

std::vector<UserHistory> load_histories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open history file " + path.string());
  return read_histories(in);
}

void save_histories(const std::filesystem::path& path, const std::vector<UserHistory>& histories) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_histories(out, histories);
}

}  // namespace casenbr
