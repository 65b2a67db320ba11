#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "casenbr/config.hpp"

namespace casenbr {

/// Histories, vocabulary, user split and leave-one-out examples for one run.
struct Dataset {
  std::vector<UserHistory> histories;
  Vocabulary vocab;
  UserSplit split;
  ExampleSet train, val, test;

  [[nodiscard]] const ExampleSet& part(const std::string& name) const;
};

Dataset prepare_dataset(std::vector<UserHistory> histories, const RunConfig& config);

std::vector<UserHistory> load_histories(const std::filesystem::path& path);
void save_histories(const std::filesystem::path& path, const std::vector<UserHistory>& histories);

}  // namespace casenbr
