#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "casenbr/baselines.hpp"
#include "casenbr/ingest.hpp"
#include "casenbr/model.hpp"
#include "casenbr/signal.hpp"
#include "casenbr/synth.hpp"
#include "casenbr/train.hpp"

namespace casenbr {

/// Every tunable, addressed by dotted keys such as `model.heads` or
/// `tifu.alpha`. `train.seed` is the root seed for splitting, initialization,
/// shuffling and dropout; synthetic corpora use `synth.seed`.
struct RunConfig {
  CsvFormat csv;
  double train_frac = 0.8;
  double val_frac = 0.1;
  std::size_t max_candidates = 512;
  ModelConfig model;
  TrainConfig train;
  TifuConfig tifu;
  SynthSpec synth;
  std::vector<std::size_t> ks = {1, 3, 5, 10};
  std::size_t eval_batch_size = 64;

  /// Merges a nested or dotted JSON object; unknown keys are a ConfigError.
  void apply(const nlohmann::json& j);
  /// `key=value`; the value is parsed as JSON, falling back to a plain string.
  void set(const std::string& assignment);
  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] static std::vector<std::string> keys();

  [[nodiscard]] SplitSpec split() const;
  [[nodiscard]] ExampleOptions example_options() const;
  [[nodiscard]] std::uint64_t init_seed() const;
  /// Seeds derived from the root, for the run manifest.
  [[nodiscard]] nlohmann::json seed_tree() const;
};

/// Defaults, then the optional file, then each override in order.
RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides);

/// Writes `config.resolved.json` (config plus seed tree) into `dir`.
void write_resolved_config(const std::filesystem::path& dir, const RunConfig& config);

/// CSV format presets for `--schema`: absolute, gap, tafeng.
CsvFormat schema_preset(const std::string& name);

}  // namespace casenbr
