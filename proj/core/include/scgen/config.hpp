#pragma once

#include <string>

#include "scgen/train.hpp"

namespace scgen {

// Everything a training run needs; serialized as JSON (see docs/CONFIG.md).
struct ExperimentConfig {
  std::string preset = "families4";
  TrainConfig train;
  std::string data_dir;  // optional; --data takes precedence
  std::int64_t sample_every = 0;  // 0: samples with checkpoints only

  void validate() const;
};

// Defaults of a named preset: families4 or paper-full.
ExperimentConfig preset_config(const std::string& name);

// Starts from the preset named by "preset" (default families4) and applies
// the document on top. Unknown keys and wrong types raise ConfigError with
// the dotted key path.
ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& source = "<config>");
ExperimentConfig load_experiment_config(const std::string& path);

// Fully resolved document; parse(to_json(c)) reproduces c.
std::string to_json(const ExperimentConfig& cfg);

}  // namespace scgen
