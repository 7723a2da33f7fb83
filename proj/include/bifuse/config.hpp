#pragma once

#include <cstdint>
#include <string>

#include "bifuse/search.hpp"
#include "bifuse/tasks.hpp"

namespace bifuse {

// One experiment as described by a YAML file: the search space, the task
// (generated or loaded from a manifest), and both training levels.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/out";
  SearchSpaceConfig space;  // features are filled in once the task is known
  TrainConfig training;
  std::string task_kind = "planted";  // "planted" or "manifest"
  PlantedTaskSpec planted;
  std::string manifest_path;
};

// Parses and validates a config file.  Errors carry the field path, e.g.
// "config: training.epochs: must be a positive integer".
RunConfig load_run_config(const std::string& yaml_path);

// Builds the dataset the config describes (generating the planted task or
// loading the manifest) and completes cfg.space.features from it.
Dataset load_task(RunConfig& cfg);

// Output directory with the BIFUSE_OUT_ROOT environment override applied:
// when set, relative output_dir values are rooted there.
std::string resolve_output_dir(const RunConfig& cfg);

}  // namespace bifuse
