#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defersim/capacity.hpp"
#include "defersim/dataset.hpp"
#include "defersim/deferral.hpp"
#include "defersim/expertise_model.hpp"
#include "defersim/experts.hpp"
#include "defersim/scorer.hpp"
#include "defersim/synthetic.hpp"

namespace defersim {

struct DatasetConfig {
  bool synthetic = true;
  SyntheticConfig synth;
  std::string path;
  Schema schema{.label = "fraud_bool", .month = "month", .group = "age_group", .score = "", .delimiter = ','};
};

struct LambdaConfig {
  bool from_threshold = true;  // lambda = t / (1 - t) with t from validation
  double fixed = 1.0;
};

struct GridSeedConfig {
  int n_seeds = 5;                       // derived from the master seed
  std::vector<std::uint64_t> explicit_seeds;  // overrides n_seeds when nonempty
};

// Whole-run configuration. The master seed fully determines every derived
// stream via derive_seed(master, tag, indices).
struct RunConfig {
  DatasetConfig dataset;
  TemporalSplit split;
  ScorerConfig scorer;
  double target_fpr = 0.05;
  TeamConfig team;
  std::string protected_feature = "age";
  int training_batch_size = 500;
  double training_deferral_rate = 0.2;
  OutcomeModelConfig outcome_model;
  GridConfig grid;  // grid.seeds filled from grid_seeds + master seed
  GridSeedConfig grid_seeds;
  std::vector<Policy> policies = {Policy::rel, Policy::greedy, Policy::linear};
  double auto_decline_rate = 0.05;
  LambdaConfig lambda;
  std::string out_dir = "out";
  std::uint64_t master_seed = 1234;
  int workers = 0;  // 0 = hardware concurrency
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);

// Canonical serialization (sorted keys, every field explicit); two configs
// hash equal iff they run identically.
std::string canonical_config_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// Structural checks that need no data: ranges, referenced files, counts.
void validate_run_config(const RunConfig& config);

}  // namespace defersim
