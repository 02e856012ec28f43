#pragma once

#include <string>

#include "defersim/config.hpp"
#include "defersim/report.hpp"

namespace defersim {

// Staged orchestration over an artifact directory. Every emitted file
// embeds the config hash; downstream stages refuse mismatched inputs.
// Stages are idempotent: rerunning with the same config rewrites
// byte-identical artifacts.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }

  // Subcommand entry points.
  void validate() const;    // config-only checks
  void gen_experts();       // dataset (if synthetic), scorer.json, team.json
  void gen_scenarios();     // scenarios/index.json + one H matrix per scenario
  void run_policies();      // prediction logs, outcome model, assignments, reports.csv
  void report();            // summary.csv from reports.csv
  void run_all();

  // Paths under the output directory.
  std::string path(const std::string& name) const;

 private:
  struct Loaded;  // lazily recomputed data context shared across stages

  void ensure_out_dir() const;
  void mark_incomplete(const std::string& stage) const;
  void clear_incomplete() const;
  // A stage may run when no INCOMPLETE marker exists or the marker names
  // this stage or a later one (rerunning the failed stage, or rebuilding
  // upstream, is always safe; consuming downstream of a failure is not).
  void check_stage_allowed(const std::string& stage) const;
  void require_hash(const std::string& artifact, const std::string& found) const;

  Loaded load_context(bool from_artifacts);

  RunConfig config_;
  std::string hash_;
};

// Full pipeline with CLI-style error mapping: returns 0 on success, 1 on
// validation failure, 2 on runtime failure; messages go to stderr.
int run_pipeline(const RunConfig& config);

}  // namespace defersim
