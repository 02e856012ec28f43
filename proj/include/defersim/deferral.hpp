#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defersim/capacity.hpp"
#include "defersim/dataset.hpp"
#include "defersim/experts.hpp"

namespace defersim {

// decision_maker: expert index >= 0, or one of the two automatic decisions.
constexpr int kAutoDecline = -1;
constexpr int kAutoAccept = -2;

struct AssignmentRow {
  std::int64_t instance_id;
  int batch;
  int decision_maker;
  int final_decision;
};

struct Assignment {
  std::vector<AssignmentRow> rows;
};

enum class Policy : int { rel = 0, greedy = 1, linear = 2 };
const char* to_string(Policy p);
Policy policy_from_string(const std::string& s);

// Alert-review flagging. Input order defines "batch order"; output index
// lists refer to it. Sorting is by descending score with ties broken by
// ascending instance id; the top round(rate * n) are declined, the next
// `budget` become deferral candidates, the rest are accepted.
struct FlagResult {
  std::vector<int> declined;
  std::vector<int> candidates;  // in descending-score order
  std::vector<int> accepted;
};
FlagResult flag_batch(const std::vector<std::int64_t>& ids,
                      const std::vector<double>& scores,
                      double auto_decline_rate, long deferral_budget);

// Assignment fragments map each candidate to an expert index or kAutoAccept.

// Top-capacity candidates (in the given order) are shuffled and dealt
// round-robin over a shuffled expert order; the tail beyond total capacity
// is auto-accepted, which keeps the lowest-score leftovers accepted when
// candidates arrive in flag_batch order.
std::vector<int> rel_random_assign(int n_candidates,
                                   const std::vector<int>& capacities,
                                   std::uint64_t seed);

// Case-by-case minimum-predicted-loss choice among experts with remaining
// capacity; ties go to the lower expert index; auto-accept once capacity is
// exhausted. `loss` is candidates x experts.
std::vector<int> greedy_assign(const std::vector<std::vector<double>>& loss,
                               const std::vector<int>& capacities);

// Exact batch-loss minimizer via min-cost flow (successive shortest
// augmenting paths with potentials). The assignment polytope is integral,
// so the rounded-cost integer optimum is the LP optimum at 1e-9 cost
// resolution. pre: sum(capacities) >= n_candidates.
std::vector<int> optimal_assign(const std::vector<std::vector<double>>& loss,
                                const std::vector<int>& capacities);

// Predicted (or oracle) deferral-loss source for greedy/linear policies:
// Eq.-style pair (P(FP), P(FN)) for deferring one instance to one expert.
class DeferralLossModel {
 public:
  virtual ~DeferralLossModel() = default;
  virtual std::pair<double, double> fp_fn(const Instance& inst,
                                          int expert_index) const = 0;
  double loss(const Instance& inst, int expert_index, double lambda) const {
    const auto [fp, fn] = fp_fn(inst, expert_index);
    return lambda * fp + fn;
  }
};

// Ground-truth plug-in: uses the known label and the team's closed-form
// flip probabilities, so P(FP) = 1{y=0} p_fp and P(FN) = 1{y=1} p_fn.
class OracleLossModel : public DeferralLossModel {
 public:
  OracleLossModel(const ExpertTeam& team) : team_(team) {}
  std::pair<double, double> fp_fn(const Instance& inst,
                                  int expert_index) const override;

 private:
  const ExpertTeam& team_;
};

struct PolicyRunConfig {
  double auto_decline_rate = 0.05;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

// Full batch-wise run of one policy over a scenario: flag, assign, resolve
// expert decisions from the test-regime prediction table. greedy/linear
// need `loss_model`; candidates beyond total capacity are auto-accepted
// lowest-score-first for every policy.
Assignment run_policy(Policy policy, const Dataset& data,
                      const std::vector<int>& split_positions,
                      const CapacityScenario& scenario,
                      const PredictionTable& predictions,
                      const DeferralLossModel* loss_model,
                      const PolicyRunConfig& config);

// Closed-form expected cost-sensitive loss of an assignment under the true
// team error model. Deterministic companion to the sampled evaluation.
double expected_assignment_loss(const Assignment& assignment,
                                const Dataset& data, const ExpertTeam& team,
                                double lambda);

void save_assignment(const Assignment& assignment, const ExpertTeam& team,
                     const std::string& path,
                     const std::string& header_comment = "");

}  // namespace defersim
