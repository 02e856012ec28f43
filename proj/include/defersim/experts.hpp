#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "defersim/dataset.hpp"
#include "defersim/rng.hpp"

namespace defersim {

enum class ExpertGroup : int { standard = 0, unfair = 1, agreeing = 2, sparse = 3 };

const char* to_string(ExpertGroup g);
ExpertGroup expert_group_from_string(const std::string& s);

// Five-parameter instance-dependent-noise error model of one synthetic
// decision-maker. `w` lives in standardized feature space.
struct ExpertParams {
  std::string id;
  double beta0 = 0.0;  // false-positive intercept
  double beta1 = 0.0;  // false-negative intercept
  double alpha = 0.0;  // feature-dependence magnitude, >= 0
  std::vector<double> w;
  double w_m = 0.0;  // model-score weight
  ExpertGroup group = ExpertGroup::standard;
  double target_fpr = 0.0;  // sampled calibration targets, kept for audit
  double target_fnr = 0.0;
};

struct GroupConfig {
  int count = 0;
  double target_fpr_lo = 0.02, target_fpr_hi = 0.08;
  double target_fnr_lo = 0.30, target_fnr_hi = 0.60;
  double alpha_lo = 1.0, alpha_hi = 3.0;
  // Expected fraction of nonzero feature weights; < 0 means the default
  // 12/d of the standard recipe.
  double sparsity = -1.0;
  double w_m_mean = -0.5, w_m_stddev = 0.5;
  double protected_boost = 2.0;  // unfair group only
};

struct TeamConfig {
  GroupConfig standard{.count = 20};
  GroupConfig unfair{.count = 10};
  GroupConfig agreeing{.count = 10};
  GroupConfig sparse{.count = 10, .sparsity = 0.25};
  std::uint64_t seed = 0;
  double calibration_tol = 5e-4;
};

// Experts plus the frozen standardization statistics and operating
// threshold their error model was calibrated against.
struct ExpertTeam {
  std::vector<ExpertParams> experts;
  FeatureScaler scaler;
  double threshold = 0.5;  // t used inside the score transform

  std::vector<int> members_of(ExpertGroup g) const;
  int index_of(const std::string& expert_id) const;  // -1 if absent
};

// Piecewise-linear remap of the model score around the operating threshold:
// (m - t) / (2t) below t, (m - t) / (2(1-t)) above. Range [-0.5, 0.5],
// zero and continuous at m = t.
double transform_score(double m, double t);

// Normalized projection feeding both error probabilities. Defined as 0 when
// all weights vanish.
double error_projection(const ExpertParams& e, std::span<const double> x_std,
                        double m, double t);

struct ErrorProbabilities {
  double p_fp;  // P(predict 1 | y = 0)
  double p_fn;  // P(predict 0 | y = 1)
};

// p_fp = sigmoid(beta0 - alpha * z), p_fn = sigmoid(beta1 + alpha * z) with
// z the normalized projection above. `x_std` must already be standardized.
ErrorProbabilities error_probabilities(const ExpertParams& e,
                                       std::span<const double> x_std, double m,
                                       double t);

// Label-flip sampler: draws one uniform from `rng` and flips y with the
// matching error probability.
int sample_prediction(const ExpertParams& e, const Instance& inst,
                      const FeatureScaler& scaler, double t, Rng& rng);

// Bisection on each intercept independently; the mean error rate over the
// calibration sample is monotone in its intercept. Search interval
// [-30, 30]; throws calibration_error when the target cannot be bracketed.
ExpertParams calibrate_intercepts(const ExpertParams& e, const Dataset& data,
                                  const std::vector<int>& sample,
                                  const FeatureScaler& scaler, double t,
                                  double target_fpr, double target_fnr,
                                  double tol);

// Closed-form mean p_fp over the sample's negatives and mean p_fn over its
// positives. Used by calibration, tests, and the fairness checks.
struct MeanErrorRates {
  double mean_fpr;
  double mean_fnr;
};
MeanErrorRates mean_error_rates(const ExpertParams& e, const Dataset& data,
                                const std::vector<int>& sample,
                                const FeatureScaler& scaler, double t);

// Samples one team per the four group recipes and calibrates every member
// to its drawn target rates on `calibration_sample`. Deterministic in
// config.seed; each expert draws from its own derived stream, so changing
// one group's count never perturbs another group.
ExpertTeam generate_team(const TeamConfig& config, const Dataset& data,
                         const std::vector<int>& calibration_sample,
                         int protected_index, double threshold);

struct PredEntry {
  std::int64_t instance_id;
  int expert_index;
  int prediction;
};

struct PredictionLog {
  std::vector<PredEntry> entries;
};

// One sampled prediction per (instance, expert) pair; stream derived from
// (seed, instance id, expert index), so adding experts or instances never
// disturbs existing entries.
PredictionLog full_prediction_table(const ExpertTeam& team, const Dataset& data,
                                    const std::vector<int>& positions,
                                    std::uint64_t seed);

// Dense (instance, expert) lookup built from a log.
struct PredictionTable {
  std::unordered_map<std::int64_t, int> row_of_id;
  std::vector<std::vector<signed char>> preds;  // -1 where no entry exists
  int n_experts = 0;

  static PredictionTable build(const PredictionLog& log, int n_experts);
  // -1 when the pair is absent.
  int lookup(std::int64_t instance_id, int expert_index) const;
};

void save_prediction_log(const PredictionLog& log, const ExpertTeam& team,
                         const std::string& path,
                         const std::string& header_comment = "");
PredictionLog load_prediction_log(const std::string& path,
                                  const ExpertTeam& team,
                                  std::string* header_comment = nullptr);

void save_team(const ExpertTeam& team, const std::string& path,
               const std::string& config_hash);
ExpertTeam load_team(const std::string& path, std::string* config_hash = nullptr);

}  // namespace defersim
