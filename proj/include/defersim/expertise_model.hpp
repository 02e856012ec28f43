#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "defersim/dataset.hpp"
#include "defersim/deferral.hpp"
#include "defersim/experts.hpp"

namespace defersim {

enum class Outcome : int { tp = 0, fp = 1, tn = 2, fn = 3 };
const char* to_string(Outcome o);
Outcome outcome_of(int label, int prediction);

struct OutcomeExample {
  std::vector<double> features;
  double score = 0.0;
  int expert_index = 0;
  Outcome outcome = Outcome::tn;
};

// One example per log entry; outcome derived from (label, prediction).
std::vector<OutcomeExample> build_training_set(const PredictionLog& log,
                                               const Dataset& data);

struct OutcomeModelConfig {
  int iterations = 600;
  double learning_rate = 1.5;
  double l2 = 1e-6;
  bool include_score = true;      // experts observe the model score
  bool class_weighting = false;   // inverse-frequency example weights
  std::uint64_t seed = 0;
};

// Multinomial logistic regression over standardized features (optionally
// plus the model score) with a per-expert intercept vector, i.e. expert id
// one-hot encoded. Deterministic full-batch gradient descent from zero
// init; the interface stays pluggable for stronger learners.
class OutcomeModel {
 public:
  static constexpr int kClasses = 4;

  std::array<double, kClasses> predict_proba(std::span<const double> x_raw,
                                             double score,
                                             int expert_index) const;
  // lambda * P(FP) + P(FN); throws unknown_expert_error for experts absent
  // from the training data.
  double predicted_loss(std::span<const double> x_raw, double score,
                        int expert_index, double lambda) const;

  int n_experts() const { return static_cast<int>(expert_counts_.size()); }
  bool expert_seen(int expert_index) const;

  void save(const std::string& path, const std::string& config_hash) const;
  static OutcomeModel load(const std::string& path,
                           std::string* config_hash = nullptr);

  friend OutcomeModel fit_outcome_model(const std::vector<OutcomeExample>&,
                                        int, const OutcomeModelConfig&);

 private:
  std::vector<std::array<double, kClasses>> feat_w_;    // per feature
  std::array<double, kClasses> score_w_{};              // model-score term
  std::vector<std::array<double, kClasses>> expert_w_;  // per expert id
  std::array<double, kClasses> bias_{};
  FeatureScaler scaler_;
  double score_mean_ = 0.0, score_stddev_ = 1.0;
  std::vector<long> expert_counts_;
  OutcomeModelConfig config_;

  std::array<double, kClasses> logits(std::span<const double> x_std,
                                      double score_std, int expert_index) const;
};

// pre: at least two distinct outcomes present.
OutcomeModel fit_outcome_model(const std::vector<OutcomeExample>& examples,
                               int n_experts, const OutcomeModelConfig& config);

// Loss-model adapter feeding run_policy from a fitted OutcomeModel.
class LearnedLossModel : public DeferralLossModel {
 public:
  LearnedLossModel(const OutcomeModel& model) : model_(model) {}
  std::pair<double, double> fp_fn(const Instance& inst,
                                  int expert_index) const override;

 private:
  const OutcomeModel& model_;
};

}  // namespace defersim
