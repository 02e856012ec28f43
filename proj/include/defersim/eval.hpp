#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defersim/dataset.hpp"
#include "defersim/deferral.hpp"

namespace defersim {

// lambda = t / (1 - t): the cost ratio implied by operating threshold t.
double lambda_from_threshold(double t);

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion_counts(const std::vector<int>& decisions,
                                 const std::vector<int>& labels);

// lambda * N(FP) + N(FN) over paired decisions/labels.
double cost_sensitive_loss(const std::vector<int>& decisions,
                           const std::vector<int>& labels, double lambda);

struct PredictiveEquality {
  double ratio = 1.0;               // min group FPR / max group FPR
  std::vector<double> group_fpr;    // indexed by group id
};

// Per-group FPR ratio; 1.0 when every group FPR is zero. Throws when any
// group has no negatives (its FPR is undefined).
PredictiveEquality predictive_equality(const std::vector<int>& decisions,
                                       const std::vector<int>& labels,
                                       const std::vector<int>& groups);

struct EvaluationReport {
  ConfusionCounts counts;
  double loss = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  double pe = 1.0;
  std::vector<double> group_fpr;
  std::string scenario_label;
  std::string policy;
  std::uint64_t seed = 0;
};

EvaluationReport evaluate_assignment(const Assignment& assignment,
                                     const Dataset& data, double lambda);

// "Model only" row: threshold the score over the given positions.
EvaluationReport evaluate_model_only(const Dataset& data,
                                     const std::vector<int>& positions,
                                     double threshold, double lambda);

struct ElkanCheck {
  double best_threshold = 0.0;   // sweep argmin (smallest on ties)
  double ideal_threshold = 0.0;  // lambda / (1 + lambda)
  double step = 0.0;
  bool tie = false;              // multiple sweep minima
};

// Self-test utility: sweeps (n_steps + 1) thresholds over [0, 1] and
// locates the empirical loss minimum, which for calibrated scores should
// sit within one step of lambda / (1 + lambda).
ElkanCheck elkan_threshold_consistency_check(const std::vector<double>& scores,
                                             const std::vector<int>& labels,
                                             double lambda, int n_steps = 100);

}  // namespace defersim
