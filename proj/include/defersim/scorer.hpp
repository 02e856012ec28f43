#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "defersim/dataset.hpp"

namespace defersim {

struct ScorerConfig {
  int iterations = 400;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

// Regularized logistic model trained by full-batch gradient descent with a
// fixed iteration budget. Stands in for whatever production classifier the
// user plugs in; it only has to produce calibrated-ish scores in [0,1]
// deterministically.
struct LogisticScorer {
  std::vector<double> weights;
  double bias = 0.0;
  FeatureScaler scaler;
  ScorerConfig config;

  double score(std::span<const double> x) const;
  void attach_scores(Dataset& data) const;  // fills score on every instance
};

// pre: train non-empty with both classes present.
LogisticScorer fit_reference_scorer(const Dataset& data,
                                    const std::vector<int>& train,
                                    const std::vector<int>& val,
                                    const ScorerConfig& config = {});

double sigmoid(double x);

}  // namespace defersim
