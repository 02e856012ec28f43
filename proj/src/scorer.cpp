#include "defersim/scorer.hpp"

#include <cmath>

#include "defersim/errors.hpp"

namespace defersim {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double LogisticScorer::score(std::span<const double> x) const {
  double z = bias;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    z += weights[c] * (x[c] - scaler.mean[c]) / scaler.stddev[c];
  }
  return sigmoid(z);
}

void LogisticScorer::attach_scores(Dataset& data) const {
  for (auto& inst : data.instances) {
    inst.score = score(inst.features);
    inst.has_score = true;
  }
}

LogisticScorer fit_reference_scorer(const Dataset& data,
                                    const std::vector<int>& train,
                                    const std::vector<int>& val,
                                    const ScorerConfig& config) {
  (void)val;  // reserved for model selection by stronger plug-in learners
  if (train.empty())
    throw degenerate_data_error("fit_reference_scorer: empty training set");
  long n_pos = 0;
  for (int p : train) n_pos += data.instances[p].label;
  if (n_pos == 0 || n_pos == static_cast<long>(train.size())) {
    throw degenerate_data_error(
        "fit_reference_scorer: training data contains a single class");
  }

  LogisticScorer model;
  model.config = config;
  model.scaler.fit(data, train);
  const std::size_t d = data.dim();
  model.weights.assign(d, 0.0);
  model.bias = 0.0;

  std::vector<std::vector<double>> xs;
  xs.reserve(train.size());
  std::vector<int> ys;
  ys.reserve(train.size());
  for (int p : train) {
    xs.push_back(model.scaler.apply(data.instances[p].features));
    ys.push_back(data.instances[p].label);
  }

  const double n = static_cast<double>(train.size());
  std::vector<double> grad(d);
  for (int it = 0; it < config.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double z = model.bias;
      for (std::size_t c = 0; c < d; ++c) z += model.weights[c] * xs[i][c];
      const double err = sigmoid(z) - ys[i];
      for (std::size_t c = 0; c < d; ++c) grad[c] += err * xs[i][c];
      grad_b += err;
    }
    for (std::size_t c = 0; c < d; ++c) {
      model.weights[c] -=
          config.learning_rate * (grad[c] / n + config.l2 * model.weights[c]);
    }
    model.bias -= config.learning_rate * grad_b / n;
  }
  return model;
}

}  // namespace defersim
