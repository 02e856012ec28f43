#include "defersim/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "defersim/errors.hpp"
#include "defersim/rng.hpp"
#include "defersim/scorer.hpp"

namespace defersim {

Dataset generate_synthetic_dataset(const SyntheticConfig& config) {
  if (config.rows < 1 || config.features < 1 || config.months < 1)
    throw config_error("synthetic dataset: rows/features/months must be >= 1");
  if (config.protected_index < 0 || config.protected_index >= config.features)
    throw config_error("synthetic dataset: protected_index out of range");

  Dataset data;
  data.group_values = {"reference", "protected"};
  for (int c = 0; c < config.features; ++c) {
    if (c == config.protected_index) {
      data.feature_names.push_back("age");
    } else {
      char name[16];
      std::snprintf(name, sizeof(name), "f%d", c);
      data.feature_names.push_back(name);
    }
  }

  // Fixed ground-truth direction; the protected feature gets a positive
  // weight so the base task itself carries a group disparity.
  Rng weight_rng(derive_seed(config.seed, "synthetic-weights"));
  std::vector<double> theta(config.features);
  double norm = 0.0;
  for (double& w : theta) {
    w = weight_rng.normal();
    norm += w * w;
  }
  norm = std::sqrt(norm);
  for (double& w : theta) w = config.signal_scale * w / norm;
  theta[config.protected_index] = std::abs(theta[config.protected_index]) + 0.3;

  Rng rng(derive_seed(config.seed, "synthetic-rows"));
  data.instances.reserve(config.rows);
  for (int i = 0; i < config.rows; ++i) {
    Instance inst;
    inst.id = i;
    inst.features.resize(config.features);
    for (int c = 0; c < config.features; ++c) inst.features[c] = rng.normal();
    double logit = config.base_logit;
    for (int c = 0; c < config.features; ++c) logit += theta[c] * inst.features[c];
    inst.label = rng.uniform01() < sigmoid(logit) ? 1 : 0;
    inst.group = inst.features[config.protected_index] > config.protected_cut ? 1 : 0;
    inst.month = 1 + static_cast<int>(rng.below(config.months));
    data.instances.push_back(std::move(inst));
  }
  return data;
}

}  // namespace defersim
