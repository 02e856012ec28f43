#pragma once

#include <cstdint>

#include "defersim/dataset.hpp"

namespace defersim {

// Desk-scale stand-in for the external base dataset: Gaussian features, a
// logistic ground truth, pseudo-months, and a protected attribute carried
// by one feature column so that group membership is learnable (and
// abusable) from the features.
struct SyntheticConfig {
  int rows = 20000;
  int features = 10;
  int months = 8;
  int protected_index = 0;          // which feature column encodes age
  double protected_cut = 0.45;      // group = protected iff feature > cut
  double base_logit = -2.2;         // intercept of the ground truth
  double signal_scale = 2.0;        // norm of the ground-truth weights
  std::uint64_t seed = 0;
};

Dataset generate_synthetic_dataset(const SyntheticConfig& config);

}  // namespace defersim
