#pragma once

#include <stdexcept>
#include <string>

namespace defersim {

// Error taxonomy. Each failure mode named by the module contracts maps to a
// distinct type so callers and tests can catch precisely.

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Column named by the schema is missing, or a column plays two roles.
struct schema_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed cell content; message carries the 1-based data row number.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A referenced month (or similar index) is outside the data's range.
struct range_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training data cannot support the requested fit (single class, no
// negatives for an FPR, single outcome, ...).
struct degenerate_data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Intercept bisection could not bracket the target rate.
struct calibration_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scenario cannot be realized (no present expert while budget > 0, ...).
struct infeasible_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cross-artifact inconsistency (unknown instance id, missing prediction).
struct integrity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Outcome model queried for an expert absent from its training data.
struct unknown_expert_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Serialized artifact does not match the current config hash/stage version.
struct staleness_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace defersim
