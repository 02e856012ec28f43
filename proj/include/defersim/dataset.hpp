#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace defersim {

// One row of the base tabular task. `group` is the protected-attribute flag
// (1 = protected, 0 = reference in the binary case; loaders may emit more
// group ids). `score` is the model's fraud probability, NaN until attached.
struct Instance {
  std::int64_t id = 0;
  std::vector<double> features;
  int label = 0;
  int group = 0;
  int month = 0;
  double score = 0.0;
  bool has_score = false;
};

struct Dataset {
  std::vector<Instance> instances;
  std::vector<std::string> feature_names;
  std::vector<std::string> group_values;  // first-appearance encoding table

  std::size_t size() const { return instances.size(); }
  std::size_t dim() const { return feature_names.size(); }
  int feature_index(const std::string& name) const;  // -1 if absent

  // id -> position; ids are unique by construction of the loader.
  std::unordered_map<std::int64_t, int> index_by_id() const;
};

// Column-name map for the loader. Empty `score` means no precomputed scores.
struct Schema {
  std::string label;
  std::string month;
  std::string group;
  std::string score;
  char delimiter = ',';
};

// Five month sets of the temporal protocol. The only overlap permitted is
// classifier_val within deferral_train (month 4 plays both roles in the
// default protocol).
struct TemporalSplit {
  std::set<int> classifier_train = {1, 2, 3};
  std::set<int> classifier_val = {4};
  std::set<int> deferral_train = {4, 5, 6};
  std::set<int> deferral_val = {7};
  std::set<int> test = {8};
};

// Positions into Dataset::instances per role.
struct SplitDataset {
  std::vector<int> classifier_train;
  std::vector<int> classifier_val;
  std::vector<int> deferral_train;
  std::vector<int> deferral_val;
  std::vector<int> test;
};

// Per-column standardization. Columns with zero variance keep stddev 1 so
// the transform stays defined.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  void fit(const Dataset& data, const std::vector<int>& positions);
  std::vector<double> apply(std::span<const double> x) const;
};

// Delimiter-separated text with a header row. Feature columns are every
// column the schema does not claim; they must be numeric. The group column
// is integer-encoded by first appearance. Lines starting with '#' are
// artifact metadata and are skipped.
Dataset load_dataset(const std::string& path, const Schema& schema);

// Inverse of load_dataset up to column order: features first, then label,
// month, group, and score when present. Numeric columns round-trip
// bit-exactly. `header_comment`, when nonempty, is written as a '#' line.
void save_dataset(const Dataset& data, const std::string& path,
                  const Schema& schema, const std::string& header_comment = "");

SplitDataset make_temporal_splits(const Dataset& data,
                                  const TemporalSplit& split);

// Smallest threshold t among observed score values such that the empirical
// FPR of (score >= t -> positive) is <= target_fpr. If even the strictest
// observed score fails, returns nextafter(max score). Smallest feasible t
// maximizes recall, which is the stated tie rule.
double select_threshold(const std::vector<double>& scores,
                        const std::vector<int>& labels, double target_fpr);

}  // namespace defersim
