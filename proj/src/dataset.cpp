#include "defersim/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "defersim/errors.hpp"

namespace defersim {

int Dataset::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    if (feature_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::unordered_map<std::int64_t, int> Dataset::index_by_id() const {
  std::unordered_map<std::int64_t, int> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out.emplace(instances[i].id, static_cast<int>(i));
  }
  return out;
}

void FeatureScaler::fit(const Dataset& data, const std::vector<int>& positions) {
  const std::size_t d = data.dim();
  mean.assign(d, 0.0);
  stddev.assign(d, 1.0);
  if (positions.empty()) return;
  const double n = static_cast<double>(positions.size());
  for (int p : positions) {
    const auto& x = data.instances[p].features;
    for (std::size_t c = 0; c < d; ++c) mean[c] += x[c];
  }
  for (std::size_t c = 0; c < d; ++c) mean[c] /= n;
  std::vector<double> ss(d, 0.0);
  for (int p : positions) {
    const auto& x = data.instances[p].features;
    for (std::size_t c = 0; c < d; ++c) {
      const double dlt = x[c] - mean[c];
      ss[c] += dlt * dlt;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double var = ss[c] / n;
    stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

std::vector<double> FeatureScaler::apply(std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    out[c] = (x[c] - mean[c]) / stddev[c];
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  if (ec != std::errc()) return false;
  while (ptr < e && (*ptr == ' ' || *ptr == '\t')) ++ptr;
  return ptr == e;
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

Dataset load_dataset(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open dataset file: " + path);

  std::string line;
  // Skip artifact comment lines before the header.
  do {
    if (!std::getline(in, line)) throw parse_error("empty file: " + path);
  } while (!line.empty() && line[0] == '#');
  if (line.empty()) throw parse_error("empty file: " + path);

  const auto header = split_line(line, schema.delimiter);
  const int label_col = find_column(header, schema.label);
  if (label_col < 0)
    throw schema_error("label column '" + schema.label + "' not found");
  const int month_col = find_column(header, schema.month);
  if (month_col < 0)
    throw schema_error("month column '" + schema.month + "' not found");
  const int group_col = find_column(header, schema.group);
  if (group_col < 0)
    throw schema_error("group column '" + schema.group + "' not found");
  int score_col = -1;
  if (!schema.score.empty()) {
    score_col = find_column(header, schema.score);
    if (score_col < 0)
      throw schema_error("score column '" + schema.score + "' not found");
  }

  Dataset data;
  std::vector<int> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const int c = static_cast<int>(i);
    if (c == label_col || c == month_col || c == group_col || c == score_col)
      continue;
    feature_cols.push_back(c);
    data.feature_names.push_back(header[i]);
  }

  std::unordered_map<std::string, int> group_codes;
  std::int64_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    ++row;
    const auto cells = split_line(line, schema.delimiter);
    if (cells.size() != header.size()) {
      throw parse_error("row " + std::to_string(row) + ": expected " +
                        std::to_string(header.size()) + " columns, got " +
                        std::to_string(cells.size()));
    }
    Instance inst;
    inst.id = row - 1;  // stable ids in file order
    inst.features.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      double v;
      if (!parse_double(cells[feature_cols[k]], v)) {
        throw parse_error("row " + std::to_string(row) +
                          ": non-numeric feature value '" +
                          cells[feature_cols[k]] + "' in column '" +
                          data.feature_names[k] + "'");
      }
      inst.features.push_back(v);
    }
    double label_v;
    if (!parse_double(cells[label_col], label_v) ||
        (label_v != 0.0 && label_v != 1.0)) {
      throw parse_error("row " + std::to_string(row) + ": label must be 0 or 1, got '" +
                        cells[label_col] + "'");
    }
    inst.label = static_cast<int>(label_v);
    double month_v;
    if (!parse_double(cells[month_col], month_v) ||
        month_v != std::floor(month_v) || month_v < 1) {
      throw parse_error("row " + std::to_string(row) +
                        ": month must be an integer >= 1, got '" +
                        cells[month_col] + "'");
    }
    inst.month = static_cast<int>(month_v);
    const std::string& gv = cells[group_col];
    auto it = group_codes.find(gv);
    if (it == group_codes.end()) {
      it = group_codes.emplace(gv, static_cast<int>(data.group_values.size())).first;
      data.group_values.push_back(gv);
    }
    inst.group = it->second;
    if (score_col >= 0) {
      double s;
      if (!parse_double(cells[score_col], s)) {
        throw parse_error("row " + std::to_string(row) +
                          ": non-numeric score value '" + cells[score_col] + "'");
      }
      if (s < 0.0 || s > 1.0) {
        throw parse_error("row " + std::to_string(row) +
                          ": score outside [0,1]: " + cells[score_col]);
      }
      inst.score = s;
      inst.has_score = true;
    }
    data.instances.push_back(std::move(inst));
  }
  if (data.instances.empty()) throw parse_error("no data rows in " + path);
  return data;
}

void save_dataset(const Dataset& data, const std::string& path,
                  const Schema& schema, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write dataset file: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";

  const bool with_score =
      !schema.score.empty() && !data.instances.empty() && data.instances[0].has_score;
  for (std::size_t i = 0; i < data.feature_names.size(); ++i) {
    out << data.feature_names[i] << schema.delimiter;
  }
  out << schema.label << schema.delimiter << schema.month << schema.delimiter
      << schema.group;
  if (with_score) out << schema.delimiter << schema.score;
  out << "\n";

  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& inst : data.instances) {
    for (double v : inst.features) {
      put(v);
      out << schema.delimiter;
    }
    out << inst.label << schema.delimiter << inst.month << schema.delimiter
        << data.group_values[inst.group];
    if (with_score) {
      out << schema.delimiter;
      put(inst.score);
    }
    out << "\n";
  }
}

SplitDataset make_temporal_splits(const Dataset& data, const TemporalSplit& split) {
  // Disjointness: every pair except (classifier_val, deferral_train).
  struct Named {
    const char* name;
    const std::set<int>* months;
  };
  const Named sets[] = {{"classifier_train", &split.classifier_train},
                        {"classifier_val", &split.classifier_val},
                        {"deferral_train", &split.deferral_train},
                        {"deferral_val", &split.deferral_val},
                        {"test", &split.test}};
  for (int a = 0; a < 5; ++a) {
    for (int b = a + 1; b < 5; ++b) {
      if (a == 1 && b == 2) continue;  // the permitted month-4 overlap
      for (int m : *sets[a].months) {
        if (sets[b].months->count(m)) {
          throw range_error(std::string("split sets '") + sets[a].name +
                            "' and '" + sets[b].name + "' overlap on month " +
                            std::to_string(m));
        }
      }
    }
  }

  std::set<int> present;
  for (const auto& inst : data.instances) present.insert(inst.month);
  for (const auto& s : sets) {
    for (int m : *s.months) {
      if (!present.count(m)) {
        throw range_error(std::string("split set '") + s.name +
                          "' references month " + std::to_string(m) +
                          " absent from the dataset");
      }
    }
  }

  SplitDataset out;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const int m = data.instances[i].month;
    const int p = static_cast<int>(i);
    if (split.classifier_train.count(m)) out.classifier_train.push_back(p);
    if (split.classifier_val.count(m)) out.classifier_val.push_back(p);
    if (split.deferral_train.count(m)) out.deferral_train.push_back(p);
    if (split.deferral_val.count(m)) out.deferral_val.push_back(p);
    if (split.test.count(m)) out.test.push_back(p);
  }
  return out;
}

double select_threshold(const std::vector<double>& scores,
                        const std::vector<int>& labels, double target_fpr) {
  if (scores.size() != labels.size())
    throw config_error("select_threshold: scores/labels length mismatch");
  if (target_fpr <= 0.0 || target_fpr >= 1.0)
    throw config_error("select_threshold: target_fpr must lie in (0,1)");
  std::size_t n_neg = 0;
  for (int y : labels) n_neg += (y == 0);
  if (n_neg == 0)
    throw degenerate_data_error("select_threshold: no negatives, FPR undefined");

  // Candidate thresholds are the observed score values. FPR(t) is a step
  // function that only changes there; all scores (not just negatives) are
  // candidates so the recall-maximizing feasible t is reachable.
  std::vector<double> neg_scores;
  neg_scores.reserve(n_neg);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) neg_scores.push_back(scores[i]);
  }
  std::sort(neg_scores.begin(), neg_scores.end());

  std::vector<double> candidates(scores);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  const double n_neg_d = static_cast<double>(n_neg);
  for (double t : candidates) {
    // negatives with score >= t
    const auto flagged = neg_scores.end() -
                         std::lower_bound(neg_scores.begin(), neg_scores.end(), t);
    if (static_cast<double>(flagged) / n_neg_d <= target_fpr) return t;
  }
  return std::nextafter(candidates.back(), 2.0);
}

}  // namespace defersim
