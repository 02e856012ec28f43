#pragma once

#include <string>
#include <vector>

#include "defersim/capacity.hpp"
#include "defersim/eval.hpp"

namespace defersim {

// One reports.csv row: scenario parameters echo + policy + seed + metrics.
struct ReportRow {
  ExpertPool pool = ExpertPool::all;
  int batch_size = 0;
  double deferral_rate = 0.0;
  double absence_rate = 0.0;
  CapacityDistribution distribution = CapacityDistribution::homogeneous;
  std::uint64_t seed = 0;
  std::string policy;
  long n_fp = 0, n_fn = 0, n_tp = 0, n_tn = 0;
  double loss = 0.0, fpr = 0.0, tpr = 0.0, pe = 0.0;
};

void save_reports(const std::vector<ReportRow>& rows, const std::string& path,
                  const std::string& header_comment = "");
std::vector<ReportRow> load_reports(const std::string& path,
                                    std::string* header_comment = nullptr);

// Aggregation across seeds for each (scenario combo, policy): mean and
// sample standard deviation (0 for a single seed), preserving first-seen
// combo order.
struct SummaryRow {
  ExpertPool pool = ExpertPool::all;
  int batch_size = 0;
  double deferral_rate = 0.0;
  double absence_rate = 0.0;
  CapacityDistribution distribution = CapacityDistribution::homogeneous;
  std::string policy;
  int n_seeds = 0;
  double loss_mean = 0.0, loss_std = 0.0;
  double pe_mean = 0.0, pe_std = 0.0;
  double fpr_mean = 0.0, tpr_mean = 0.0;
};

std::vector<SummaryRow> summarize_reports(const std::vector<ReportRow>& rows);
void save_summary(const std::vector<SummaryRow>& rows, const std::string& path,
                  const std::string& header_comment = "");

}  // namespace defersim
