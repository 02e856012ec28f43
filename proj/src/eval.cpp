#include "defersim/eval.hpp"

#include <algorithm>
#include <cmath>

#include "defersim/errors.hpp"

namespace defersim {

double lambda_from_threshold(double t) {
  if (t <= 0.0 || t >= 1.0)
    throw config_error("lambda_from_threshold: t must lie in (0,1)");
  return t / (1.0 - t);
}

ConfusionCounts confusion_counts(const std::vector<int>& decisions,
                                 const std::vector<int>& labels) {
  if (decisions.size() != labels.size())
    throw config_error("confusion_counts: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (labels[i] == 1) {
      (decisions[i] == 1 ? c.tp : c.fn)++;
    } else {
      (decisions[i] == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

double cost_sensitive_loss(const std::vector<int>& decisions,
                           const std::vector<int>& labels, double lambda) {
  const auto c = confusion_counts(decisions, labels);
  return lambda * static_cast<double>(c.fp) + static_cast<double>(c.fn);
}

PredictiveEquality predictive_equality(const std::vector<int>& decisions,
                                       const std::vector<int>& labels,
                                       const std::vector<int>& groups) {
  if (decisions.size() != labels.size() || decisions.size() != groups.size())
    throw config_error("predictive_equality: length mismatch");
  int n_groups = 0;
  for (int g : groups) n_groups = std::max(n_groups, g + 1);
  if (n_groups < 2)
    throw degenerate_data_error("predictive_equality: need at least 2 groups");

  std::vector<long> fp(n_groups, 0), neg(n_groups, 0);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (labels[i] == 0) {
      neg[groups[i]] += 1;
      if (decisions[i] == 1) fp[groups[i]] += 1;
    }
  }
  PredictiveEquality out;
  out.group_fpr.resize(n_groups);
  for (int g = 0; g < n_groups; ++g) {
    if (neg[g] == 0) {
      throw degenerate_data_error("predictive_equality: group " +
                                  std::to_string(g) +
                                  " has no negatives, FPR undefined");
    }
    out.group_fpr[g] = static_cast<double>(fp[g]) / static_cast<double>(neg[g]);
  }
  const double lo = *std::min_element(out.group_fpr.begin(), out.group_fpr.end());
  const double hi = *std::max_element(out.group_fpr.begin(), out.group_fpr.end());
  out.ratio = hi > 0.0 ? lo / hi : 1.0;
  return out;
}

EvaluationReport evaluate_assignment(const Assignment& assignment,
                                     const Dataset& data, double lambda) {
  const auto index = data.index_by_id();
  std::vector<int> decisions, labels, groups;
  decisions.reserve(assignment.rows.size());
  labels.reserve(assignment.rows.size());
  groups.reserve(assignment.rows.size());
  for (const auto& row : assignment.rows) {
    const auto it = index.find(row.instance_id);
    if (it == index.end())
      throw integrity_error("evaluate_assignment: unknown instance " +
                            std::to_string(row.instance_id));
    decisions.push_back(row.final_decision);
    labels.push_back(data.instances[it->second].label);
    groups.push_back(data.instances[it->second].group);
  }
  EvaluationReport rep;
  rep.counts = confusion_counts(decisions, labels);
  rep.loss = lambda * static_cast<double>(rep.counts.fp) +
             static_cast<double>(rep.counts.fn);
  const long n_neg = rep.counts.fp + rep.counts.tn;
  const long n_pos = rep.counts.tp + rep.counts.fn;
  rep.fpr = n_neg > 0 ? static_cast<double>(rep.counts.fp) / n_neg : 0.0;
  rep.tpr = n_pos > 0 ? static_cast<double>(rep.counts.tp) / n_pos : 0.0;
  const auto pe = predictive_equality(decisions, labels, groups);
  rep.pe = pe.ratio;
  rep.group_fpr = pe.group_fpr;
  return rep;
}

EvaluationReport evaluate_model_only(const Dataset& data,
                                     const std::vector<int>& positions,
                                     double threshold, double lambda) {
  Assignment a;
  a.rows.reserve(positions.size());
  for (int p : positions) {
    const Instance& inst = data.instances[p];
    const int decision = inst.score >= threshold ? 1 : 0;
    a.rows.push_back({inst.id, 0, decision == 1 ? kAutoDecline : kAutoAccept,
                      decision});
  }
  auto rep = evaluate_assignment(a, data, lambda);
  rep.policy = "model_only";
  return rep;
}

ElkanCheck elkan_threshold_consistency_check(const std::vector<double>& scores,
                                             const std::vector<int>& labels,
                                             double lambda, int n_steps) {
  if (scores.size() != labels.size())
    throw config_error("elkan check: length mismatch");
  if (n_steps < 1) throw config_error("elkan check: n_steps must be >= 1");

  // Sort once; each threshold's counts come from prefix sums.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> sorted_scores(scores.size());
  // pos_below[k] = positives among the k smallest scores
  std::vector<long> pos_below(scores.size() + 1, 0);
  long n_pos = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted_scores[k] = scores[order[k]];
    pos_below[k + 1] = pos_below[k] + labels[order[k]];
    n_pos += labels[order[k]];
  }
  const long n = static_cast<long>(scores.size());

  ElkanCheck out;
  out.step = 1.0 / n_steps;
  out.ideal_threshold = lambda / (1.0 + lambda);
  double best = 0.0;
  for (int s = 0; s <= n_steps; ++s) {
    const double t = static_cast<double>(s) / n_steps;
    const auto k = std::lower_bound(sorted_scores.begin(), sorted_scores.end(), t) -
                   sorted_scores.begin();  // scores < t -> predicted negative
    const long fn = pos_below[k];
    const long fp = (n - k) - (n_pos - fn);
    const double loss = lambda * static_cast<double>(fp) + static_cast<double>(fn);
    if (s == 0 || loss < best) {
      best = loss;
      out.best_threshold = t;
      out.tie = false;
    } else if (loss == best) {
      out.tie = true;
    }
  }
  return out;
}

}  // namespace defersim
