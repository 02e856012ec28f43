#include "defersim/deferral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>

#include "defersim/errors.hpp"

namespace defersim {

const char* to_string(Policy p) {
  switch (p) {
    case Policy::rel: return "rel";
    case Policy::greedy: return "greedy";
    case Policy::linear: return "linear";
  }
  return "rel";
}

Policy policy_from_string(const std::string& s) {
  if (s == "rel") return Policy::rel;
  if (s == "greedy") return Policy::greedy;
  if (s == "linear") return Policy::linear;
  throw config_error("unknown policy: " + s);
}

FlagResult flag_batch(const std::vector<std::int64_t>& ids,
                      const std::vector<double>& scores,
                      double auto_decline_rate, long deferral_budget) {
  if (ids.size() != scores.size())
    throw config_error("flag_batch: ids/scores length mismatch");
  if (auto_decline_rate < 0.0 || auto_decline_rate >= 1.0)
    throw config_error("flag_batch: auto_decline_rate must lie in [0,1)");
  const long n = static_cast<long>(ids.size());

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });

  const long n_declined =
      std::min(n, std::lround(auto_decline_rate * static_cast<double>(n)));
  const long n_candidates = std::min(n - n_declined, std::max(0L, deferral_budget));

  FlagResult out;
  out.declined.assign(order.begin(), order.begin() + n_declined);
  out.candidates.assign(order.begin() + n_declined,
                        order.begin() + n_declined + n_candidates);
  out.accepted.assign(order.begin() + n_declined + n_candidates, order.end());
  return out;
}

std::vector<int> rel_random_assign(int n_candidates,
                                   const std::vector<int>& capacities,
                                   std::uint64_t seed) {
  long total = 0;
  for (int c : capacities) {
    if (c < 0) throw config_error("rel_random_assign: negative capacity");
    total += c;
  }
  std::vector<int> out(n_candidates, kAutoAccept);
  const int n_deferred = static_cast<int>(std::min<long>(n_candidates, total));
  if (n_deferred == 0) return out;

  Rng rng(seed);
  std::vector<int> deferred(n_deferred);
  std::iota(deferred.begin(), deferred.end(), 0);
  rng.shuffle(deferred);

  std::vector<int> expert_order;
  for (std::size_t j = 0; j < capacities.size(); ++j) {
    if (capacities[j] > 0) expert_order.push_back(static_cast<int>(j));
  }
  rng.shuffle(expert_order);

  std::vector<int> remaining = capacities;
  std::size_t cursor = 0;
  for (int cand : deferred) {
    while (remaining[expert_order[cursor]] == 0) {
      cursor = (cursor + 1) % expert_order.size();
    }
    const int j = expert_order[cursor];
    out[cand] = j;
    remaining[j] -= 1;
    cursor = (cursor + 1) % expert_order.size();
  }
  return out;
}

std::vector<int> greedy_assign(const std::vector<std::vector<double>>& loss,
                               const std::vector<int>& capacities) {
  std::vector<int> remaining = capacities;
  std::vector<int> out(loss.size(), kAutoAccept);
  for (std::size_t i = 0; i < loss.size(); ++i) {
    if (loss[i].size() != capacities.size())
      throw config_error("greedy_assign: loss row width mismatch");
    int best = -1;
    for (std::size_t j = 0; j < capacities.size(); ++j) {
      if (remaining[j] <= 0) continue;
      if (!std::isfinite(loss[i][j]))
        throw config_error("greedy_assign: non-finite loss entry");
      if (best < 0 || loss[i][j] < loss[i][best]) best = static_cast<int>(j);
    }
    if (best < 0) continue;  // capacity exhausted, auto-accept
    out[i] = best;
    remaining[best] -= 1;
  }
  return out;
}

namespace {

// Successive shortest augmenting paths with node potentials. Costs here are
// always nonnegative, so potentials start at zero and plain Dijkstra works.
class MinCostFlow {
 public:
  MinCostFlow(int n_nodes) : graph_(n_nodes), potential_(n_nodes) {}

  int add_edge(int from, int to, int cap, long long cost) {
    const int id = static_cast<int>(edges_.size());
    edges_.push_back({to, cap, cost});
    edges_.push_back({from, 0, -cost});
    graph_[from].push_back(id);
    graph_[to].push_back(id + 1);
    return id;
  }

  int flow_on(int edge_id) const { return edges_[edge_id + 1].cap; }

  // Pushes up to `flow_limit` units from s to t, one augmenting path at a
  // time (unit arcs dominate here, so wider pushes would not help).
  long long solve(int s, int t, long flow_limit) {
    long long total_cost = 0;
    const long long inf = std::numeric_limits<long long>::max() / 4;
    const int n = static_cast<int>(graph_.size());
    std::vector<long long> dist(n);
    std::vector<int> parent_edge(n);
    using Item = std::pair<long long, int>;
    for (long pushed = 0; pushed < flow_limit; ++pushed) {
      std::fill(dist.begin(), dist.end(), inf);
      std::fill(parent_edge.begin(), parent_edge.end(), -1);
      dist[s] = 0;
      std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
      heap.emplace(0, s);
      while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[v]) continue;
        for (int id : graph_[v]) {
          const Edge& e = edges_[id];
          if (e.cap <= 0) continue;
          const long long nd = d + e.cost + potential_[v] - potential_[e.to];
          if (nd < dist[e.to]) {
            dist[e.to] = nd;
            parent_edge[e.to] = id;
            heap.emplace(nd, e.to);
          }
        }
      }
      if (dist[t] >= inf) break;  // no augmenting path left
      for (int v = 0; v < n; ++v) {
        if (dist[v] < inf) potential_[v] += dist[v];
      }
      for (int v = t; v != s;) {
        Edge& e = edges_[parent_edge[v]];
        Edge& back = edges_[parent_edge[v] ^ 1];
        e.cap -= 1;
        back.cap += 1;
        total_cost += e.cost;
        v = back.to;
      }
    }
    return total_cost;
  }

 private:
  struct Edge {
    int to;
    int cap;
    long long cost;
  };
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> graph_;
  std::vector<long long> potential_;
};

constexpr double kCostScale = 1e9;

}  // namespace

std::vector<int> optimal_assign(const std::vector<std::vector<double>>& loss,
                                const std::vector<int>& capacities) {
  const int n_cand = static_cast<int>(loss.size());
  const int n_exp = static_cast<int>(capacities.size());
  long total_cap = 0;
  for (int c : capacities) total_cap += c;
  if (total_cap < n_cand) {
    throw infeasible_error("optimal_assign: total capacity " +
                           std::to_string(total_cap) + " < " +
                           std::to_string(n_cand) + " candidates");
  }
  if (n_cand == 0) return {};

  // nodes: 0 source, 1..n_cand candidates, n_cand+1..n_cand+n_exp experts,
  // last is sink
  const int source = 0, sink = n_cand + n_exp + 1;
  MinCostFlow mcf(n_cand + n_exp + 2);
  std::vector<std::vector<int>> arc(n_cand, std::vector<int>(n_exp));
  for (int i = 0; i < n_cand; ++i) {
    if (static_cast<int>(loss[i].size()) != n_exp)
      throw config_error("optimal_assign: loss row width mismatch");
    mcf.add_edge(source, 1 + i, 1, 0);
    for (int j = 0; j < n_exp; ++j) {
      if (!std::isfinite(loss[i][j]) || loss[i][j] < 0.0)
        throw config_error("optimal_assign: loss entries must be finite and >= 0");
      arc[i][j] = mcf.add_edge(1 + i, 1 + n_cand + j, 1,
                               std::llround(loss[i][j] * kCostScale));
    }
  }
  for (int j = 0; j < n_exp; ++j) {
    if (capacities[j] > 0)
      mcf.add_edge(1 + n_cand + j, sink, capacities[j], 0);
  }
  mcf.solve(source, sink, n_cand);

  std::vector<int> out(n_cand, kAutoAccept);
  for (int i = 0; i < n_cand; ++i) {
    for (int j = 0; j < n_exp; ++j) {
      if (mcf.flow_on(arc[i][j]) > 0) {
        out[i] = j;
        break;
      }
    }
    if (out[i] == kAutoAccept)
      throw infeasible_error("optimal_assign: flow left a candidate unassigned");
  }
  return out;
}

std::pair<double, double> OracleLossModel::fp_fn(const Instance& inst,
                                                 int expert_index) const {
  const auto x = team_.scaler.apply(inst.features);
  const auto p = error_probabilities(team_.experts[expert_index], x, inst.score,
                                     team_.threshold);
  if (inst.label == 0) return {p.p_fp, 0.0};
  return {0.0, p.p_fn};
}

Assignment run_policy(Policy policy, const Dataset& data,
                      const std::vector<int>& split_positions,
                      const CapacityScenario& scenario,
                      const PredictionTable& predictions,
                      const DeferralLossModel* loss_model,
                      const PolicyRunConfig& config) {
  if ((policy == Policy::greedy || policy == Policy::linear) && !loss_model)
    throw config_error("run_policy: greedy/linear need a loss model");
  if (static_cast<int>(scenario.batch_of.size()) !=
      static_cast<int>(split_positions.size()))
    throw config_error("run_policy: scenario does not cover the split");

  Assignment out;
  out.rows.reserve(split_positions.size());

  for (std::size_t b = 0; b < scenario.batches.size(); ++b) {
    const auto& batch = scenario.batches[b];
    std::vector<std::int64_t> ids(batch.size());
    std::vector<double> scores(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const Instance& inst = data.instances[split_positions[batch[k]]];
      ids[k] = inst.id;
      scores[k] = inst.score;
    }
    long budget = 0;
    for (int c : scenario.H[b]) budget += c;

    const FlagResult flags =
        flag_batch(ids, scores, config.auto_decline_rate, budget);

    // Leftover rule: candidates beyond total capacity are the lowest-score
    // ones (flag order), auto-accepted before any optimization runs.
    const long total_cap = budget;
    std::vector<int> kept(flags.candidates.begin(),
                          flags.candidates.begin() +
                              std::min<long>(flags.candidates.size(), total_cap));
    std::vector<int> overflow(flags.candidates.begin() + kept.size(),
                              flags.candidates.end());

    std::vector<int> assigned;  // expert per kept candidate
    switch (policy) {
      case Policy::rel: {
        assigned = rel_random_assign(
            static_cast<int>(kept.size()), scenario.H[b],
            derive_seed(config.seed, "rel-batch", b));
        break;
      }
      case Policy::greedy:
      case Policy::linear: {
        // greedy iterates in batch order
        std::vector<int> order = kept;
        if (policy == Policy::greedy) std::sort(order.begin(), order.end());
        std::vector<std::vector<double>> loss(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
          const Instance& inst = data.instances[split_positions[batch[order[i]]]];
          loss[i].resize(scenario.H[b].size());
          for (std::size_t j = 0; j < scenario.H[b].size(); ++j) {
            loss[i][j] = scenario.H[b][j] > 0
                             ? loss_model->loss(inst, static_cast<int>(j),
                                                config.lambda)
                             : 0.0;  // masked below by zero capacity
          }
        }
        std::vector<int> chosen =
            policy == Policy::greedy
                ? greedy_assign(loss, scenario.H[b])
                : optimal_assign(loss, scenario.H[b]);
        kept = std::move(order);
        assigned = std::move(chosen);
        break;
      }
    }

    // capacity feasibility is an invariant, not a hope
    std::vector<int> load(scenario.H[b].size(), 0);
    for (int j : assigned) {
      if (j >= 0) load[j] += 1;
    }
    for (std::size_t j = 0; j < load.size(); ++j) {
      if (load[j] > scenario.H[b][j]) {
        throw infeasible_error("policy exceeded capacity of expert " +
                               std::to_string(j) + " in batch " +
                               std::to_string(b));
      }
    }

    auto emit = [&](int batch_pos, int decision_maker) {
      const Instance& inst = data.instances[split_positions[batch[batch_pos]]];
      int decision;
      if (decision_maker == kAutoDecline) {
        decision = 1;
      } else if (decision_maker == kAutoAccept) {
        decision = 0;
      } else {
        decision = predictions.lookup(inst.id, decision_maker);
        if (decision < 0) {
          throw integrity_error(
              "missing prediction for instance " + std::to_string(inst.id) +
              ", expert index " + std::to_string(decision_maker));
        }
      }
      out.rows.push_back({inst.id, static_cast<int>(b), decision_maker, decision});
    };

    for (int pos : flags.declined) emit(pos, kAutoDecline);
    for (std::size_t i = 0; i < kept.size(); ++i) emit(kept[i], assigned[i]);
    for (int pos : overflow) emit(pos, kAutoAccept);
    for (int pos : flags.accepted) emit(pos, kAutoAccept);
  }
  return out;
}

double expected_assignment_loss(const Assignment& assignment,
                                const Dataset& data, const ExpertTeam& team,
                                double lambda) {
  const auto index = data.index_by_id();
  double total = 0.0;
  for (const auto& row : assignment.rows) {
    const auto it = index.find(row.instance_id);
    if (it == index.end())
      throw integrity_error("assignment references unknown instance " +
                            std::to_string(row.instance_id));
    const Instance& inst = data.instances[it->second];
    if (row.decision_maker == kAutoDecline) {
      total += inst.label == 0 ? lambda : 0.0;
    } else if (row.decision_maker == kAutoAccept) {
      total += inst.label == 1 ? 1.0 : 0.0;
    } else {
      const auto x = team.scaler.apply(inst.features);
      const auto p = error_probabilities(team.experts[row.decision_maker], x,
                                         inst.score, team.threshold);
      total += inst.label == 0 ? lambda * p.p_fp : p.p_fn;
    }
  }
  return total;
}

void save_assignment(const Assignment& assignment, const ExpertTeam& team,
                     const std::string& path,
                     const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write assignment file: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "instance_id,batch,decision_maker,final_decision\n";
  for (const auto& row : assignment.rows) {
    out << row.instance_id << ',' << row.batch << ',';
    if (row.decision_maker == kAutoDecline) {
      out << "auto_decline";
    } else if (row.decision_maker == kAutoAccept) {
      out << "auto_accept";
    } else {
      out << team.experts[row.decision_maker].id;
    }
    out << ',' << row.final_decision << "\n";
  }
}

}  // namespace defersim
