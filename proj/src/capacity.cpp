#include "defersim/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "defersim/errors.hpp"

namespace defersim {

const char* to_string(CapacityDistribution d) {
  return d == CapacityDistribution::homogeneous ? "homogeneous" : "variable";
}

const char* to_string(ExpertPool p) {
  switch (p) {
    case ExpertPool::all: return "all";
    case ExpertPool::standard: return "standard";
    case ExpertPool::unfair: return "unfair";
    case ExpertPool::agreeing: return "agreeing";
    case ExpertPool::sparse: return "sparse";
  }
  return "all";
}

CapacityDistribution capacity_distribution_from_string(const std::string& s) {
  if (s == "homogeneous") return CapacityDistribution::homogeneous;
  if (s == "variable") return CapacityDistribution::variable;
  throw config_error("unknown capacity distribution: " + s);
}

ExpertPool expert_pool_from_string(const std::string& s) {
  if (s == "all") return ExpertPool::all;
  if (s == "standard") return ExpertPool::standard;
  if (s == "unfair") return ExpertPool::unfair;
  if (s == "agreeing") return ExpertPool::agreeing;
  if (s == "sparse") return ExpertPool::sparse;
  throw config_error("unknown expert pool: " + s);
}

long deferral_budget(double deferral_rate, int batch_size) {
  return std::lround(deferral_rate * static_cast<double>(batch_size));
}

void build_batches(int n_instances, int batch_size, std::uint64_t seed,
                   std::vector<int>& batch_of,
                   std::vector<std::vector<int>>& batches) {
  if (batch_size < 1) throw config_error("build_batches: batch_size must be >= 1");
  if (batch_size > n_instances) {
    std::cerr << "warning: batch_size " << batch_size << " exceeds split size "
              << n_instances << "; using a single batch\n";
  }
  std::vector<int> perm(n_instances);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  const int n_batches = (n_instances + batch_size - 1) / batch_size;
  batch_of.assign(n_instances, 0);
  batches.assign(n_batches, {});
  for (int i = 0; i < n_instances; ++i) {
    const int b = i / batch_size;
    batch_of[perm[i]] = b;
    batches[b].push_back(perm[i]);
  }
}

namespace {

// Largest-remainder apportionment of `total` units proportional to
// nonnegative weights. Ties on the fractional part go to the lower index.
std::vector<int> apportion(const std::vector<double>& weights, long total) {
  const std::size_t n = weights.size();
  std::vector<int> out(n, 0);
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (total <= 0 || wsum <= 0.0) return out;

  std::vector<double> frac(n);
  long assigned = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double quota = static_cast<double>(total) * weights[j] / wsum;
    out[j] = static_cast<int>(std::floor(quota));
    frac[j] = quota - std::floor(quota);
    assigned += out[j];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frac[a] > frac[b];
  });
  for (long r = total - assigned, k = 0; r > 0; --r, ++k) {
    out[order[k % n]] += 1;
  }
  return out;
}

}  // namespace

std::vector<std::vector<int>> sample_capacity_matrix(
    const std::vector<int>& batch_sizes, const ExpertTeam& team,
    const CapacityParams& params) {
  if (params.deferral_rate <= 0.0 || params.deferral_rate >= 1.0)
    throw config_error("deferral_rate must lie in (0,1)");
  if (params.absence_rate < 0.0 || params.absence_rate >= 1.0)
    throw config_error("absence_rate must lie in [0,1)");

  const int n_experts = static_cast<int>(team.experts.size());
  const auto in_pool = [&](ExpertGroup g) {
    switch (params.pool) {
      case ExpertPool::all: return true;
      case ExpertPool::standard: return g == ExpertGroup::standard;
      case ExpertPool::unfair: return g == ExpertGroup::unfair;
      case ExpertPool::agreeing: return g == ExpertGroup::agreeing;
      case ExpertPool::sparse: return g == ExpertGroup::sparse;
    }
    return false;
  };
  std::vector<int> pool;
  for (int j = 0; j < n_experts; ++j) {
    if (in_pool(team.experts[j].group)) pool.push_back(j);
  }
  if (pool.empty()) {
    throw infeasible_error("capacity scenario: expert pool '" +
                           std::string(to_string(params.pool)) + "' is empty");
  }

  std::vector<std::vector<int>> H(batch_sizes.size(),
                                  std::vector<int>(n_experts, 0));
  const long n_absent =
      std::lround(params.absence_rate * static_cast<double>(pool.size()));

  for (std::size_t b = 0; b < batch_sizes.size(); ++b) {
    const long budget = deferral_budget(params.deferral_rate, batch_sizes[b]);

    // absence re-drawn independently per batch
    std::vector<int> present = pool;
    if (n_absent > 0) {
      Rng absence_rng(derive_seed(params.absence_seed, "batch", b));
      std::vector<int> shuffled = pool;
      absence_rng.shuffle(shuffled);
      shuffled.resize(pool.size() - static_cast<std::size_t>(n_absent));
      std::sort(shuffled.begin(), shuffled.end());
      present = std::move(shuffled);
    }
    if (present.empty()) {
      if (budget > 0) {
        throw infeasible_error("batch " + std::to_string(b) +
                               ": all experts absent with deferral budget " +
                               std::to_string(budget));
      }
      continue;
    }

    std::vector<double> weights(present.size(), 1.0);
    if (params.distribution == CapacityDistribution::variable) {
      const double mu = params.deferral_rate *
                        static_cast<double>(batch_sizes[b]) /
                        static_cast<double>(present.size());
      Rng cap_rng(derive_seed(params.capacity_seed, "batch", b));
      double wsum = 0.0;
      for (auto& w : weights) {
        // clamp negative draws, round, then rescale to the budget
        w = std::max(0.0, std::round(cap_rng.normal(mu, 0.2 * mu)));
        wsum += w;
      }
      if (wsum == 0.0) std::fill(weights.begin(), weights.end(), 1.0);
    }

    const auto shares = apportion(weights, budget);
    for (std::size_t k = 0; k < present.size(); ++k) {
      H[b][present[k]] = shares[k];
    }
  }
  return H;
}

CapacityScenario build_scenario(int n_instances, const ExpertTeam& team,
                                const CapacityParams& params) {
  CapacityScenario scenario;
  scenario.params = params;
  build_batches(n_instances, params.batch_size, params.batch_seed,
                scenario.batch_of, scenario.batches);
  std::vector<int> sizes;
  sizes.reserve(scenario.batches.size());
  for (const auto& b : scenario.batches) sizes.push_back(static_cast<int>(b.size()));
  scenario.H = sample_capacity_matrix(sizes, team, params);
  return scenario;
}

std::vector<ScenarioSpec> enumerate_grid(const GridConfig& grid) {
  std::vector<ScenarioSpec> out;
  char label[160];
  for (ExpertPool pool : grid.pools) {
    for (int batch : grid.batch_sizes) {
      for (double rate : grid.deferral_rates) {
        for (double absence : grid.absence_rates) {
          for (CapacityDistribution dist : grid.distributions) {
            for (std::uint64_t seed : grid.seeds) {
              ScenarioSpec spec;
              spec.params.pool = pool;
              spec.params.batch_size = batch;
              spec.params.deferral_rate = rate;
              spec.params.absence_rate = absence;
              spec.params.distribution = dist;
              spec.params.batch_seed = derive_seed(seed, "batch-vector");
              spec.params.absence_seed = derive_seed(seed, "absence");
              spec.params.capacity_seed = derive_seed(seed, "capacity");
              spec.seed = seed;
              std::snprintf(label, sizeof(label),
                            "pool=%s,batch=%d,defer=%g,abs=%g,dist=%s,seed=%llu",
                            to_string(pool), batch, rate, absence,
                            to_string(dist),
                            static_cast<unsigned long long>(seed));
              spec.label = label;
              out.push_back(std::move(spec));
            }
          }
        }
      }
    }
  }
  return out;
}

void save_capacity_matrix(const CapacityScenario& scenario,
                          const ExpertTeam& team, const std::string& path,
                          const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write capacity matrix: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "batch";
  for (const auto& e : team.experts) out << ',' << e.id;
  out << "\n";
  for (std::size_t b = 0; b < scenario.H.size(); ++b) {
    out << b;
    for (int c : scenario.H[b]) out << ',' << c;
    out << "\n";
  }
}

}  // namespace defersim
