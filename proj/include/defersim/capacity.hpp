#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defersim/experts.hpp"

namespace defersim {

enum class CapacityDistribution : int { homogeneous = 0, variable = 1 };
enum class ExpertPool : int { all = 0, standard = 1, unfair = 2, agreeing = 3, sparse = 4 };

const char* to_string(CapacityDistribution d);
const char* to_string(ExpertPool p);
CapacityDistribution capacity_distribution_from_string(const std::string& s);
ExpertPool expert_pool_from_string(const std::string& s);

struct CapacityParams {
  int batch_size = 250;
  double deferral_rate = 0.2;
  CapacityDistribution distribution = CapacityDistribution::homogeneous;
  double absence_rate = 0.0;
  ExpertPool pool = ExpertPool::all;
  std::uint64_t batch_seed = 0;
  std::uint64_t absence_seed = 0;
  std::uint64_t capacity_seed = 0;
};

// Batch vector plus per-batch capacity matrix over a fixed split. `batches`
// holds split-relative positions in permutation order; `batch_of[i]` is the
// batch of split position i. Row b of H sums to round(deferral_rate * |b|).
struct CapacityScenario {
  CapacityParams params;
  std::vector<int> batch_of;
  std::vector<std::vector<int>> batches;
  std::vector<std::vector<int>> H;
};

// Seeded permutation of [0, n) chopped into consecutive chunks of
// batch_size; the final batch may be partial.
void build_batches(int n_instances, int batch_size, std::uint64_t seed,
                   std::vector<int>& batch_of,
                   std::vector<std::vector<int>>& batches);

// Per batch: pool filtering, absence sampling (re-drawn each batch), then
// homogeneous shares or clamped normal draws, both apportioned by largest
// remainder so every row sums exactly to its deferral budget.
std::vector<std::vector<int>> sample_capacity_matrix(
    const std::vector<int>& batch_sizes, const ExpertTeam& team,
    const CapacityParams& params);

CapacityScenario build_scenario(int n_instances, const ExpertTeam& team,
                                const CapacityParams& params);

// Deferral budget of a batch of the given size.
long deferral_budget(double deferral_rate, int batch_size);

struct GridConfig {
  std::vector<ExpertPool> pools = {ExpertPool::all};
  std::vector<int> batch_sizes = {250, 5000};
  std::vector<double> deferral_rates = {0.2, 0.5};
  std::vector<double> absence_rates = {0.0, 0.5};
  std::vector<CapacityDistribution> distributions = {
      CapacityDistribution::homogeneous, CapacityDistribution::variable};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
};

struct ScenarioSpec {
  CapacityParams params;
  std::uint64_t seed = 0;  // the grid seed the three stream seeds derive from
  std::string label;       // "pool=all,batch=250,defer=0.2,abs=0,dist=hom,seed=0"
};

// Cartesian product of the configured value sets, in the fixed nesting
// order pool > batch > deferral > absence > distribution > seed.
std::vector<ScenarioSpec> enumerate_grid(const GridConfig& grid);

void save_capacity_matrix(const CapacityScenario& scenario,
                          const ExpertTeam& team, const std::string& path,
                          const std::string& header_comment = "");

}  // namespace defersim
