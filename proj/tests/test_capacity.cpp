#include <doctest.h>

#include <numeric>

#include "defersim/capacity.hpp"
#include "defersim/errors.hpp"
#include "test_helpers.hpp"

using namespace defersim;

namespace {

// Minimal team with the given per-group counts; error model irrelevant here.
ExpertTeam stub_team(int standard, int unfair, int agreeing, int sparse) {
  ExpertTeam team;
  team.scaler = test::identity_scaler(1);
  auto add = [&](ExpertGroup g, int count) {
    for (int k = 0; k < count; ++k) {
      ExpertParams e;
      e.id = std::string(to_string(g)) + "_" + std::to_string(k);
      e.group = g;
      e.w = {1.0};
      team.experts.push_back(std::move(e));
    }
  };
  add(ExpertGroup::standard, standard);
  add(ExpertGroup::unfair, unfair);
  add(ExpertGroup::agreeing, agreeing);
  add(ExpertGroup::sparse, sparse);
  return team;
}

long row_sum(const std::vector<int>& row) {
  return std::accumulate(row.begin(), row.end(), 0L);
}

}  // namespace

TEST_CASE("build_batches shapes and determinism") {
  std::vector<int> batch_of;
  std::vector<std::vector<int>> batches;

  SUBCASE("1000 into 250s") {
    build_batches(1000, 250, 42, batch_of, batches);
    REQUIRE(batches.size() == 4);
    for (const auto& b : batches) CHECK(b.size() == 250);
  }
  SUBCASE("partial final batch") {
    build_batches(10, 4, 42, batch_of, batches);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 4);
    CHECK(batches[1].size() == 4);
    CHECK(batches[2].size() == 2);
  }
  SUBCASE("batch vector inverts the batch lists") {
    build_batches(101, 7, 9, batch_of, batches);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (int i : batches[b]) CHECK(batch_of[i] == static_cast<int>(b));
    }
    std::vector<int> seen(101, 0);
    for (const auto& b : batches) {
      for (int i : b) seen[i] += 1;
    }
    for (int s : seen) CHECK(s == 1);  // exactly one batch per instance
  }
  SUBCASE("same seed same vector") {
    std::vector<int> batch_of2;
    std::vector<std::vector<int>> batches2;
    build_batches(500, 33, 7, batch_of, batches);
    build_batches(500, 33, 7, batch_of2, batches2);
    CHECK(batch_of == batch_of2);
  }
  SUBCASE("batch_size larger than N gives one batch") {
    build_batches(5, 100, 1, batch_of, batches);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].size() == 5);
  }
  SUBCASE("invalid batch_size") {
    CHECK_THROWS_AS(build_batches(5, 0, 1, batch_of, batches), config_error);
  }
}

TEST_CASE("homogeneous capacity at the paper operating point") {
  // deferral 0.2, batch 250, 50 experts: mu = 1, every entry exactly 1
  const auto team = stub_team(20, 10, 10, 10);
  CapacityParams params;
  params.batch_size = 250;
  params.deferral_rate = 0.2;
  const auto H = sample_capacity_matrix({250, 250, 250}, team, params);
  for (const auto& row : H) {
    CHECK(row_sum(row) == 50);
    for (int c : row) CHECK(c == 1);
  }
}

TEST_CASE("absence zeroes the exact count per batch") {
  const auto team = stub_team(20, 10, 10, 10);
  CapacityParams params;
  params.batch_size = 250;
  params.deferral_rate = 0.2;
  params.absence_rate = 0.5;
  params.absence_seed = 5;
  const auto H = sample_capacity_matrix({250, 250, 250, 250}, team, params);
  std::vector<std::vector<int>> absent_sets;
  for (const auto& row : H) {
    std::vector<int> absent;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == 0) absent.push_back(static_cast<int>(j));
    }
    CHECK(absent.size() == 25);
    CHECK(row_sum(row) == 50);
    absent_sets.push_back(std::move(absent));
  }
  // re-drawn per batch: not all batches share one absence set
  bool any_differ = false;
  for (std::size_t b = 1; b < absent_sets.size(); ++b) {
    any_differ |= (absent_sets[b] != absent_sets[0]);
  }
  CHECK(any_differ);
}

TEST_CASE("variable draws rescale to the exact budget") {
  const auto team = stub_team(20, 10, 10, 10);
  CapacityParams params;
  params.batch_size = 250;
  params.deferral_rate = 0.2;
  params.distribution = CapacityDistribution::variable;
  params.capacity_seed = 77;
  const auto H = sample_capacity_matrix({250, 250, 250, 250, 250}, team, params);
  bool any_nonuniform = false;
  for (const auto& row : H) {
    CHECK(row_sum(row) == 50);
    for (int c : row) {
      CHECK(c >= 0);
      any_nonuniform |= (c != 1);
    }
  }
  CHECK(any_nonuniform);  // actually varies, unlike the homogeneous case
}

TEST_CASE("pool filtering zeroes out-of-pool experts in every batch") {
  const auto team = stub_team(20, 10, 10, 10);
  CapacityParams params;
  params.batch_size = 100;
  params.deferral_rate = 0.3;
  params.pool = ExpertPool::agreeing;
  const auto H = sample_capacity_matrix({100, 100}, team, params);
  const auto in_pool = team.members_of(ExpertGroup::agreeing);
  for (const auto& row : H) {
    CHECK(row_sum(row) == 30);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const bool member =
          std::find(in_pool.begin(), in_pool.end(), static_cast<int>(j)) !=
          in_pool.end();
      if (!member) CHECK(row[j] == 0);
    }
  }
}

TEST_CASE("infeasible scenarios throw") {
  SUBCASE("empty pool") {
    const auto team = stub_team(5, 0, 0, 0);
    CapacityParams params;
    params.pool = ExpertPool::unfair;
    CHECK_THROWS_AS(sample_capacity_matrix({100}, team, params), infeasible_error);
  }
  SUBCASE("everyone absent with a positive budget") {
    const auto team = stub_team(0, 0, 0, 1);
    CapacityParams params;
    params.pool = ExpertPool::sparse;
    params.absence_rate = 0.9;  // rounds to the whole 1-expert pool
    CHECK_THROWS_AS(sample_capacity_matrix({100}, team, params), infeasible_error);
  }
}

TEST_CASE("partial final batch gets a proportional budget") {
  const auto team = stub_team(4, 0, 0, 0);
  CapacityParams params;
  params.batch_size = 10;
  params.deferral_rate = 0.2;
  const auto H = sample_capacity_matrix({10, 10, 5}, team, params);
  CHECK(row_sum(H[0]) == 2);
  CHECK(row_sum(H[1]) == 2);
  CHECK(row_sum(H[2]) == 1);  // round(0.2 * 5)
}

TEST_CASE("row-budget identity holds across random parameters") {
  Rng rng(123);
  const auto team = stub_team(7, 5, 3, 4);
  for (int trial = 0; trial < 60; ++trial) {
    CapacityParams params;
    params.batch_size = 20 + static_cast<int>(rng.below(300));
    params.deferral_rate = 0.05 + 0.9 * rng.uniform01();
    params.distribution = rng.below(2) ? CapacityDistribution::variable
                                       : CapacityDistribution::homogeneous;
    params.absence_rate = 0.6 * rng.uniform01();
    params.absence_seed = rng.next();
    params.capacity_seed = rng.next();
    std::vector<int> sizes;
    const int n_batches = 1 + static_cast<int>(rng.below(5));
    for (int b = 0; b < n_batches; ++b) {
      sizes.push_back(b + 1 == n_batches ? 1 + static_cast<int>(rng.below(params.batch_size))
                                         : params.batch_size);
    }
    const auto H = sample_capacity_matrix(sizes, team, params);
    for (std::size_t b = 0; b < H.size(); ++b) {
      CHECK(row_sum(H[b]) == deferral_budget(params.deferral_rate, sizes[b]));
      for (int c : H[b]) CHECK(c >= 0);
    }
  }
}

TEST_CASE("enumerate_grid cardinality and determinism") {
  SUBCASE("Table-1-shaped grid") {
    GridConfig grid;  // defaults: 1x2x2x2x2 combos x 5 seeds
    const auto specs = enumerate_grid(grid);
    CHECK(specs.size() == 80);
  }
  SUBCASE("Table-2-shaped grid") {
    GridConfig grid;
    grid.pools = {ExpertPool::agreeing, ExpertPool::sparse, ExpertPool::standard,
                  ExpertPool::unfair};
    grid.absence_rates = {0.0};
    grid.distributions = {CapacityDistribution::homogeneous};
    grid.seeds = {0};
    const auto specs = enumerate_grid(grid);
    CHECK(specs.size() == 16);
  }
  SUBCASE("empty seed list gives an empty grid") {
    GridConfig grid;
    grid.seeds = {};
    CHECK(enumerate_grid(grid).empty());
  }
  SUBCASE("two enumerations agree") {
    GridConfig grid;
    const auto a = enumerate_grid(grid);
    const auto b = enumerate_grid(grid);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].label == b[i].label);
      CHECK(a[i].params.batch_seed == b[i].params.batch_seed);
    }
    // nesting order: first scenarios share the first pool and batch size
    CHECK(a[0].params.batch_size == 250);
    CHECK(a[0].params.deferral_rate == 0.2);
  }
}

TEST_CASE("build_scenario composes batching and capacities") {
  const auto team = stub_team(10, 0, 0, 0);
  CapacityParams params;
  params.batch_size = 40;
  params.deferral_rate = 0.25;
  params.batch_seed = 3;
  const auto scenario = build_scenario(100, team, params);
  REQUIRE(scenario.batches.size() == 3);
  CHECK(scenario.batch_of.size() == 100);
  REQUIRE(scenario.H.size() == 3);
  CHECK(row_sum(scenario.H[0]) == 10);
  CHECK(row_sum(scenario.H[2]) == 5);  // round(0.25 * 20)
}
