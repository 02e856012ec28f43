#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "defersim/errors.hpp"
#include "defersim/experts.hpp"
#include "defersim/scorer.hpp"
#include "defersim/synthetic.hpp"
#include "test_helpers.hpp"

using namespace defersim;

TEST_CASE("transform_score anchor points") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double t = 0.01 + 0.98 * rng.uniform01();
    CHECK(transform_score(t, t) == 0.0);
    CHECK(transform_score(0.0, t) == -0.5);
    CHECK(transform_score(1.0, t) == 0.5);
  }
  CHECK_THROWS_AS(transform_score(0.5, 0.0), config_error);
  CHECK_THROWS_AS(transform_score(0.5, 1.0), config_error);
}

TEST_CASE("transform_score is monotone, continuous, and bounded") {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const double t = 0.05 + 0.9 * rng.uniform01();
    const double m1 = rng.uniform01();
    const double m2 = rng.uniform01();
    const double lo = std::min(m1, m2), hi = std::max(m1, m2);
    CHECK(transform_score(lo, t) <= transform_score(hi, t));
    CHECK(transform_score(m1, t) >= -0.5);
    CHECK(transform_score(m1, t) <= 0.5);
    // continuity at the breakpoint: both one-sided values collapse to 0
    const double eps = 1e-12;
    CHECK(std::abs(transform_score(t - eps, t)) < 1e-10);
    CHECK(std::abs(transform_score(std::min(1.0, t + eps), t)) < 1e-10);
  }
}

TEST_CASE("error_probabilities closed forms") {
  ExpertParams e;
  e.w = {1.0, 0.0};
  e.w_m = 0.0;

  SUBCASE("alpha 0 with zero intercepts is coin-flip error") {
    e.alpha = 0.0;
    const auto p = error_probabilities(e, std::vector<double>{3.0, -2.0}, 0.7, 0.5);
    CHECK(p.p_fp == 0.5);
    CHECK(p.p_fn == 0.5);
  }
  SUBCASE("saturated intercept") {
    e.alpha = 1.0;
    e.beta0 = -20.0;
    const auto p = error_probabilities(e, std::vector<double>{1.0, 0.0}, 0.5, 0.5);
    CHECK(p.p_fp < 1e-8);
  }
  SUBCASE("unit projection against an independent sigmoid table") {
    e.alpha = 1.0;
    e.beta0 = 0.0;
    e.beta1 = 0.0;
    const auto p = error_probabilities(e, std::vector<double>{1.0, 0.0}, 0.3, 0.5);
    // sigma(-1) and sigma(1), 10 decimal places
    CHECK(p.p_fp == doctest::Approx(0.2689414214).epsilon(1e-9));
    CHECK(p.p_fn == doctest::Approx(0.7311).epsilon(1e-4));
  }
  SUBCASE("all-zero weights define z = 0") {
    ExpertParams z;
    z.w = {0.0, 0.0};
    z.w_m = 0.0;
    z.alpha = 3.0;
    z.beta0 = 1.0;
    const auto p = error_probabilities(z, std::vector<double>{5.0, 5.0}, 0.9, 0.5);
    CHECK(p.p_fp == sigmoid(1.0));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(error_probabilities(e, std::vector<double>{1.0}, 0.5, 0.5),
                    config_error);
  }
}

TEST_CASE("p_fp decreases and p_fn increases along +w") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    ExpertParams e;
    e.w = {rng.normal(), rng.normal(), rng.normal()};
    e.w_m = rng.normal();
    e.alpha = 0.5 + 2.0 * rng.uniform01();
    e.beta0 = rng.normal();
    e.beta1 = rng.normal();
    std::vector<double> x = {rng.normal(), rng.normal(), rng.normal()};
    std::vector<double> x_up = x;
    for (int c = 0; c < 3; ++c) x_up[c] += 0.5 * e.w[c];  // strictly raises z
    const double m = rng.uniform01();
    const auto p = error_probabilities(e, x, m, 0.5);
    const auto p_up = error_probabilities(e, x_up, m, 0.5);
    CHECK(p_up.p_fp < p.p_fp);
    CHECK(p_up.p_fn > p.p_fn);
  }
}

TEST_CASE("sample_prediction forced outcomes") {
  auto data = test::make_dataset(1);
  test::add_instance(data, {0.0}, 0);
  test::add_instance(data, {0.0}, 1);
  const auto scaler = test::identity_scaler(1);

  ExpertParams e;
  e.w = {1.0};
  e.alpha = 0.0;

  SUBCASE("p_fp forced to 0 keeps negatives correct") {
    e.beta0 = -20.0;
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      CHECK(sample_prediction(e, data.instances[0], scaler, 0.5, rng) == 0);
    }
  }
  SUBCASE("p_fn forced to 1 flips every positive") {
    e.beta1 = 20.0;
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      CHECK(sample_prediction(e, data.instances[1], scaler, 0.5, rng) == 0);
    }
  }
}

TEST_CASE("Monte Carlo flip rate matches the closed form at 3 sigma") {
  auto data = test::make_dataset(1);
  test::add_instance(data, {0.0}, 0);
  const auto scaler = test::identity_scaler(1);

  ExpertParams e;
  e.w = {1.0};
  e.alpha = 0.0;
  e.beta0 = std::log(0.3 / 0.7);  // p_fp = 0.3 exactly
  Rng rng(6);
  const int n = 100000;
  long flips = 0;
  for (int i = 0; i < n; ++i) {
    flips += sample_prediction(e, data.instances[0], scaler, 0.5, rng);
  }
  const double rate = static_cast<double>(flips) / n;
  const double bound = 3.0 * std::sqrt(0.3 * 0.7 / n);
  CHECK(std::abs(rate - 0.3) < bound);
  CHECK(std::abs(rate - 0.3) < 0.01);
}

namespace {

Dataset calibration_dataset(int d, int n, std::uint64_t seed) {
  Rng rng(seed);
  auto data = test::make_dataset(d);
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (double& v : x) v = rng.normal();
    test::add_instance(data, std::move(x), static_cast<int>(rng.below(2)), 1,
                       static_cast<int>(rng.below(2)), rng.uniform01());
  }
  return data;
}

}  // namespace

TEST_CASE("calibrate_intercepts closed forms and contract") {
  auto data = calibration_dataset(2, 400, 7);
  const auto pos = test::all_positions(data);
  const auto scaler = test::identity_scaler(2);

  SUBCASE("alpha 0 gives the logit closed form") {
    ExpertParams e;
    e.w = {1.0, 0.0};
    e.alpha = 0.0;
    const auto cal =
        calibrate_intercepts(e, data, pos, scaler, 0.5, 0.05, 0.4, 1e-6);
    CHECK(cal.beta0 == doctest::Approx(std::log(0.05 / 0.95)).epsilon(1e-4));
    const auto cal2 =
        calibrate_intercepts(e, data, pos, scaler, 0.5, 0.5, 0.5, 1e-6);
    CHECK(cal2.beta0 == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(cal2.beta1 == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("post-calibration means hit the targets") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      ExpertParams e;
      e.w = {rng.normal(), rng.normal()};
      e.w_m = rng.normal();
      e.alpha = 3.0 * rng.uniform01();
      const double fpr = 0.02 + 0.3 * rng.uniform01();
      const double fnr = 0.1 + 0.5 * rng.uniform01();
      const auto cal =
          calibrate_intercepts(e, data, pos, scaler, 0.5, fpr, fnr, 1e-3);
      const auto rates = mean_error_rates(cal, data, pos, scaler, 0.5);
      CHECK(std::abs(rates.mean_fpr - fpr) <= 1e-3);
      CHECK(std::abs(rates.mean_fnr - fnr) <= 1e-3);

      // idempotence: recalibrating moves the intercepts less than tol
      const auto again =
          calibrate_intercepts(cal, data, pos, scaler, 0.5, fpr, fnr, 1e-3);
      CHECK(std::abs(again.beta0 - cal.beta0) < 0.02);
      CHECK(std::abs(again.beta1 - cal.beta1) < 0.02);
    }
  }
  SUBCASE("unreachable target fails to bracket") {
    ExpertParams e;
    e.w = {1.0, 0.0};
    e.alpha = 200.0;  // z spread dominates any intercept in [-30, 30]
    CHECK_THROWS_AS(
        calibrate_intercepts(e, data, pos, scaler, 0.5, 1e-9, 0.4, 1e-12),
        calibration_error);
  }
  SUBCASE("single-class sample is degenerate") {
    auto one_class = test::make_dataset(2);
    for (int i = 0; i < 10; ++i) test::add_instance(one_class, {0.0, 0.0}, 0);
    ExpertParams e;
    e.w = {1.0, 0.0};
    CHECK_THROWS_AS(calibrate_intercepts(e, one_class,
                                         test::all_positions(one_class), scaler,
                                         0.5, 0.05, 0.4, 1e-3),
                    degenerate_data_error);
  }
}

TEST_CASE("generate_team group recipes") {
  SyntheticConfig synth;
  synth.rows = 3000;
  synth.features = 10;
  synth.months = 1;
  synth.seed = 11;
  auto data = generate_synthetic_dataset(synth);
  for (auto& inst : data.instances) {
    inst.score = 0.5;  // flat stand-in score
    inst.has_score = true;
  }
  const auto sample = test::all_positions(data);

  TeamConfig config;
  config.seed = 21;
  const auto team = generate_team(config, data, sample, 0, 0.1);

  CHECK(team.experts.size() == 50);
  CHECK(team.members_of(ExpertGroup::standard).size() == 20);
  CHECK(team.members_of(ExpertGroup::unfair).size() == 10);
  CHECK(team.members_of(ExpertGroup::agreeing).size() == 10);
  CHECK(team.members_of(ExpertGroup::sparse).size() == 10);

  for (int j : team.members_of(ExpertGroup::agreeing)) {
    const auto& e = team.experts[j];
    double wsq = 0.0;
    for (double v : e.w) wsq += v * v;
    CHECK(e.w_m * e.w_m >= 0.5 * (wsq + e.w_m * e.w_m));
  }
  for (int j : team.members_of(ExpertGroup::sparse)) {
    int nonzero = 0;
    for (double v : team.experts[j].w) nonzero += (v != 0.0);
    CHECK(nonzero >= 1);
    CHECK(nonzero <= 3);  // ceil(0.25 * 10)
  }

  SUBCASE("same seed reproduces the team exactly") {
    const auto team2 = generate_team(config, data, sample, 0, 0.1);
    REQUIRE(team2.experts.size() == team.experts.size());
    for (std::size_t j = 0; j < team.experts.size(); ++j) {
      CHECK(team2.experts[j].beta0 == team.experts[j].beta0);
      CHECK(team2.experts[j].beta1 == team.experts[j].beta1);
      CHECK(team2.experts[j].w == team.experts[j].w);
      CHECK(team2.experts[j].w_m == team.experts[j].w_m);
    }
  }

  SUBCASE("calibration hit its targets") {
    for (const auto& e : team.experts) {
      const auto rates = mean_error_rates(e, data, sample, team.scaler, 0.1);
      CHECK(std::abs(rates.mean_fpr - e.target_fpr) <= 1e-3);
      CHECK(std::abs(rates.mean_fnr - e.target_fnr) <= 1e-3);
    }
  }

  SUBCASE("unfair experts err more on the protected group") {
    std::vector<int> prot, ref;
    for (int p : sample) {
      if (data.instances[p].label != 0) continue;
      (data.instances[p].group == 1 ? prot : ref).push_back(p);
    }
    REQUIRE(prot.size() > 50);
    REQUIRE(ref.size() > 50);
    for (int j : team.members_of(ExpertGroup::unfair)) {
      const auto& e = team.experts[j];
      auto mean_fp = [&](const std::vector<int>& subset) {
        double sum = 0.0;
        for (int p : subset) {
          const auto x = team.scaler.apply(data.instances[p].features);
          sum += error_probabilities(e, x, data.instances[p].score, 0.1).p_fp;
        }
        return sum / static_cast<double>(subset.size());
      };
      CHECK(mean_fp(prot) > mean_fp(ref));
    }
  }
}

TEST_CASE("standard group nonzero count tracks the 12-feature recipe") {
  SyntheticConfig synth;
  synth.rows = 500;
  synth.features = 48;
  synth.months = 1;
  synth.seed = 12;
  auto data = generate_synthetic_dataset(synth);
  for (auto& inst : data.instances) {
    inst.score = 0.5;
    inst.has_score = true;
  }
  TeamConfig config;
  config.standard.count = 40;
  config.unfair.count = 0;
  config.agreeing.count = 0;
  config.sparse.count = 0;
  config.seed = 22;
  const auto team = generate_team(config, data, test::all_positions(data), 0, 0.1);
  long nonzero = 0;
  for (const auto& e : team.experts) {
    for (double v : e.w) nonzero += (v != 0.0);
  }
  const double mean_nonzero = static_cast<double>(nonzero) / 40.0;
  // Binomial(48, 12/48) mean 12, sd ~ 3; 40 experts shrink the sd to ~0.47
  CHECK(mean_nonzero == doctest::Approx(12.0).epsilon(0.15));
}

TEST_CASE("full_prediction_table cardinality and determinism") {
  auto data = test::make_dataset(1);
  test::add_instance(data, {0.3}, 0, 1, 0, 0.2);
  test::add_instance(data, {-0.5}, 1, 1, 0, 0.8);
  test::add_instance(data, {1.0}, 0, 1, 0, 0.6);

  ExpertTeam team;
  team.scaler = test::identity_scaler(1);
  team.threshold = 0.5;
  ExpertParams perfect;
  perfect.id = "perfect";
  perfect.w = {1.0};
  perfect.alpha = 0.0;
  perfect.beta0 = -30.0;
  perfect.beta1 = -30.0;
  ExpertParams noisy = perfect;
  noisy.id = "noisy";
  noisy.beta0 = 0.0;
  noisy.beta1 = 0.0;
  team.experts = {perfect, noisy};

  const auto log = full_prediction_table(team, data, test::all_positions(data), 77);
  CHECK(log.entries.size() == 6);

  // the error-free expert reproduces the labels
  for (const auto& e : log.entries) {
    if (e.expert_index == 0) {
      CHECK(e.prediction == data.instances[e.instance_id].label);
    }
  }

  const auto log2 = full_prediction_table(team, data, test::all_positions(data), 77);
  REQUIRE(log2.entries.size() == log.entries.size());
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    CHECK(log2.entries[i].prediction == log.entries[i].prediction);
  }

  SUBCASE("per-pair streams: dropping an expert leaves the rest unchanged") {
    ExpertTeam solo = team;
    solo.experts = {team.experts[0]};
    const auto solo_log =
        full_prediction_table(solo, data, test::all_positions(data), 77);
    for (const auto& e : solo_log.entries) {
      for (const auto& full : log.entries) {
        if (full.instance_id == e.instance_id && full.expert_index == 0) {
          CHECK(full.prediction == e.prediction);
        }
      }
    }
  }

  SUBCASE("prediction table lookup and round trip") {
    const auto table = PredictionTable::build(log, 2);
    CHECK(table.lookup(0, 1) >= 0);
    CHECK(table.lookup(99, 0) == -1);

    const auto path =
        (std::filesystem::temp_directory_path() / "pred_log.csv").string();
    save_prediction_log(log, team, path, "test");
    const auto loaded = load_prediction_log(path, team);
    REQUIRE(loaded.entries.size() == log.entries.size());
    for (std::size_t i = 0; i < log.entries.size(); ++i) {
      CHECK(loaded.entries[i].instance_id == log.entries[i].instance_id);
      CHECK(loaded.entries[i].expert_index == log.entries[i].expert_index);
      CHECK(loaded.entries[i].prediction == log.entries[i].prediction);
    }
  }
}

TEST_CASE("team serialization round trip") {
  SyntheticConfig synth;
  synth.rows = 800;
  synth.features = 5;
  synth.months = 1;
  synth.seed = 31;
  auto data = generate_synthetic_dataset(synth);
  for (auto& inst : data.instances) {
    inst.score = 0.4;
    inst.has_score = true;
  }
  TeamConfig config;
  config.standard.count = 2;
  config.unfair.count = 1;
  config.agreeing.count = 1;
  config.sparse.count = 1;
  config.seed = 33;
  const auto team = generate_team(config, data, test::all_positions(data), 0, 0.2);

  const auto path = (std::filesystem::temp_directory_path() / "team.json").string();
  save_team(team, path, "deadbeef00000000");
  std::string hash;
  const auto loaded = load_team(path, &hash);
  CHECK(hash == "deadbeef00000000");
  REQUIRE(loaded.experts.size() == team.experts.size());
  CHECK(loaded.threshold == team.threshold);
  for (std::size_t j = 0; j < team.experts.size(); ++j) {
    CHECK(loaded.experts[j].id == team.experts[j].id);
    CHECK(loaded.experts[j].beta0 == team.experts[j].beta0);
    CHECK(loaded.experts[j].w == team.experts[j].w);
    CHECK(loaded.experts[j].group == team.experts[j].group);
  }
  CHECK(loaded.scaler.mean == team.scaler.mean);
}
