#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "defersim/errors.hpp"
#include "defersim/expertise_model.hpp"
#include "defersim/scorer.hpp"
#include "test_helpers.hpp"

using namespace defersim;

TEST_CASE("outcome_of covers the confusion table") {
  CHECK(outcome_of(0, 1) == Outcome::fp);
  CHECK(outcome_of(0, 0) == Outcome::tn);
  CHECK(outcome_of(1, 1) == Outcome::tp);
  CHECK(outcome_of(1, 0) == Outcome::fn);
}

TEST_CASE("build_training_set derives outcomes from the log") {
  auto data = test::make_dataset(1);
  test::add_instance(data, {0.1}, 0, 1, 0, 0.3);
  test::add_instance(data, {0.2}, 1, 1, 0, 0.7);

  PredictionLog log;
  log.entries = {{0, 0, 1}, {1, 0, 1}, {1, 1, 0}};
  const auto examples = build_training_set(log, data);
  REQUIRE(examples.size() == 3);
  CHECK(examples[0].outcome == Outcome::fp);
  CHECK(examples[1].outcome == Outcome::tp);
  CHECK(examples[2].outcome == Outcome::fn);
  CHECK(examples[0].features == std::vector<double>{0.1});
  CHECK(examples[2].expert_index == 1);

  SUBCASE("empty log gives an empty set") {
    CHECK(build_training_set(PredictionLog{}, data).empty());
  }
  SUBCASE("unknown instance id") {
    PredictionLog bad;
    bad.entries = {{42, 0, 1}};
    CHECK_THROWS_AS(build_training_set(bad, data), integrity_error);
  }
}

namespace {

// Negative-class-only generator: outcomes are FP/TN and the true
// P(FP | x, expert) is an exact logistic in x, so the reference learner can
// recover it. Experts share the feature direction and differ in intercept.
struct FlipWorld {
  std::vector<OutcomeExample> examples;
  std::vector<double> intercepts;
  double slope;

  FlipWorld(int n, int n_experts, double slope_, std::uint64_t seed)
      : slope(slope_) {
    Rng rng(seed);
    for (int j = 0; j < n_experts; ++j) {
      intercepts.push_back(-1.5 + 0.5 * j);
    }
    for (int i = 0; i < n; ++i) {
      OutcomeExample ex;
      ex.features = {rng.normal(), rng.normal()};
      ex.score = rng.uniform01();
      ex.expert_index = static_cast<int>(rng.below(n_experts));
      const double p = sigmoid(intercepts[ex.expert_index] + slope * ex.features[0]);
      ex.outcome = rng.uniform01() < p ? Outcome::fp : Outcome::tn;
      examples.push_back(std::move(ex));
    }
  }

  double true_p_fp(const OutcomeExample& ex) const {
    return sigmoid(intercepts[ex.expert_index] + slope * ex.features[0]);
  }
};

}  // namespace

TEST_CASE("outcome model recovers feature-conditional error ranking") {
  const FlipWorld world(20000, 2, 2.0, 61);
  OutcomeModelConfig cfg;
  const auto model = fit_outcome_model(world.examples, 2, cfg);

  // expert 0 errs far more on x0 > 0; the model must rank held-out pairs
  const FlipWorld held_out(2000, 2, 2.0, 62);
  int correct = 0, pairs = 0;
  for (std::size_t a = 0; a < held_out.examples.size(); a += 7) {
    for (std::size_t b = a + 1; b < held_out.examples.size(); b += 97) {
      const auto& ea = held_out.examples[a];
      const auto& eb = held_out.examples[b];
      if (ea.expert_index != 0 || eb.expert_index != 0) continue;
      if ((ea.features[0] > 0) == (eb.features[0] > 0)) continue;
      const double pa =
          model.predict_proba(ea.features, ea.score, 0)[static_cast<int>(Outcome::fp)];
      const double pb =
          model.predict_proba(eb.features, eb.score, 0)[static_cast<int>(Outcome::fp)];
      const bool want_a = ea.features[0] > eb.features[0];
      correct += (want_a ? pa > pb : pb > pa);
      ++pairs;
    }
  }
  REQUIRE(pairs > 100);
  CHECK(static_cast<double>(correct) / pairs >= 0.95);
}

TEST_CASE("outcome model probability estimates are close at scale") {
  // >= 50k rows from known parameters: MAE of P(FP) under 0.05
  const FlipWorld world(50000, 3, 1.5, 63);
  OutcomeModelConfig cfg;
  const auto model = fit_outcome_model(world.examples, 3, cfg);

  const FlipWorld held_out(4000, 3, 1.5, 64);
  double abs_err = 0.0;
  for (const auto& ex : held_out.examples) {
    const double p_hat =
        model.predict_proba(ex.features, ex.score,
                            ex.expert_index)[static_cast<int>(Outcome::fp)];
    abs_err += std::abs(p_hat - world.true_p_fp(ex));
  }
  CHECK(abs_err / static_cast<double>(held_out.examples.size()) <= 0.05);
}

namespace {

std::vector<OutcomeExample> mixed_world(int n, int n_experts, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<OutcomeExample> out;
  for (int i = 0; i < n; ++i) {
    OutcomeExample ex;
    ex.features = {rng.normal(), rng.normal(), rng.normal()};
    ex.score = rng.uniform01();
    ex.expert_index = static_cast<int>(rng.below(n_experts));
    const int label = rng.uniform01() < 0.2 ? 1 : 0;
    const double p_err = sigmoid(-1.0 + ex.features[1] - 0.5 * ex.score);
    const int pred = rng.uniform01() < p_err ? 1 - label : label;
    ex.outcome = outcome_of(label, pred);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("outcome model simplex, prior matching, and determinism") {
  const auto examples = mixed_world(12000, 4, 71);
  OutcomeModelConfig cfg;
  const auto model = fit_outcome_model(examples, 4, cfg);

  SUBCASE("predictions live on the simplex") {
    Rng rng(72);
    for (int i = 0; i < 200; ++i) {
      const std::vector<double> x = {rng.normal(), rng.normal(), rng.normal()};
      const auto p = model.predict_proba(x, rng.uniform01(),
                                         static_cast<int>(rng.below(4)));
      double sum = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
  SUBCASE("mean prediction matches empirical outcome frequencies") {
    std::array<double, 4> mean{}, freq{};
    for (const auto& ex : examples) {
      const auto p = model.predict_proba(ex.features, ex.score, ex.expert_index);
      for (int k = 0; k < 4; ++k) mean[k] += p[k];
      freq[static_cast<int>(ex.outcome)] += 1.0;
    }
    for (int k = 0; k < 4; ++k) {
      mean[k] /= static_cast<double>(examples.size());
      freq[k] /= static_cast<double>(examples.size());
      CHECK(std::abs(mean[k] - freq[k]) < 0.02);
    }
  }
  SUBCASE("training twice gives identical parameters") {
    const auto model2 = fit_outcome_model(examples, 4, cfg);
    Rng rng(73);
    for (int i = 0; i < 50; ++i) {
      const std::vector<double> x = {rng.normal(), rng.normal(), rng.normal()};
      const double s = rng.uniform01();
      const int e = static_cast<int>(rng.below(4));
      const auto a = model.predict_proba(x, s, e);
      const auto b = model2.predict_proba(x, s, e);
      for (int k = 0; k < 4; ++k) CHECK(a[k] == b[k]);
    }
  }
  SUBCASE("save/load round trip preserves predictions bit-exactly") {
    const auto path =
        (std::filesystem::temp_directory_path() / "outcome_model.json").string();
    model.save(path, "cafe");
    std::string hash;
    const auto loaded = OutcomeModel::load(path, &hash);
    CHECK(hash == "cafe");
    const std::vector<double> x = {0.3, -1.2, 0.5};
    const auto a = model.predict_proba(x, 0.4, 2);
    const auto b = loaded.predict_proba(x, 0.4, 2);
    for (int k = 0; k < 4; ++k) CHECK(a[k] == b[k]);
  }
}

TEST_CASE("predicted_loss is the lambda-weighted FP/FN sum") {
  const auto examples = mixed_world(4000, 2, 81);
  const auto model = fit_outcome_model(examples, 2, OutcomeModelConfig{});
  Rng rng(82);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x = {rng.normal(), rng.normal(), rng.normal()};
    const double s = rng.uniform01();
    const int e = static_cast<int>(rng.below(2));
    const double lambda = 2.0 * rng.uniform01();
    const auto p = model.predict_proba(x, s, e);
    const double want = lambda * p[static_cast<int>(Outcome::fp)] +
                        p[static_cast<int>(Outcome::fn)];
    CHECK(model.predicted_loss(x, s, e, lambda) == doctest::Approx(want).epsilon(1e-12));
    // lambda = 0 reduces to P(FN)
    CHECK(model.predicted_loss(x, s, e, 0.0) ==
          doctest::Approx(p[static_cast<int>(Outcome::fn)]).epsilon(1e-12));
  }
}

TEST_CASE("outcome model failure modes") {
  SUBCASE("single-outcome data is degenerate") {
    std::vector<OutcomeExample> mono;
    for (int i = 0; i < 50; ++i) {
      OutcomeExample ex;
      ex.features = {0.5};
      ex.expert_index = 0;
      ex.outcome = Outcome::tn;
      mono.push_back(ex);
    }
    CHECK_THROWS_AS(fit_outcome_model(mono, 1, OutcomeModelConfig{}),
                    degenerate_data_error);
  }
  SUBCASE("empty training set") {
    CHECK_THROWS_AS(fit_outcome_model({}, 1, OutcomeModelConfig{}),
                    degenerate_data_error);
  }
  SUBCASE("unseen expert raises unknown_expert_error") {
    const auto examples = mixed_world(2000, 2, 91);
    // declare 3 experts but only 0 and 1 appear in the data
    const auto model = fit_outcome_model(examples, 3, OutcomeModelConfig{});
    CHECK_THROWS_AS(model.predict_proba(std::vector<double>{0.0, 0.0, 0.0}, 0.5, 2),
                    unknown_expert_error);
    CHECK_THROWS_AS(model.predict_proba(std::vector<double>{0.0, 0.0, 0.0}, 0.5, 9),
                    unknown_expert_error);
  }
}

TEST_CASE("class weighting keeps the fit usable under imbalance") {
  OutcomeModelConfig weighted;
  weighted.class_weighting = true;
  const auto examples = mixed_world(8000, 2, 95);
  const auto model = fit_outcome_model(examples, 2, weighted);
  const auto p = model.predict_proba(std::vector<double>{0.0, 0.0, 0.0}, 0.5, 0);
  double sum = 0.0;
  for (double v : p) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}
