#include "defersim/expertise_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "defersim/errors.hpp"

namespace defersim {

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::tp: return "tp";
    case Outcome::fp: return "fp";
    case Outcome::tn: return "tn";
    case Outcome::fn: return "fn";
  }
  return "tn";
}

Outcome outcome_of(int label, int prediction) {
  if (label == 1) return prediction == 1 ? Outcome::tp : Outcome::fn;
  return prediction == 1 ? Outcome::fp : Outcome::tn;
}

std::vector<OutcomeExample> build_training_set(const PredictionLog& log,
                                               const Dataset& data) {
  const auto index = data.index_by_id();
  std::vector<OutcomeExample> out;
  out.reserve(log.entries.size());
  for (const auto& e : log.entries) {
    const auto it = index.find(e.instance_id);
    if (it == index.end()) {
      throw integrity_error("prediction log references unknown instance " +
                            std::to_string(e.instance_id));
    }
    const Instance& inst = data.instances[it->second];
    OutcomeExample ex;
    ex.features = inst.features;
    ex.score = inst.score;
    ex.expert_index = e.expert_index;
    ex.outcome = outcome_of(inst.label, e.prediction);
    out.push_back(std::move(ex));
  }
  return out;
}

bool OutcomeModel::expert_seen(int expert_index) const {
  return expert_index >= 0 &&
         expert_index < static_cast<int>(expert_counts_.size()) &&
         expert_counts_[expert_index] > 0;
}

std::array<double, OutcomeModel::kClasses> OutcomeModel::logits(
    std::span<const double> x_std, double score_std, int expert_index) const {
  std::array<double, kClasses> z = bias_;
  for (std::size_t c = 0; c < feat_w_.size(); ++c) {
    for (int k = 0; k < kClasses; ++k) z[k] += feat_w_[c][k] * x_std[c];
  }
  if (config_.include_score) {
    for (int k = 0; k < kClasses; ++k) z[k] += score_w_[k] * score_std;
  }
  for (int k = 0; k < kClasses; ++k) z[k] += expert_w_[expert_index][k];
  return z;
}

namespace {

std::array<double, 4> softmax4(std::array<double, 4> z) {
  const double m = std::max(std::max(z[0], z[1]), std::max(z[2], z[3]));
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

}  // namespace

std::array<double, OutcomeModel::kClasses> OutcomeModel::predict_proba(
    std::span<const double> x_raw, double score, int expert_index) const {
  if (!expert_seen(expert_index)) {
    throw unknown_expert_error("outcome model has no training data for expert index " +
                               std::to_string(expert_index));
  }
  std::vector<double> x_std(x_raw.size());
  for (std::size_t c = 0; c < x_raw.size(); ++c) {
    x_std[c] = (x_raw[c] - scaler_.mean[c]) / scaler_.stddev[c];
  }
  const double score_std = (score - score_mean_) / score_stddev_;
  return softmax4(logits(x_std, score_std, expert_index));
}

double OutcomeModel::predicted_loss(std::span<const double> x_raw, double score,
                                    int expert_index, double lambda) const {
  const auto p = predict_proba(x_raw, score, expert_index);
  return lambda * p[static_cast<int>(Outcome::fp)] +
         p[static_cast<int>(Outcome::fn)];
}

OutcomeModel fit_outcome_model(const std::vector<OutcomeExample>& examples,
                               int n_experts, const OutcomeModelConfig& config) {
  if (examples.empty())
    throw degenerate_data_error("fit_outcome_model: no training examples");
  std::array<long, 4> outcome_counts{};
  for (const auto& ex : examples) {
    outcome_counts[static_cast<int>(ex.outcome)] += 1;
    if (ex.expert_index < 0 || ex.expert_index >= n_experts)
      throw integrity_error("fit_outcome_model: expert index out of range");
  }
  int distinct = 0;
  for (long c : outcome_counts) distinct += (c > 0);
  if (distinct < 2) {
    throw degenerate_data_error(
        "fit_outcome_model: training data holds a single outcome class");
  }

  const std::size_t n = examples.size();
  const std::size_t d = examples[0].features.size();
  OutcomeModel model;
  model.config_ = config;
  model.expert_counts_.assign(n_experts, 0);
  for (const auto& ex : examples) model.expert_counts_[ex.expert_index] += 1;

  // standardization statistics over the training examples
  model.scaler_.mean.assign(d, 0.0);
  model.scaler_.stddev.assign(d, 1.0);
  double smean = 0.0;
  for (const auto& ex : examples) {
    for (std::size_t c = 0; c < d; ++c) model.scaler_.mean[c] += ex.features[c];
    smean += ex.score;
  }
  for (std::size_t c = 0; c < d; ++c) model.scaler_.mean[c] /= static_cast<double>(n);
  smean /= static_cast<double>(n);
  std::vector<double> ss(d, 0.0);
  double sss = 0.0;
  for (const auto& ex : examples) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = ex.features[c] - model.scaler_.mean[c];
      ss[c] += dv * dv;
    }
    const double dv = ex.score - smean;
    sss += dv * dv;
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double var = ss[c] / static_cast<double>(n);
    model.scaler_.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  model.score_mean_ = smean;
  const double svar = sss / static_cast<double>(n);
  model.score_stddev_ = svar > 0.0 ? std::sqrt(svar) : 1.0;

  // cache standardized design
  std::vector<double> xs(n * d);
  std::vector<double> sc(n);
  std::vector<int> ys(n), es(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      xs[i * d + c] = (examples[i].features[c] - model.scaler_.mean[c]) /
                      model.scaler_.stddev[c];
    }
    sc[i] = (examples[i].score - model.score_mean_) / model.score_stddev_;
    ys[i] = static_cast<int>(examples[i].outcome);
    es[i] = examples[i].expert_index;
  }

  std::vector<double> weight(n, 1.0);
  double weight_sum = static_cast<double>(n);
  if (config.class_weighting) {
    weight_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weight[i] = static_cast<double>(n) /
                  (4.0 * static_cast<double>(std::max(1L, outcome_counts[ys[i]])));
      weight_sum += weight[i];
    }
  }

  model.feat_w_.assign(d, {});
  model.expert_w_.assign(n_experts, {});

  std::vector<std::array<double, 4>> g_feat(d);
  std::vector<std::array<double, 4>> g_exp(n_experts);
  std::array<double, 4> g_score{}, g_bias{};
  for (int it = 0; it < config.iterations; ++it) {
    for (auto& g : g_feat) g.fill(0.0);
    for (auto& g : g_exp) g.fill(0.0);
    g_score.fill(0.0);
    g_bias.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, 4> z = model.bias_;
      const double* x = &xs[i * d];
      for (std::size_t c = 0; c < d; ++c) {
        const auto& wc = model.feat_w_[c];
        for (int k = 0; k < 4; ++k) z[k] += wc[k] * x[c];
      }
      if (config.include_score) {
        for (int k = 0; k < 4; ++k) z[k] += model.score_w_[k] * sc[i];
      }
      const auto& we = model.expert_w_[es[i]];
      for (int k = 0; k < 4; ++k) z[k] += we[k];
      auto p = softmax4(z);
      p[ys[i]] -= 1.0;
      for (int k = 0; k < 4; ++k) p[k] *= weight[i];
      for (std::size_t c = 0; c < d; ++c) {
        auto& g = g_feat[c];
        for (int k = 0; k < 4; ++k) g[k] += p[k] * x[c];
      }
      if (config.include_score) {
        for (int k = 0; k < 4; ++k) g_score[k] += p[k] * sc[i];
      }
      auto& ge = g_exp[es[i]];
      for (int k = 0; k < 4; ++k) {
        ge[k] += p[k];
        g_bias[k] += p[k];
      }
    }
    const double step = config.learning_rate / weight_sum;
    for (std::size_t c = 0; c < d; ++c) {
      for (int k = 0; k < 4; ++k) {
        model.feat_w_[c][k] -=
            step * g_feat[c][k] + config.learning_rate * config.l2 * model.feat_w_[c][k];
      }
    }
    if (config.include_score) {
      for (int k = 0; k < 4; ++k) {
        model.score_w_[k] -=
            step * g_score[k] + config.learning_rate * config.l2 * model.score_w_[k];
      }
    }
    for (int j = 0; j < n_experts; ++j) {
      for (int k = 0; k < 4; ++k) {
        model.expert_w_[j][k] -=
            step * g_exp[j][k] + config.learning_rate * config.l2 * model.expert_w_[j][k];
      }
    }
    for (int k = 0; k < 4; ++k) model.bias_[k] -= step * g_bias[k];  // bias unregularized
  }
  return model;
}

std::pair<double, double> LearnedLossModel::fp_fn(const Instance& inst,
                                                  int expert_index) const {
  const auto p = model_.predict_proba(inst.features, inst.score, expert_index);
  return {p[static_cast<int>(Outcome::fp)], p[static_cast<int>(Outcome::fn)]};
}

void OutcomeModel::save(const std::string& path,
                        const std::string& config_hash) const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["stage_version"] = 1;
  j["hyper"] = {{"iterations", config_.iterations},
                {"learning_rate", config_.learning_rate},
                {"l2", config_.l2},
                {"include_score", config_.include_score},
                {"class_weighting", config_.class_weighting},
                {"seed", config_.seed}};
  j["scaler"] = {{"mean", scaler_.mean}, {"stddev", scaler_.stddev}};
  j["score_mean"] = score_mean_;
  j["score_stddev"] = score_stddev_;
  j["bias"] = bias_;
  j["score_w"] = score_w_;
  auto& fw = j["feat_w"] = nlohmann::json::array();
  for (const auto& w : feat_w_) fw.push_back(w);
  auto& ew = j["expert_w"] = nlohmann::json::array();
  for (const auto& w : expert_w_) ew.push_back(w);
  j["expert_counts"] = expert_counts_;
  std::ofstream out(path);
  if (!out) throw config_error("cannot write outcome model: " + path);
  out << j.dump(2) << "\n";
}

OutcomeModel OutcomeModel::load(const std::string& path,
                                std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw staleness_error("outcome model file missing: " + path);
  nlohmann::json j;
  in >> j;
  OutcomeModel m;
  if (config_hash) *config_hash = j.value("config_hash", "");
  const auto& h = j.at("hyper");
  m.config_.iterations = h.at("iterations").get<int>();
  m.config_.learning_rate = h.at("learning_rate").get<double>();
  m.config_.l2 = h.at("l2").get<double>();
  m.config_.include_score = h.at("include_score").get<bool>();
  m.config_.class_weighting = h.at("class_weighting").get<bool>();
  m.config_.seed = h.at("seed").get<std::uint64_t>();
  m.scaler_.mean = j.at("scaler").at("mean").get<std::vector<double>>();
  m.scaler_.stddev = j.at("scaler").at("stddev").get<std::vector<double>>();
  m.score_mean_ = j.at("score_mean").get<double>();
  m.score_stddev_ = j.at("score_stddev").get<double>();
  m.bias_ = j.at("bias").get<std::array<double, 4>>();
  m.score_w_ = j.at("score_w").get<std::array<double, 4>>();
  for (const auto& w : j.at("feat_w")) m.feat_w_.push_back(w.get<std::array<double, 4>>());
  for (const auto& w : j.at("expert_w")) m.expert_w_.push_back(w.get<std::array<double, 4>>());
  m.expert_counts_ = j.at("expert_counts").get<std::vector<long>>();
  return m;
}

}  // namespace defersim
