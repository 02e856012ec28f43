#include "defersim/experts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "defersim/errors.hpp"
#include "defersim/scorer.hpp"

namespace defersim {

const char* to_string(ExpertGroup g) {
  switch (g) {
    case ExpertGroup::standard: return "standard";
    case ExpertGroup::unfair: return "unfair";
    case ExpertGroup::agreeing: return "agreeing";
    case ExpertGroup::sparse: return "sparse";
  }
  return "standard";
}

ExpertGroup expert_group_from_string(const std::string& s) {
  if (s == "standard") return ExpertGroup::standard;
  if (s == "unfair") return ExpertGroup::unfair;
  if (s == "agreeing") return ExpertGroup::agreeing;
  if (s == "sparse") return ExpertGroup::sparse;
  throw config_error("unknown expert group: " + s);
}

std::vector<int> ExpertTeam::members_of(ExpertGroup g) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    if (experts[i].group == g) out.push_back(static_cast<int>(i));
  }
  return out;
}

int ExpertTeam::index_of(const std::string& expert_id) const {
  for (std::size_t i = 0; i < experts.size(); ++i) {
    if (experts[i].id == expert_id) return static_cast<int>(i);
  }
  return -1;
}

double transform_score(double m, double t) {
  if (t <= 0.0 || t >= 1.0)
    throw config_error("transform_score: t must lie in (0,1)");
  if (m <= t) return (m - t) / (2.0 * t);
  return (m - t) / (2.0 * (1.0 - t));
}

double error_projection(const ExpertParams& e, std::span<const double> x_std,
                        double m, double t) {
  if (x_std.size() != e.w.size())
    throw config_error("error_projection: feature dimension mismatch");
  double dot = 0.0, norm_sq = e.w_m * e.w_m;
  for (std::size_t c = 0; c < e.w.size(); ++c) {
    dot += e.w[c] * x_std[c];
    norm_sq += e.w[c] * e.w[c];
  }
  if (norm_sq == 0.0) return 0.0;
  dot += e.w_m * transform_score(m, t);
  return dot / std::sqrt(norm_sq);
}

ErrorProbabilities error_probabilities(const ExpertParams& e,
                                       std::span<const double> x_std, double m,
                                       double t) {
  const double z = error_projection(e, x_std, m, t);
  return {sigmoid(e.beta0 - e.alpha * z), sigmoid(e.beta1 + e.alpha * z)};
}

int sample_prediction(const ExpertParams& e, const Instance& inst,
                      const FeatureScaler& scaler, double t, Rng& rng) {
  const auto x = scaler.apply(inst.features);
  const auto p = error_probabilities(e, x, inst.score, t);
  const double u = rng.uniform01();
  if (inst.label == 0) return u < p.p_fp ? 1 : 0;
  return u < p.p_fn ? 0 : 1;
}

namespace {

// z values are independent of the intercepts, so calibration caches them.
std::vector<double> projections(const ExpertParams& e, const Dataset& data,
                                const std::vector<int>& sample,
                                const FeatureScaler& scaler, double t) {
  std::vector<double> z;
  z.reserve(sample.size());
  for (int p : sample) {
    const auto x = scaler.apply(data.instances[p].features);
    z.push_back(error_projection(e, x, data.instances[p].score, t));
  }
  return z;
}

double mean_rate(const std::vector<double>& z, const std::vector<int>& labels,
                 int on_label, double intercept, double alpha, double sign) {
  double sum = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (labels[i] != on_label) continue;
    sum += sigmoid(intercept + sign * alpha * z[i]);
    ++n;
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

// Monotone-increasing f(intercept); solve f = target on [-30, 30].
double bisect_intercept(const std::vector<double>& z,
                        const std::vector<int>& labels, int on_label,
                        double alpha, double sign, double target, double tol,
                        const std::string& what) {
  double lo = -30.0, hi = 30.0;
  const double f_lo = mean_rate(z, labels, on_label, lo, alpha, sign);
  const double f_hi = mean_rate(z, labels, on_label, hi, alpha, sign);
  if (f_lo > target || f_hi < target) {
    throw calibration_error("cannot bracket " + what + " target " +
                            std::to_string(target) + " within [-30, 30]");
  }
  double mid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double f = mean_rate(z, labels, on_label, mid, alpha, sign);
    if (std::abs(f - target) <= 0.25 * tol) return mid;
    if (f < target) lo = mid; else hi = mid;
    if (hi - lo < 1e-14) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

MeanErrorRates mean_error_rates(const ExpertParams& e, const Dataset& data,
                                const std::vector<int>& sample,
                                const FeatureScaler& scaler, double t) {
  std::vector<int> labels;
  labels.reserve(sample.size());
  for (int p : sample) labels.push_back(data.instances[p].label);
  const auto z = projections(e, data, sample, scaler, t);
  return {mean_rate(z, labels, 0, e.beta0, e.alpha, -1.0),
          mean_rate(z, labels, 1, e.beta1, e.alpha, +1.0)};
}

ExpertParams calibrate_intercepts(const ExpertParams& e, const Dataset& data,
                                  const std::vector<int>& sample,
                                  const FeatureScaler& scaler, double t,
                                  double target_fpr, double target_fnr,
                                  double tol) {
  if (target_fpr <= 0.0 || target_fpr >= 1.0 || target_fnr <= 0.0 ||
      target_fnr >= 1.0) {
    throw config_error("calibrate_intercepts: targets must lie in (0,1)");
  }
  long n_pos = 0, n_neg = 0;
  std::vector<int> labels;
  labels.reserve(sample.size());
  for (int p : sample) {
    labels.push_back(data.instances[p].label);
    (data.instances[p].label == 1 ? n_pos : n_neg)++;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw degenerate_data_error(
        "calibrate_intercepts: calibration sample needs both classes");
  }
  const auto z = projections(e, data, sample, scaler, t);
  ExpertParams out = e;
  out.beta0 = bisect_intercept(z, labels, 0, e.alpha, -1.0, target_fpr, tol,
                               "FPR (" + e.id + ")");
  out.beta1 = bisect_intercept(z, labels, 1, e.alpha, +1.0, target_fnr, tol,
                               "FNR (" + e.id + ")");
  out.target_fpr = target_fpr;
  out.target_fnr = target_fnr;
  return out;
}

namespace {

// Bernoulli mask with expected fraction `prob` nonzero; redrawn until at
// least one survives so the projection stays defined.
std::vector<int> bernoulli_mask(int d, double prob, Rng& rng) {
  std::vector<int> mask(d, 0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    int nonzero = 0;
    for (int c = 0; c < d; ++c) {
      mask[c] = rng.uniform01() < prob ? 1 : 0;
      nonzero += mask[c];
    }
    if (nonzero > 0) return mask;
  }
  mask.assign(d, 0);
  mask[static_cast<int>(rng.below(d))] = 1;
  return mask;
}

std::vector<int> choose_indices(int d, int k, Rng& rng) {
  std::vector<int> idx(d);
  for (int i = 0; i < d; ++i) idx[i] = i;
  // partial Fisher-Yates: first k entries are the sample
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(d - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

ExpertParams draw_expert(const GroupConfig& gc, ExpertGroup group, int index,
                         int d, int protected_index, std::uint64_t team_seed) {
  Rng rng(derive_seed(team_seed, "expert", static_cast<std::uint64_t>(group),
                      static_cast<std::uint64_t>(index)));
  ExpertParams e;
  char id[64];
  std::snprintf(id, sizeof(id), "%s_%02d", to_string(group), index);
  e.id = id;
  e.group = group;
  e.w.assign(d, 0.0);

  const double default_sparsity = std::min(1.0, 12.0 / static_cast<double>(d));
  if (group == ExpertGroup::sparse) {
    // hard cap: at most ceil(0.25 d) nonzero weights
    const double frac = gc.sparsity > 0.0 ? gc.sparsity : 0.25;
    const int cap = std::max(1, static_cast<int>(std::ceil(frac * d)));
    const int k = 1 + static_cast<int>(rng.below(cap));
    for (int c : choose_indices(d, k, rng)) e.w[c] = rng.normal();
  } else {
    const double prob = gc.sparsity > 0.0 ? gc.sparsity : default_sparsity;
    const auto mask = bernoulli_mask(d, prob, rng);
    for (int c = 0; c < d; ++c) {
      if (mask[c]) e.w[c] = rng.normal();
    }
  }

  if (group == ExpertGroup::agreeing) {
    // Score term carries at least half the squared norm. Negative sign:
    // p_fp rises and p_fn falls with the score, i.e. the expert follows
    // the model.
    double norm = 0.0;
    for (double v : e.w) norm += v * v;
    e.w_m = -(1.0 + rng.uniform01()) * std::sqrt(norm);
  } else {
    e.w_m = rng.normal(gc.w_m_mean, gc.w_m_stddev);
  }

  if (group == ExpertGroup::unfair) {
    // +boost on the protected feature inside the false-positive logit;
    // the FP logit carries -alpha*z, so the shift is negative in w-space.
    e.w[protected_index] -= gc.protected_boost;
  }

  e.alpha = rng.uniform(gc.alpha_lo, gc.alpha_hi);
  e.target_fpr = rng.uniform(gc.target_fpr_lo, gc.target_fpr_hi);
  e.target_fnr = rng.uniform(gc.target_fnr_lo, gc.target_fnr_hi);
  return e;
}

}  // namespace

ExpertTeam generate_team(const TeamConfig& config, const Dataset& data,
                         const std::vector<int>& calibration_sample,
                         int protected_index, double threshold) {
  const int d = static_cast<int>(data.dim());
  if (protected_index < 0 || protected_index >= d)
    throw config_error("generate_team: protected_index out of range");

  ExpertTeam team;
  team.threshold = threshold;
  team.scaler.fit(data, calibration_sample);

  const std::uint64_t team_seed = derive_seed(config.seed, "team");
  struct GroupSpec {
    const GroupConfig* gc;
    ExpertGroup g;
  };
  const GroupSpec groups[] = {{&config.standard, ExpertGroup::standard},
                              {&config.unfair, ExpertGroup::unfair},
                              {&config.agreeing, ExpertGroup::agreeing},
                              {&config.sparse, ExpertGroup::sparse}};
  for (const auto& spec : groups) {
    if (spec.gc->count < 0)
      throw config_error("generate_team: negative group count");
    for (int k = 0; k < spec.gc->count; ++k) {
      ExpertParams e =
          draw_expert(*spec.gc, spec.g, k, d, protected_index, team_seed);
      try {
        e = calibrate_intercepts(e, data, calibration_sample, team.scaler,
                                 threshold, e.target_fpr, e.target_fnr,
                                 config.calibration_tol);
      } catch (const calibration_error& err) {
        throw calibration_error("expert " + e.id + ": " + err.what());
      }
      team.experts.push_back(std::move(e));
    }
  }
  return team;
}

PredictionLog full_prediction_table(const ExpertTeam& team, const Dataset& data,
                                    const std::vector<int>& positions,
                                    std::uint64_t seed) {
  PredictionLog log;
  log.entries.reserve(positions.size() * team.experts.size());
  for (int p : positions) {
    const Instance& inst = data.instances[p];
    const auto x = team.scaler.apply(inst.features);
    for (std::size_t j = 0; j < team.experts.size(); ++j) {
      const auto probs =
          error_probabilities(team.experts[j], x, inst.score, team.threshold);
      Rng pair_rng(derive_seed(seed, "pred",
                               static_cast<std::uint64_t>(inst.id), j));
      const double u = pair_rng.uniform01();
      int pred;
      if (inst.label == 0) {
        pred = u < probs.p_fp ? 1 : 0;
      } else {
        pred = u < probs.p_fn ? 0 : 1;
      }
      log.entries.push_back({inst.id, static_cast<int>(j), pred});
    }
  }
  return log;
}

PredictionTable PredictionTable::build(const PredictionLog& log, int n_experts) {
  PredictionTable table;
  table.n_experts = n_experts;
  for (const auto& e : log.entries) {
    auto [it, inserted] =
        table.row_of_id.emplace(e.instance_id, static_cast<int>(table.preds.size()));
    if (inserted) table.preds.emplace_back(n_experts, -1);
    table.preds[it->second][e.expert_index] = static_cast<signed char>(e.prediction);
  }
  return table;
}

int PredictionTable::lookup(std::int64_t instance_id, int expert_index) const {
  const auto it = row_of_id.find(instance_id);
  if (it == row_of_id.end()) return -1;
  if (expert_index < 0 || expert_index >= n_experts) return -1;
  return preds[it->second][expert_index];
}

void save_prediction_log(const PredictionLog& log, const ExpertTeam& team,
                         const std::string& path,
                         const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write prediction log: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "instance_id,expert_id,prediction\n";
  for (const auto& e : log.entries) {
    out << e.instance_id << ',' << team.experts[e.expert_index].id << ','
        << e.prediction << "\n";
  }
}

PredictionLog load_prediction_log(const std::string& path,
                                  const ExpertTeam& team,
                                  std::string* header_comment) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open prediction log: " + path);
  PredictionLog log;
  std::string line;
  bool header_seen = false;
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header_comment) *header_comment = line.substr(line.size() > 1 ? 2 : 1);
      continue;
    }
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    ++row;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw parse_error("prediction log row " + std::to_string(row) +
                        ": expected 3 columns");
    const std::int64_t id = std::stoll(line.substr(0, c1));
    const std::string expert_id = line.substr(c1 + 1, c2 - c1 - 1);
    const int pred = std::stoi(line.substr(c2 + 1));
    const int j = team.index_of(expert_id);
    if (j < 0)
      throw integrity_error("prediction log references unknown expert '" +
                            expert_id + "'");
    if (pred != 0 && pred != 1)
      throw parse_error("prediction log row " + std::to_string(row) +
                        ": prediction must be 0 or 1");
    log.entries.push_back({id, j, pred});
  }
  return log;
}

void save_team(const ExpertTeam& team, const std::string& path,
               const std::string& config_hash) {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["stage_version"] = 1;
  j["threshold"] = team.threshold;
  j["scaler"] = {{"mean", team.scaler.mean}, {"stddev", team.scaler.stddev}};
  auto& arr = j["experts"] = nlohmann::json::array();
  for (const auto& e : team.experts) {
    arr.push_back({{"id", e.id},
                   {"group", to_string(e.group)},
                   {"beta0", e.beta0},
                   {"beta1", e.beta1},
                   {"alpha", e.alpha},
                   {"w", e.w},
                   {"w_m", e.w_m},
                   {"target_fpr", e.target_fpr},
                   {"target_fnr", e.target_fnr}});
  }
  std::ofstream out(path);
  if (!out) throw config_error("cannot write team file: " + path);
  out << j.dump(2) << "\n";
}

ExpertTeam load_team(const std::string& path, std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw staleness_error("team file missing: " + path);
  nlohmann::json j;
  in >> j;
  ExpertTeam team;
  if (config_hash) *config_hash = j.value("config_hash", "");
  team.threshold = j.at("threshold").get<double>();
  team.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
  team.scaler.stddev = j.at("scaler").at("stddev").get<std::vector<double>>();
  for (const auto& je : j.at("experts")) {
    ExpertParams e;
    e.id = je.at("id").get<std::string>();
    e.group = expert_group_from_string(je.at("group").get<std::string>());
    e.beta0 = je.at("beta0").get<double>();
    e.beta1 = je.at("beta1").get<double>();
    e.alpha = je.at("alpha").get<double>();
    e.w = je.at("w").get<std::vector<double>>();
    e.w_m = je.at("w_m").get<double>();
    e.target_fpr = je.at("target_fpr").get<double>();
    e.target_fnr = je.at("target_fnr").get<double>();
    team.experts.push_back(std::move(e));
  }
  return team;
}

}  // namespace defersim
