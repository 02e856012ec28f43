#include "defersim/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "defersim/errors.hpp"
#include "defersim/eval.hpp"
#include "defersim/rng.hpp"

namespace defersim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kStageVersion = 1;

int stage_rank(const std::string& stage) {
  if (stage == "gen-experts") return 0;
  if (stage == "gen-scenarios") return 1;
  if (stage == "run-policies") return 2;
  if (stage == "report") return 3;
  return 99;
}

std::string hash_comment(const std::string& hash) {
  return "config_hash=" + hash + " stage_version=" + std::to_string(kStageVersion);
}

std::string hash_from_comment(const std::string& comment) {
  const std::string key = "config_hash=";
  const auto pos = comment.find(key);
  if (pos == std::string::npos) return "";
  const auto start = pos + key.size();
  const auto end = comment.find(' ', start);
  return comment.substr(start, end == std::string::npos ? std::string::npos
                                                        : end - start);
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 0)
    workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed.load()) {
        const int i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

struct Pipeline::Loaded {
  Dataset data;
  SplitDataset split;
  LogisticScorer scorer;
  bool external_scores = false;
  double threshold = 0.5;
  double lambda = 1.0;
  ExpertTeam team;
  bool has_team = false;
};

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
  hash_ = config_hash(config_);
}

std::string Pipeline::path(const std::string& name) const {
  return (fs::path(config_.out_dir) / name).string();
}

void Pipeline::ensure_out_dir() const {
  fs::create_directories(config_.out_dir);
  fs::create_directories(path("scenarios"));
  fs::create_directories(path("assignments"));
}

void Pipeline::mark_incomplete(const std::string& stage) const {
  std::ofstream out(path("INCOMPLETE"));
  out << stage << "\n";
}

void Pipeline::clear_incomplete() const {
  std::error_code ec;
  fs::remove(path("INCOMPLETE"), ec);
}

void Pipeline::check_stage_allowed(const std::string& stage) const {
  std::ifstream in(path("INCOMPLETE"));
  if (!in) return;
  std::string failed_stage;
  std::getline(in, failed_stage);
  if (stage_rank(failed_stage) >= stage_rank(stage)) return;
  throw staleness_error("artifact directory holds incomplete output of stage '" +
                        failed_stage + "'; rerun that stage before '" + stage +
                        "'");
}

void Pipeline::require_hash(const std::string& artifact,
                            const std::string& found) const {
  if (found != hash_) {
    throw staleness_error("artifact '" + artifact + "' was built for config hash " +
                          (found.empty() ? std::string("<none>") : found) +
                          " but the current config hashes to " + hash_);
  }
}

void Pipeline::validate() const {
  validate_run_config(config_);
  // split months must exist in the dataset; probe cheaply
  if (config_.dataset.synthetic) {
    std::set<int> months;
    for (int m = 1; m <= config_.dataset.synth.months; ++m) months.insert(m);
    auto check = [&](const std::set<int>& s, const char* name) {
      for (int m : s) {
        if (!months.count(m))
          throw config_error(std::string("split set '") + name +
                             "' references month " + std::to_string(m) +
                             " outside the synthetic range");
      }
    };
    check(config_.split.classifier_train, "classifier_train");
    check(config_.split.classifier_val, "classifier_val");
    check(config_.split.deferral_train, "deferral_train");
    check(config_.split.deferral_val, "deferral_val");
    check(config_.split.test, "test");
  }
}

Pipeline::Loaded Pipeline::load_context(bool from_artifacts) {
  Loaded ctx;
  if (config_.dataset.synthetic) {
    SyntheticConfig synth = config_.dataset.synth;
    synth.seed = derive_seed(config_.master_seed, "dataset");
    ctx.data = generate_synthetic_dataset(synth);
  } else {
    ctx.data = load_dataset(config_.dataset.path, config_.dataset.schema);
  }
  ctx.split = make_temporal_splits(ctx.data, config_.split);
  ctx.external_scores =
      !config_.dataset.synthetic && !config_.dataset.schema.score.empty();

  if (from_artifacts) {
    // scorer.json
    std::ifstream in(path("scorer.json"));
    if (!in) throw staleness_error("scorer file missing: " + path("scorer.json"));
    json j;
    in >> j;
    require_hash("scorer.json", j.value("config_hash", ""));
    ctx.threshold = j.at("threshold").get<double>();
    ctx.lambda = j.at("lambda").get<double>();
    if (!j.at("external_scores").get<bool>()) {
      ctx.scorer.weights = j.at("weights").get<std::vector<double>>();
      ctx.scorer.bias = j.at("bias").get<double>();
      ctx.scorer.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
      ctx.scorer.scaler.stddev =
          j.at("scaler").at("stddev").get<std::vector<double>>();
      ctx.scorer.attach_scores(ctx.data);
    }
    std::string team_hash;
    ctx.team = load_team(path("team.json"), &team_hash);
    require_hash("team.json", team_hash);
    ctx.has_team = true;
  } else {
    if (!ctx.external_scores) {
      ScorerConfig sc = config_.scorer;
      sc.seed = derive_seed(config_.master_seed, "scorer");
      ctx.scorer = fit_reference_scorer(ctx.data, ctx.split.classifier_train,
                                        ctx.split.classifier_val, sc);
      ctx.scorer.attach_scores(ctx.data);
    }
    std::vector<double> val_scores;
    std::vector<int> val_labels;
    val_scores.reserve(ctx.split.classifier_val.size());
    for (int p : ctx.split.classifier_val) {
      val_scores.push_back(ctx.data.instances[p].score);
      val_labels.push_back(ctx.data.instances[p].label);
    }
    ctx.threshold = select_threshold(val_scores, val_labels, config_.target_fpr);
    ctx.lambda = config_.lambda.from_threshold ? lambda_from_threshold(ctx.threshold)
                                               : config_.lambda.fixed;
  }
  return ctx;
}

void Pipeline::gen_experts() {
  validate();
  ensure_out_dir();
  check_stage_allowed("gen-experts");
  mark_incomplete("gen-experts");

  std::cerr << "[gen-experts] dataset + scorer + team -> " << config_.out_dir
            << "\n";
  Loaded ctx = load_context(false);

  {
    std::ofstream out(path("config_echo.json"));
    out << canonical_config_json(config_) << "\n";
  }
  if (config_.dataset.synthetic) {
    Schema schema{.label = "fraud_bool", .month = "month", .group = "age_group", .score = "", .delimiter = ','};
    save_dataset(ctx.data, path("dataset.csv"), schema, hash_comment(hash_));
  }

  json j;
  j["config_hash"] = hash_;
  j["stage_version"] = kStageVersion;
  j["external_scores"] = ctx.external_scores;
  j["threshold"] = ctx.threshold;
  j["lambda"] = ctx.lambda;
  j["target_fpr"] = config_.target_fpr;
  if (!ctx.external_scores) {
    j["weights"] = ctx.scorer.weights;
    j["bias"] = ctx.scorer.bias;
    j["scaler"] = {{"mean", ctx.scorer.scaler.mean},
                   {"stddev", ctx.scorer.scaler.stddev}};
  }
  {
    std::ofstream out(path("scorer.json"));
    out << j.dump(2) << "\n";
  }

  const int protected_index = ctx.data.feature_index(config_.protected_feature);
  if (protected_index < 0) {
    throw config_error("protected feature '" + config_.protected_feature +
                       "' is not a feature column");
  }
  TeamConfig team_cfg = config_.team;
  team_cfg.seed = derive_seed(config_.master_seed, "team-gen");
  ExpertTeam team = generate_team(team_cfg, ctx.data, ctx.split.deferral_train,
                                  protected_index, ctx.threshold);
  save_team(team, path("team.json"), hash_);
  clear_incomplete();
}

void Pipeline::gen_scenarios() {
  ensure_out_dir();
  check_stage_allowed("gen-scenarios");
  Loaded ctx = load_context(true);
  mark_incomplete("gen-scenarios");

  const auto specs = enumerate_grid(config_.grid);
  const int n_test = static_cast<int>(ctx.split.test.size());
  std::cerr << "[gen-scenarios] " << specs.size() << " scenarios over "
            << n_test << " test instances\n";

  json index;
  index["config_hash"] = hash_;
  index["stage_version"] = kStageVersion;
  auto& arr = index["scenarios"] = json::array();
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& spec = specs[s];
    const CapacityScenario scenario = build_scenario(n_test, ctx.team, spec.params);
    char file[64];
    std::snprintf(file, sizeof(file), "scenarios/scenario_%03zu.csv", s);
    save_capacity_matrix(scenario, ctx.team, path(file),
                         hash_comment(hash_) + " " + spec.label);
    arr.push_back({{"label", spec.label},
                   {"file", file},
                   {"pool", to_string(spec.params.pool)},
                   {"batch_size", spec.params.batch_size},
                   {"deferral_rate", spec.params.deferral_rate},
                   {"absence_rate", spec.params.absence_rate},
                   {"distribution", to_string(spec.params.distribution)},
                   {"grid_seed", spec.seed},
                   {"batch_seed", spec.params.batch_seed},
                   {"absence_seed", spec.params.absence_seed},
                   {"capacity_seed", spec.params.capacity_seed}});
  }
  {
    std::ofstream out(path("scenarios/index.json"));
    out << index.dump(2) << "\n";
  }
  clear_incomplete();
}

void Pipeline::run_policies() {
  ensure_out_dir();
  check_stage_allowed("run-policies");
  Loaded ctx = load_context(true);

  std::vector<ScenarioSpec> specs;
  {
    std::ifstream in(path("scenarios/index.json"));
    if (!in)
      throw staleness_error("scenario index missing: " + path("scenarios/index.json"));
    json index;
    in >> index;
    require_hash("scenarios/index.json", index.value("config_hash", ""));
    for (const auto& js : index.at("scenarios")) {
      ScenarioSpec spec;
      spec.label = js.at("label").get<std::string>();
      spec.params.pool = expert_pool_from_string(js.at("pool").get<std::string>());
      spec.params.batch_size = js.at("batch_size").get<int>();
      spec.params.deferral_rate = js.at("deferral_rate").get<double>();
      spec.params.absence_rate = js.at("absence_rate").get<double>();
      spec.params.distribution =
          capacity_distribution_from_string(js.at("distribution").get<std::string>());
      spec.seed = js.at("grid_seed").get<std::uint64_t>();
      spec.params.batch_seed = js.at("batch_seed").get<std::uint64_t>();
      spec.params.absence_seed = js.at("absence_seed").get<std::uint64_t>();
      spec.params.capacity_seed = js.at("capacity_seed").get<std::uint64_t>();
      specs.push_back(std::move(spec));
    }
  }
  mark_incomplete("run-policies");
  std::cerr << "[run-policies] " << specs.size() << " scenarios x "
            << config_.policies.size() << " policies\n";

  // Alert-review simulation over the deferral-training months produces the
  // single-prediction-per-instance log the outcome model trains on.
  const auto train_table_log = full_prediction_table(
      ctx.team, ctx.data, ctx.split.deferral_train,
      derive_seed(config_.master_seed, "train-pred"));
  const auto train_table =
      PredictionTable::build(train_table_log, static_cast<int>(ctx.team.experts.size()));

  CapacityParams train_params;
  train_params.batch_size = config_.training_batch_size;
  train_params.deferral_rate = config_.training_deferral_rate;
  train_params.distribution = CapacityDistribution::homogeneous;
  train_params.absence_rate = 0.0;
  train_params.pool = ExpertPool::all;
  train_params.batch_seed = derive_seed(config_.master_seed, "trainlog-batch");
  train_params.absence_seed = derive_seed(config_.master_seed, "trainlog-absence");
  train_params.capacity_seed = derive_seed(config_.master_seed, "trainlog-capacity");
  const CapacityScenario train_scenario = build_scenario(
      static_cast<int>(ctx.split.deferral_train.size()), ctx.team, train_params);

  PolicyRunConfig train_run;
  train_run.auto_decline_rate = config_.auto_decline_rate;
  train_run.lambda = ctx.lambda;
  train_run.seed = derive_seed(config_.master_seed, "trainlog-assign");
  const Assignment train_assignment =
      run_policy(Policy::rel, ctx.data, ctx.split.deferral_train, train_scenario,
                 train_table, nullptr, train_run);

  PredictionLog train_log;
  for (const auto& row : train_assignment.rows) {
    if (row.decision_maker >= 0) {
      train_log.entries.push_back(
          {row.instance_id, row.decision_maker, row.final_decision});
    }
  }
  save_prediction_log(train_log, ctx.team, path("train_log.csv"),
                      hash_comment(hash_));

  OutcomeModelConfig om_cfg = config_.outcome_model;
  om_cfg.seed = derive_seed(config_.master_seed, "outcome-model");
  const auto examples = build_training_set(train_log, ctx.data);
  const OutcomeModel outcome_model = fit_outcome_model(
      examples, static_cast<int>(ctx.team.experts.size()), om_cfg);
  outcome_model.save(path("outcome_model.json"), hash_);

  const auto test_log = full_prediction_table(
      ctx.team, ctx.data, ctx.split.test,
      derive_seed(config_.master_seed, "test-pred"));
  save_prediction_log(test_log, ctx.team, path("test_predictions.csv"),
                      hash_comment(hash_));
  const auto test_table =
      PredictionTable::build(test_log, static_cast<int>(ctx.team.experts.size()));

  const LearnedLossModel loss_model(outcome_model);
  const int n_policies = static_cast<int>(config_.policies.size());
  std::vector<ReportRow> rows(1 + specs.size() * n_policies);

  {
    const auto model_rep =
        evaluate_model_only(ctx.data, ctx.split.test, ctx.threshold, ctx.lambda);
    ReportRow& r = rows[0];
    r.policy = "model_only";
    r.n_fp = model_rep.counts.fp;
    r.n_fn = model_rep.counts.fn;
    r.n_tp = model_rep.counts.tp;
    r.n_tn = model_rep.counts.tn;
    r.loss = model_rep.loss;
    r.fpr = model_rep.fpr;
    r.tpr = model_rep.tpr;
    r.pe = model_rep.pe;
  }

  const auto run_one = [&](int s) {
    const auto& spec = specs[s];
    const CapacityScenario scenario = build_scenario(
        static_cast<int>(ctx.split.test.size()), ctx.team, spec.params);
    for (int p = 0; p < n_policies; ++p) {
      const Policy policy = config_.policies[p];
      PolicyRunConfig run_cfg;
      run_cfg.auto_decline_rate = config_.auto_decline_rate;
      run_cfg.lambda = ctx.lambda;
      run_cfg.seed = derive_seed(config_.master_seed, "policy", s, p);
      const Assignment assignment =
          run_policy(policy, ctx.data, ctx.split.test, scenario, test_table,
                     policy == Policy::rel ? nullptr : &loss_model, run_cfg);
      char file[96];
      std::snprintf(file, sizeof(file), "assignments/assign_%03d_%s.csv", s,
                    to_string(policy));
      save_assignment(assignment, ctx.team, path(file),
                      hash_comment(hash_) + " " + spec.label);
      const auto rep = evaluate_assignment(assignment, ctx.data, ctx.lambda);
      ReportRow& r = rows[1 + static_cast<std::size_t>(s) * n_policies + p];
      r.pool = spec.params.pool;
      r.batch_size = spec.params.batch_size;
      r.deferral_rate = spec.params.deferral_rate;
      r.absence_rate = spec.params.absence_rate;
      r.distribution = spec.params.distribution;
      r.seed = spec.seed;
      r.policy = to_string(policy);
      r.n_fp = rep.counts.fp;
      r.n_fn = rep.counts.fn;
      r.n_tp = rep.counts.tp;
      r.n_tn = rep.counts.tn;
      r.loss = rep.loss;
      r.fpr = rep.fpr;
      r.tpr = rep.tpr;
      r.pe = rep.pe;
    }
  };
  parallel_for(static_cast<int>(specs.size()), config_.workers, run_one);

  save_reports(rows, path("reports.csv"), hash_comment(hash_));
  std::cerr << "[run-policies] wrote " << rows.size() << " report rows\n";
  clear_incomplete();
}

void Pipeline::report() {
  check_stage_allowed("report");
  std::string comment;
  const auto rows = load_reports(path("reports.csv"), &comment);
  require_hash("reports.csv", hash_from_comment(comment));
  mark_incomplete("report");
  const auto summary = summarize_reports(rows);
  save_summary(summary, path("summary.csv"), hash_comment(hash_));
  std::cerr << "[report] " << summary.size() << " aggregated rows -> "
            << path("summary.csv") << "\n";
  clear_incomplete();
}

void Pipeline::run_all() {
  gen_experts();
  gen_scenarios();
  run_policies();
  report();
}

int run_pipeline(const RunConfig& config) {
  try {
    Pipeline pipeline(config);
    pipeline.run_all();
    return 0;
  } catch (const config_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const schema_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace defersim
