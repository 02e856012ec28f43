#include "defersim/config.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "defersim/errors.hpp"
#include "defersim/rng.hpp"

namespace defersim {

namespace {

using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::set<int> month_set(const json& j) {
  std::set<int> out;
  for (const auto& v : j) out.insert(v.get<int>());
  return out;
}

GroupConfig parse_group(const json& j, GroupConfig base) {
  maybe(j, "count", base.count);
  maybe(j, "target_fpr_lo", base.target_fpr_lo);
  maybe(j, "target_fpr_hi", base.target_fpr_hi);
  maybe(j, "target_fnr_lo", base.target_fnr_lo);
  maybe(j, "target_fnr_hi", base.target_fnr_hi);
  maybe(j, "alpha_lo", base.alpha_lo);
  maybe(j, "alpha_hi", base.alpha_hi);
  maybe(j, "sparsity", base.sparsity);
  maybe(j, "w_m_mean", base.w_m_mean);
  maybe(j, "w_m_stddev", base.w_m_stddev);
  maybe(j, "protected_boost", base.protected_boost);
  return base;
}

json group_to_json(const GroupConfig& g) {
  return {{"count", g.count},
          {"target_fpr_lo", g.target_fpr_lo},
          {"target_fpr_hi", g.target_fpr_hi},
          {"target_fnr_lo", g.target_fnr_lo},
          {"target_fnr_hi", g.target_fnr_hi},
          {"alpha_lo", g.alpha_lo},
          {"alpha_hi", g.alpha_hi},
          {"sparsity", g.sparsity},
          {"w_m_mean", g.w_m_mean},
          {"w_m_stddev", g.w_m_stddev},
          {"protected_boost", g.protected_boost}};
}

json months_to_json(const std::set<int>& s) { return json(s); }

}  // namespace

RunConfig run_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  if (j.contains("dataset")) {
    const auto& jd = j.at("dataset");
    if (jd.contains("path")) {
      cfg.dataset.synthetic = false;
      cfg.dataset.path = jd.at("path").get<std::string>();
      if (jd.contains("schema")) {
        const auto& js = jd.at("schema");
        maybe(js, "label", cfg.dataset.schema.label);
        maybe(js, "month", cfg.dataset.schema.month);
        maybe(js, "group", cfg.dataset.schema.group);
        maybe(js, "score", cfg.dataset.schema.score);
        std::string delim;
        maybe(js, "delimiter", delim);
        if (!delim.empty()) cfg.dataset.schema.delimiter = delim[0];
      }
    } else if (jd.contains("synthetic")) {
      cfg.dataset.synthetic = true;
      const auto& js = jd.at("synthetic");
      maybe(js, "rows", cfg.dataset.synth.rows);
      maybe(js, "features", cfg.dataset.synth.features);
      maybe(js, "months", cfg.dataset.synth.months);
      maybe(js, "protected_index", cfg.dataset.synth.protected_index);
      maybe(js, "protected_cut", cfg.dataset.synth.protected_cut);
      maybe(js, "base_logit", cfg.dataset.synth.base_logit);
      maybe(js, "signal_scale", cfg.dataset.synth.signal_scale);
    } else {
      throw config_error("dataset block needs either 'path' or 'synthetic'");
    }
  }
  if (j.contains("split")) {
    const auto& js = j.at("split");
    if (js.contains("classifier_train"))
      cfg.split.classifier_train = month_set(js.at("classifier_train"));
    if (js.contains("classifier_val"))
      cfg.split.classifier_val = month_set(js.at("classifier_val"));
    if (js.contains("deferral_train"))
      cfg.split.deferral_train = month_set(js.at("deferral_train"));
    if (js.contains("deferral_val"))
      cfg.split.deferral_val = month_set(js.at("deferral_val"));
    if (js.contains("test")) cfg.split.test = month_set(js.at("test"));
  }
  if (j.contains("scorer")) {
    const auto& js = j.at("scorer");
    maybe(js, "iterations", cfg.scorer.iterations);
    maybe(js, "learning_rate", cfg.scorer.learning_rate);
    maybe(js, "l2", cfg.scorer.l2);
    maybe(js, "target_fpr", cfg.target_fpr);
  }
  if (j.contains("team")) {
    const auto& jt = j.at("team");
    maybe(jt, "protected_feature", cfg.protected_feature);
    maybe(jt, "calibration_tol", cfg.team.calibration_tol);
    if (jt.contains("groups")) {
      const auto& jg = jt.at("groups");
      if (jg.contains("standard"))
        cfg.team.standard = parse_group(jg.at("standard"), cfg.team.standard);
      if (jg.contains("unfair"))
        cfg.team.unfair = parse_group(jg.at("unfair"), cfg.team.unfair);
      if (jg.contains("agreeing"))
        cfg.team.agreeing = parse_group(jg.at("agreeing"), cfg.team.agreeing);
      if (jg.contains("sparse"))
        cfg.team.sparse = parse_group(jg.at("sparse"), cfg.team.sparse);
    }
  }
  if (j.contains("training_log")) {
    const auto& jt = j.at("training_log");
    maybe(jt, "batch_size", cfg.training_batch_size);
    maybe(jt, "deferral_rate", cfg.training_deferral_rate);
  }
  if (j.contains("outcome_model")) {
    const auto& jo = j.at("outcome_model");
    maybe(jo, "iterations", cfg.outcome_model.iterations);
    maybe(jo, "learning_rate", cfg.outcome_model.learning_rate);
    maybe(jo, "l2", cfg.outcome_model.l2);
    maybe(jo, "include_score", cfg.outcome_model.include_score);
    maybe(jo, "class_weighting", cfg.outcome_model.class_weighting);
  }
  if (j.contains("grid")) {
    const auto& jg = j.at("grid");
    if (jg.contains("pools")) {
      cfg.grid.pools.clear();
      for (const auto& v : jg.at("pools"))
        cfg.grid.pools.push_back(expert_pool_from_string(v.get<std::string>()));
    }
    if (jg.contains("batch_sizes"))
      cfg.grid.batch_sizes = jg.at("batch_sizes").get<std::vector<int>>();
    if (jg.contains("deferral_rates"))
      cfg.grid.deferral_rates = jg.at("deferral_rates").get<std::vector<double>>();
    if (jg.contains("absence_rates"))
      cfg.grid.absence_rates = jg.at("absence_rates").get<std::vector<double>>();
    if (jg.contains("distributions")) {
      cfg.grid.distributions.clear();
      for (const auto& v : jg.at("distributions"))
        cfg.grid.distributions.push_back(
            capacity_distribution_from_string(v.get<std::string>()));
    }
    maybe(jg, "n_seeds", cfg.grid_seeds.n_seeds);
    if (jg.contains("seeds"))
      cfg.grid_seeds.explicit_seeds =
          jg.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (j.contains("policies")) {
    cfg.policies.clear();
    for (const auto& v : j.at("policies"))
      cfg.policies.push_back(policy_from_string(v.get<std::string>()));
  }
  maybe(j, "auto_decline_rate", cfg.auto_decline_rate);
  if (j.contains("lambda")) {
    const auto& jl = j.at("lambda");
    std::string source = "threshold";
    maybe(jl, "source", source);
    if (source == "threshold") {
      cfg.lambda.from_threshold = true;
    } else if (source == "fixed") {
      cfg.lambda.from_threshold = false;
      maybe(jl, "value", cfg.lambda.fixed);
    } else {
      throw config_error("lambda.source must be 'threshold' or 'fixed'");
    }
  }
  maybe(j, "output", cfg.out_dir);
  maybe(j, "seed", cfg.master_seed);
  maybe(j, "workers", cfg.workers);

  // resolve grid seeds: explicit list wins, else derive from the master seed
  cfg.grid.seeds.clear();
  if (!cfg.grid_seeds.explicit_seeds.empty()) {
    cfg.grid.seeds = cfg.grid_seeds.explicit_seeds;
  } else {
    for (int k = 0; k < cfg.grid_seeds.n_seeds; ++k) {
      cfg.grid.seeds.push_back(derive_seed(cfg.master_seed, "grid-seed", k));
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return run_config_from_json_text(text);
}

std::string canonical_config_json(const RunConfig& cfg) {
  json j;
  if (cfg.dataset.synthetic) {
    j["dataset"] = {{"synthetic",
                     {{"rows", cfg.dataset.synth.rows},
                      {"features", cfg.dataset.synth.features},
                      {"months", cfg.dataset.synth.months},
                      {"protected_index", cfg.dataset.synth.protected_index},
                      {"protected_cut", cfg.dataset.synth.protected_cut},
                      {"base_logit", cfg.dataset.synth.base_logit},
                      {"signal_scale", cfg.dataset.synth.signal_scale}}}};
  } else {
    j["dataset"] = {{"path", cfg.dataset.path},
                    {"schema",
                     {{"label", cfg.dataset.schema.label},
                      {"month", cfg.dataset.schema.month},
                      {"group", cfg.dataset.schema.group},
                      {"score", cfg.dataset.schema.score},
                      {"delimiter", std::string(1, cfg.dataset.schema.delimiter)}}}};
  }
  j["split"] = {{"classifier_train", months_to_json(cfg.split.classifier_train)},
                {"classifier_val", months_to_json(cfg.split.classifier_val)},
                {"deferral_train", months_to_json(cfg.split.deferral_train)},
                {"deferral_val", months_to_json(cfg.split.deferral_val)},
                {"test", months_to_json(cfg.split.test)}};
  j["scorer"] = {{"iterations", cfg.scorer.iterations},
                 {"learning_rate", cfg.scorer.learning_rate},
                 {"l2", cfg.scorer.l2},
                 {"target_fpr", cfg.target_fpr}};
  j["team"] = {{"protected_feature", cfg.protected_feature},
               {"calibration_tol", cfg.team.calibration_tol},
               {"groups",
                {{"standard", group_to_json(cfg.team.standard)},
                 {"unfair", group_to_json(cfg.team.unfair)},
                 {"agreeing", group_to_json(cfg.team.agreeing)},
                 {"sparse", group_to_json(cfg.team.sparse)}}}};
  j["training_log"] = {{"batch_size", cfg.training_batch_size},
                       {"deferral_rate", cfg.training_deferral_rate}};
  j["outcome_model"] = {{"iterations", cfg.outcome_model.iterations},
                        {"learning_rate", cfg.outcome_model.learning_rate},
                        {"l2", cfg.outcome_model.l2},
                        {"include_score", cfg.outcome_model.include_score},
                        {"class_weighting", cfg.outcome_model.class_weighting}};
  json pools = json::array(), dists = json::array(), policies = json::array();
  for (auto p : cfg.grid.pools) pools.push_back(to_string(p));
  for (auto d : cfg.grid.distributions) dists.push_back(to_string(d));
  for (auto p : cfg.policies) policies.push_back(to_string(p));
  j["grid"] = {{"pools", pools},
               {"batch_sizes", cfg.grid.batch_sizes},
               {"deferral_rates", cfg.grid.deferral_rates},
               {"absence_rates", cfg.grid.absence_rates},
               {"distributions", dists},
               {"seeds", cfg.grid.seeds}};
  j["policies"] = policies;
  j["auto_decline_rate"] = cfg.auto_decline_rate;
  j["lambda"] = cfg.lambda.from_threshold
                    ? json{{"source", "threshold"}}
                    : json{{"source", "fixed"}, {"value", cfg.lambda.fixed}};
  j["output"] = cfg.out_dir;
  j["seed"] = cfg.master_seed;
  j["workers"] = cfg.workers;
  return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
  // Where output lands and how many workers run it cannot change a single
  // byte of the results, so they stay out of the hash.
  RunConfig normalized = cfg;
  normalized.out_dir = "";
  normalized.workers = 0;
  const std::string text = canonical_config_json(normalized);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate_run_config(const RunConfig& cfg) {
  if (!cfg.dataset.synthetic) {
    if (!std::filesystem::exists(cfg.dataset.path))
      throw config_error("dataset file does not exist: " + cfg.dataset.path);
    if (cfg.dataset.schema.label.empty() || cfg.dataset.schema.month.empty() ||
        cfg.dataset.schema.group.empty())
      throw config_error("schema must name label, month, and group columns");
  }
  if (cfg.target_fpr <= 0.0 || cfg.target_fpr >= 1.0)
    throw config_error("scorer.target_fpr must lie in (0,1)");
  if (cfg.auto_decline_rate < 0.0 || cfg.auto_decline_rate >= 1.0)
    throw config_error("auto_decline_rate must lie in [0,1)");
  if (cfg.training_batch_size < 1)
    throw config_error("training_log.batch_size must be >= 1");
  if (cfg.training_deferral_rate <= 0.0 || cfg.training_deferral_rate >= 1.0)
    throw config_error("training_log.deferral_rate must lie in (0,1)");
  auto check_group = [](const char* name, const GroupConfig& g) {
    if (g.count < 0) throw config_error(std::string(name) + ".count must be >= 0");
    auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in01(g.target_fpr_lo) || !in01(g.target_fpr_hi) ||
        !in01(g.target_fnr_lo) || !in01(g.target_fnr_hi))
      throw config_error(std::string(name) + ": target ranges must lie in (0,1)");
    if (g.target_fpr_lo > g.target_fpr_hi || g.target_fnr_lo > g.target_fnr_hi)
      throw config_error(std::string(name) + ": target range lo > hi");
    if (g.sparsity > 1.0 || g.sparsity == 0.0)
      throw config_error(std::string(name) + ": sparsity must lie in (0,1] (or < 0 for default)");
    if (g.alpha_lo < 0.0 || g.alpha_hi < g.alpha_lo)
      throw config_error(std::string(name) + ": bad alpha range");
  };
  check_group("team.groups.standard", cfg.team.standard);
  check_group("team.groups.unfair", cfg.team.unfair);
  check_group("team.groups.agreeing", cfg.team.agreeing);
  check_group("team.groups.sparse", cfg.team.sparse);
  if (cfg.team.standard.count + cfg.team.unfair.count + cfg.team.agreeing.count +
          cfg.team.sparse.count < 1)
    throw config_error("team must contain at least one expert");
  if (cfg.grid.pools.empty() || cfg.grid.batch_sizes.empty() ||
      cfg.grid.deferral_rates.empty() || cfg.grid.absence_rates.empty() ||
      cfg.grid.distributions.empty())
    throw config_error("grid value sets must be nonempty");
  for (int b : cfg.grid.batch_sizes) {
    if (b < 1) throw config_error("grid.batch_sizes entries must be >= 1");
  }
  for (double r : cfg.grid.deferral_rates) {
    if (r <= 0.0 || r >= 1.0)
      throw config_error("grid.deferral_rates entries must lie in (0,1)");
  }
  for (double a : cfg.grid.absence_rates) {
    if (a < 0.0 || a >= 1.0)
      throw config_error("grid.absence_rates entries must lie in [0,1)");
  }
  if (cfg.policies.empty()) throw config_error("policies must be nonempty");
  if (cfg.out_dir.empty()) throw config_error("output directory must be set");
  if (cfg.workers < 0) throw config_error("workers must be >= 0");
}

}  // namespace defersim
