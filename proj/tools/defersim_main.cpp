#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "defersim/config.hpp"
#include "defersim/errors.hpp"
#include "defersim/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = -1;
};

defersim::RunConfig make_config(const CliOptions& opt) {
  auto cfg = defersim::load_run_config(opt.config_path);
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (opt.seed_set) {
    cfg.master_seed = opt.seed;
    // re-derive grid seeds unless the config pinned them explicitly
    if (cfg.grid_seeds.explicit_seeds.empty()) {
      cfg.grid.seeds.clear();
      for (int k = 0; k < cfg.grid_seeds.n_seeds; ++k) {
        cfg.grid.seeds.push_back(
            defersim::derive_seed(cfg.master_seed, "grid-seed", k));
      }
    }
  }
  if (opt.workers >= 0) cfg.workers = opt.workers;
  return cfg;
}

int dispatch(const std::string& stage, const CliOptions& opt) {
  try {
    auto cfg = make_config(opt);
    defersim::Pipeline pipeline(cfg);
    if (stage == "validate-config") {
      pipeline.validate();
      std::cerr << "config ok (hash " << pipeline.hash() << ")\n";
    } else if (stage == "gen-experts") {
      pipeline.gen_experts();
    } else if (stage == "gen-scenarios") {
      pipeline.gen_scenarios();
    } else if (stage == "run-policies") {
      pipeline.run_policies();
    } else if (stage == "report") {
      pipeline.report();
    } else {
      pipeline.run_all();
    }
    return 0;
  } catch (const defersim::config_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const defersim::schema_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "defersim: capacity-aware learning-to-defer simulation and benchmarking"};
  app.require_subcommand(1);

  CliOptions opt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "run configuration (JSON)")
        ->required();
    sub->add_option("--out", opt.out_dir, "override the output directory");
    sub->add_option("--seed", opt.seed, "override the master seed")
        ->each([&](const std::string&) { opt.seed_set = true; });
    sub->add_option("--workers", opt.workers,
                    "worker threads (0 = hardware concurrency)");
  };

  add_common(app.add_subcommand("validate-config",
                                "check the config without running anything"));
  add_common(app.add_subcommand(
      "gen-experts", "synthesize and calibrate the expert team artifacts"));
  add_common(app.add_subcommand("gen-scenarios",
                                "materialize the capacity scenario grid"));
  add_common(app.add_subcommand(
      "run-policies", "train the outcome model and run all deferral policies"));
  add_common(
      app.add_subcommand("report", "aggregate per-seed reports into a summary"));
  add_common(app.add_subcommand("run", "full pipeline, all stages in order"));

  CLI11_PARSE(app, argc, argv);
  return dispatch(app.get_subcommands().front()->get_name(), opt);
}
