// Command line driver: dataset generation, pretraining, online runs,
// metric aggregation and the two simulation studies end to end.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oldpf/harness.hpp"
#include "oldpf/rng.hpp"
#include "oldpf/ssm.hpp"

namespace fs = std::filesystem;
using namespace oldpf;

namespace {

harness::ExperimentConfig config_from(const std::string& config_path, int seed_count,
                                      int steps, const std::vector<std::string>& methods,
                                      const std::string& out) {
  harness::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = harness::load_config(config_path);
  if (seed_count > 0) {
    cfg.seeds.clear();
    for (int i = 0; i < seed_count; ++i) cfg.seeds.push_back(9000 + i);
  }
  if (steps > 0) cfg.online_steps = steps;
  if (!methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(harness::method_from_key(m));
  }
  if (!out.empty()) cfg.out_dir = out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online-learning differentiable particle filters"};
  app.require_subcommand(1);

  std::string config_path, out_dir, phase = "pretrain";
  int seed_count = 0, steps = 0, n_traj = 0;
  std::uint64_t data_seed = 1234;
  std::vector<std::string> methods;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file (json)");
    cmd->add_option("--seed-count", seed_count, "number of online seeds");
    cmd->add_option("--steps", steps, "online steps per run");
    cmd->add_option("--methods", methods, "subset of pretrained,oldpf,oracle")
        ->delimiter(',');
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* gen = app.add_subcommand("generate-data", "simulate a dataset to CSV");
  gen->add_option("--config", config_path, "experiment config file (json)");
  gen->add_option("--phase", phase, "pretrain|online")->check(CLI::IsMember({"pretrain", "online"}));
  gen->add_option("--n-traj", n_traj, "number of trajectories");
  gen->add_option("--steps", steps, "steps per trajectory");
  gen->add_option("--seed", data_seed, "master seed");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "offline supervised pretraining");
  add_common(pre);

  auto* online = app.add_subcommand("run-online",
                                    "online runs from an existing checkpoint");
  add_common(online);

  auto* eval = app.add_subcommand("evaluate", "recompute aggregates from metrics.csv");
  eval->add_option("--out", out_dir, "directory holding metrics.csv")->required();

  auto* repro = app.add_subcommand("reproduce-paper",
                                   "both simulation studies end to end");
  bool full_scale = false, plan_only = false;
  int repro_seeds = 10, lgssm_steps = 2000, tracking_steps = 1000, pretrain_traj = 100;
  repro->add_flag("--full-scale", full_scale,
                  "50 seeds x 5000 steps, d in {2,5,10}, pretrain 500x50");
  repro->add_flag("--plan-only", plan_only, "print the resolved plan and exit");
  repro->add_option("--out", out_dir, "output directory");
  repro->add_option("--seed-count", repro_seeds, "desk-scale seed count");
  repro->add_option("--lgssm-steps", lgssm_steps, "desk-scale lgssm online steps");
  repro->add_option("--tracking-steps", tracking_steps, "desk-scale tracking online steps");
  repro->add_option("--pretrain-traj", pretrain_traj, "desk-scale pretraining trajectories");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      harness::ExperimentConfig cfg;
      if (!config_path.empty()) cfg = harness::load_config(config_path);
      ssm::DatasetMeta meta;
      meta.kind = cfg.model;
      meta.phase = ssm::phase_from_string(phase);
      meta.dim = cfg.dim;
      meta.n_traj = n_traj > 0 ? n_traj : cfg.pretrain.n_traj;
      meta.steps = steps > 0 ? steps : cfg.pretrain.steps;
      meta.seed = data_seed;
      auto data = ssm::generate_dataset(meta);
      ssm::save_dataset(out_dir, data, meta);
      std::cout << "wrote " << data.size() << " trajectories to " << out_dir << "\n";
    } else if (pre->parsed()) {
      auto cfg = config_from(config_path, seed_count, steps, methods, out_dir);
      const std::string base = harness::ensure_pretrained(cfg);
      std::cout << "checkpoint: " << base << ".ckpt\n";
    } else if (online->parsed()) {
      auto cfg = config_from(config_path, seed_count, steps, methods, out_dir);
      harness::ensure_pretrained(cfg, /*allow_pretraining=*/false);
      auto summary = harness::run_experiment(cfg);
      std::cout << "wrote metrics for " << summary.n_seeds << " seeds to " << cfg.out_dir
                << "\n";
    } else if (eval->parsed()) {
      auto summary = harness::evaluate_metrics(out_dir);
      for (const auto& m : summary.methods)
        std::cout << harness::method_label(m.method) << ": " << m.mean << " +- "
                  << m.stddev << "\n";
    } else if (repro->parsed()) {
      harness::ReproduceOptions opts;
      opts.full_scale = full_scale;
      opts.plan_only = plan_only;
      if (!out_dir.empty()) opts.out_dir = out_dir;
      opts.seeds = repro_seeds;
      opts.lgssm_steps = lgssm_steps;
      opts.tracking_steps = tracking_steps;
      opts.pretrain_traj = pretrain_traj;
      return harness::reproduce_paper(opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
