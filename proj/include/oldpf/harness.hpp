#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oldpf/autodiff.hpp"
#include "oldpf/flows.hpp"
#include "oldpf/learn.hpp"
#include "oldpf/ssm.hpp"

namespace oldpf::harness {

enum class Method { Pretrained, OnlineElbo, OnlineSupervised };

std::string method_key(Method m);    // "pretrained" / "oldpf" / "oracle"
std::string method_label(Method m);  // table labels
Method method_from_key(const std::string& key);

enum class RmseScope { FullState, Kinematic, PositionOnly };
RmseScope scope_from_string(const std::string& s);
std::string to_string(RmseScope s);

struct PretrainSection {
  int n_traj = 500;
  int steps = 50;
  int max_epochs = 30;
  int batch_size = 16;
  int patience = 5;
  double val_fraction = 0.2;
};

struct ExperimentConfig {
  int version = 1;
  ssm::ModelKind model = ssm::ModelKind::Lgssm;
  int dim = 2;  // lgssm state dimension; tracking has a fixed 5-D state
  int num_particles = 100;
  double learning_rate = 0.005;
  int window = 10;
  std::optional<double> ess_threshold;  // default: num_particles / 2
  flows::FlowConfig flow;
  PretrainSection pretrain;
  int online_steps = 5000;
  std::vector<std::uint64_t> seeds;
  std::vector<Method> methods = {Method::Pretrained, Method::OnlineElbo,
                                 Method::OnlineSupervised};
  std::string out_dir = "out";
  RmseScope rmse_scope = RmseScope::Kinematic;  // tracking only; lgssm uses full state
  std::uint64_t model_seed = 42;
  std::uint64_t data_seed = 1234;
  int snapshot_every = 0;  // checkpoint interval in windows, 0 = off
  int jobs = 0;            // worker pool size, 0 = hardware concurrency

  int state_dim() const;
  int obs_dim() const;
  double resolved_ess_threshold() const;
  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

/// sqrt of the mean over time of the squared Euclidean error.
double rmse(const std::vector<Eigen::VectorXd>& estimates,
            const std::vector<Eigen::VectorXd>& truths);

/// Dims entering the error norm for a scope (tracking: 5-D state).
int scope_dims(const ExperimentConfig& cfg);

struct MethodSummary {
  Method method = Method::Pretrained;
  std::vector<double> per_seed_rmse;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> curve_mean;     // per-step error averaged over seeds
  std::vector<double> curve_ci_half;  // 1.96 * std / sqrt(n)
};

struct RunSummary {
  std::vector<MethodSummary> methods;
  int n_seeds = 0;
  int steps = 0;
};

/// Checkpoint = parameter store + a json sidecar describing the model and
/// the particle-init hypercube.
struct CheckpointMeta {
  ssm::ModelKind model = ssm::ModelKind::Lgssm;
  int state_dim = 0;
  int obs_dim = 0;
  flows::FlowConfig flow;
  Eigen::MatrixXd init_bounds;
  std::uint64_t model_seed = 0;
};

void save_checkpoint(const std::string& base_path, const ad::ParameterStore& store,
                     const CheckpointMeta& meta);
ad::ParameterStore load_checkpoint(const std::string& base_path, CheckpointMeta* meta_out);

/// Builds a FlowModel matching a checkpoint and loads its parameters.
flows::FlowModel model_from_checkpoint(const ad::ParameterStore& store,
                                       const CheckpointMeta& meta);

/// Generates (or loads a cached copy of) the offline dataset and pretrains;
/// writes <out>/pretrained.ckpt + .json. Returns the checkpoint base path.
std::string ensure_pretrained(const ExperimentConfig& cfg, bool allow_pretraining = true);

/// Runs every (seed, method) pair from the shared pretrained checkpoint on
/// freshly simulated shifted data; writes metrics.csv, per-seed CSVs,
/// aggregate.csv, curve.csv and summary.txt under cfg.out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg);

/// Recomputes aggregate outputs from an existing metrics.csv.
RunSummary evaluate_metrics(const std::string& out_dir);

struct ReproduceOptions {
  bool full_scale = false;
  std::string out_dir = "paper_out";
  // desk-scale knobs (ignored under full_scale)
  int seeds = 10;
  int lgssm_steps = 2000;
  int tracking_steps = 1000;
  int pretrain_traj = 100;
  std::vector<int> lgssm_dims = {2};
  bool plan_only = false;  // print the resolved plan without running
};

/// Chains data generation, pretraining, online runs and evaluation for the
/// linear Gaussian and tracking studies; emits table1.txt / table2.txt plus
/// ordering-check lines.
int reproduce_paper(const ReproduceOptions& opts);

}  // namespace oldpf::harness
