#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oldpf/autodiff.hpp"
#include "oldpf/components.hpp"
#include "oldpf/pf.hpp"
#include "oldpf/ssm.hpp"

namespace oldpf::learn {

using ad::Mat;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

/// Per-step evidence terms for the current sliding window: pairs of
/// (logsumexp of log w_t, logsumexp of log w~_{t-1}).
class WindowAccumulator {
 public:
  explicit WindowAccumulator(int window_len);

  void push(Var lse_w, Var lse_w_tilde_prev);
  bool full() const { return static_cast<int>(terms_.size()) == window_len_; }
  int size() const { return static_cast<int>(terms_.size()); }
  int window_index() const { return window_index_; }
  int window_len() const { return window_len_; }
  const std::vector<std::pair<Var, Var>>& terms() const { return terms_; }

  /// Starts the next window: increments S and drops all stored nodes.
  void advance();

 private:
  int window_len_;
  int window_index_ = 0;
  std::vector<std::pair<Var, Var>> terms_;
};

/// Negative windowed log-evidence estimate:
/// -sum_t [ lse(log w_t) - lse(log w~_{t-1}) ].
Var window_loss(Tape& tape, const WindowAccumulator& acc);

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Non-finite gradients skip the update (the
/// stream keeps running); gradients are zeroed either way.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  bool step(ParameterStore& store);

  long steps_taken() const { return t_; }
  long skipped() const { return skipped_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, Mat> m_, v_;
  long t_ = 0;
  long skipped_ = 0;
};

struct StepDiagnostic {
  int t = 0;
  double ess = 0.0;
  bool resampled = false;
  double log_evidence_increment = 0.0;
};

struct OnlineRunRecord {
  std::vector<Eigen::VectorXd> estimates;   // one per observation step
  std::vector<double> step_sq_errors;       // squared state error, when truth known
  std::vector<double> window_losses;
  std::vector<ParameterStore> param_snapshots;  // at window boundaries
  std::vector<StepDiagnostic> diagnostics;
  long optimizer_steps = 0;
  long skipped_updates = 0;
  long collapse_events = 0;
  long degeneracy_events = 0;
};

struct OnlineRunConfig {
  pf::FilterConfig filter;
  int window = 10;
  AdamConfig adam;
  bool learning = true;
  bool record_snapshots = false;
  bool resampling_enabled = true;
};

/// Algorithm-2 loop with the unsupervised windowed evidence loss; one Adam
/// step per window, particle history detached at each window boundary.
OnlineRunRecord online_run(const std::vector<Eigen::VectorXd>& observations,
                           SsmComponents& model, const OnlineRunConfig& cfg,
                           std::mt19937_64& rng,
                           const std::vector<Eigen::VectorXd>* truth = nullptr);

/// Same loop trained on per-window mean squared error against ground truth.
OnlineRunRecord supervised_online_run(const ssm::Trajectory& trajectory,
                                      SsmComponents& model, const OnlineRunConfig& cfg,
                                      std::mt19937_64& rng);

/// Full filtering pass over one trajectory; returns the mean over time of the
/// squared error between weighted means and ground truth as a scalar node.
Var supervised_filter_loss(Tape& tape, const ssm::Trajectory& trajectory,
                           SsmComponents& model, const pf::FilterConfig& filter_cfg,
                           std::mt19937_64& rng, bool resampling_enabled = true);

struct PretrainConfig {
  int num_particles = 100;
  int max_epochs = 30;
  int batch_size = 16;
  double val_fraction = 0.2;
  int patience = 5;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  ParameterStore best_params;
  Eigen::MatrixXd init_bounds;  // per-dim (min, max) of offline states
  std::vector<double> train_curve;
  std::vector<double> val_curve;
  int epochs_run = 0;
  double best_val = 0.0;
};

/// Supervised offline training: full-trajectory MSE, mini-batches of
/// trajectories, early stop on validation plateau. The model is left loaded
/// with the best parameters.
PretrainResult pretrain(const std::vector<ssm::Trajectory>& dataset, SsmComponents& model,
                        const PretrainConfig& cfg);

}  // namespace oldpf::learn
