#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oldpf/autodiff.hpp"
#include "oldpf/components.hpp"

namespace oldpf::flows {

using ad::Mat;
using ad::Mlp;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

struct FlowConfig {
  int depth = 2;       // coupling layers per flow (1 is used for 1-D flows)
  int hidden = 32;     // conditioner hidden width
  double clamp = 5.0;  // scale-net outputs clamped to [-clamp, clamp]
};

struct FlowResult {
  Var y;       // N x d
  Var logdet;  // N x 1
};

/// One affine coupling layer. Splits dims into a pass-through block and a
/// transformed block; scale/shift come from conditioner nets over
/// (pass-through dims ++ conditioner vector). With both of those empty
/// (1-D unconditioned flow) scale and shift degenerate to learnable scalars.
struct CouplingLayer {
  int dim = 0;
  int cond_dim = 0;
  int n_tr = 0;            // transformed block width
  int n_pass = 0;          // pass-through block width
  bool transform_front = false;
  double clamp = 5.0;
  std::optional<Mlp> scale_net;
  std::optional<Mlp> shift_net;
  std::string s_param, t_param;  // used when the nets are absent
};

/// Stack of coupling layers with alternating masks. cond_dim == 0 gives an
/// unconditioned flow.
class FlowStack {
 public:
  FlowStack() = default;
  FlowStack(ParameterStore& store, const std::string& prefix, int dim, int cond_dim,
            const FlowConfig& cfg, std::mt19937_64& rng);

  /// x -> y with log|det J| of the forward map, row-wise.
  FlowResult forward(Tape& tape, ParameterStore& store, Var x, Var cond) const;
  /// y -> x with log|det J| of the inverse map (equals minus the forward
  /// log-det at the matched point).
  FlowResult inverse(Tape& tape, ParameterStore& store, Var y, Var cond) const;

  int dim() const { return dim_; }
  int cond_dim() const { return cond_dim_; }

 private:
  struct Blocks {
    Var pass, tr;
  };
  Blocks split(Tape& tape, Var x, const CouplingLayer& layer) const;
  Var join(Tape& tape, Var pass, Var tr, const CouplingLayer& layer) const;
  std::pair<Var, Var> scale_shift(Tape& tape, ParameterStore& store,
                                  const CouplingLayer& layer, Var pass, Var cond,
                                  int nrows) const;

  int dim_ = 0;
  int cond_dim_ = 0;
  std::vector<CouplingLayer> layers_;
};

struct Sampled {
  Var x;      // N x d
  Var log_p;  // N x 1
};

/// Dynamic model: Gaussian base with learnable linear mean map and diagonal
/// log-variance, pushed through an unconditioned flow.
class DynamicModel {
 public:
  DynamicModel() = default;
  DynamicModel(ParameterStore& store, const std::string& prefix, int dim,
               const FlowConfig& cfg, std::mt19937_64& rng);

  Sampled sample(Tape& tape, ParameterStore& store, Var x_prev,
                 const Mat& noise) const;
  Var logpdf(Tape& tape, ParameterStore& store, Var x, Var x_prev) const;

  int dim() const { return dim_; }
  /// Base distribution of the next state given x_prev: mean and log-std nodes.
  std::pair<Var, Var> base_moments(Tape& tape, ParameterStore& store, Var x_prev) const;

 private:
  int dim_ = 0;
  std::string prefix_;
  FlowStack flow_;
};

/// Proposal: Gaussian base with Mlp mean/log-std conditioned on
/// (x_prev, y_t), pushed through a flow conditioned on y_t.
class ProposalModel {
 public:
  ProposalModel() = default;
  ProposalModel(ParameterStore& store, const std::string& prefix, int state_dim,
                int obs_dim, const FlowConfig& cfg, std::mt19937_64& rng);

  Sampled sample(Tape& tape, ParameterStore& store, Var x_prev,
                 const Eigen::VectorXd& y, const Mat& noise) const;
  /// Density of arbitrary points via the inverse path.
  Var logpdf(Tape& tape, ParameterStore& store, Var x, Var x_prev,
             const Eigen::VectorXd& y) const;

  int state_dim() const { return state_dim_; }
  int obs_dim() const { return obs_dim_; }

 private:
  std::pair<Var, Var> base_moments(Tape& tape, ParameterStore& store, Var x_prev,
                                   Var y_tiled) const;

  int state_dim_ = 0;
  int obs_dim_ = 0;
  Mlp base_net_;
  FlowStack flow_;
};

/// Measurement likelihood: flow over observation space conditioned on the
/// state, standard Gaussian base.
class MeasurementModel {
 public:
  MeasurementModel() = default;
  MeasurementModel(ParameterStore& store, const std::string& prefix, int obs_dim,
                   int state_dim, const FlowConfig& cfg, std::mt19937_64& rng);

  Var loglik(Tape& tape, ParameterStore& store, const Eigen::VectorXd& y, Var x) const;

  int obs_dim() const { return obs_dim_; }

 private:
  int obs_dim_ = 0;
  int state_dim_ = 0;
  FlowStack flow_;
};

/// The learnable state-space model: dynamic flow + proposal flow +
/// measurement flow over one shared parameter store.
class FlowModel : public SsmComponents {
 public:
  FlowModel(int state_dim, int obs_dim, const FlowConfig& cfg, std::uint64_t seed);

  int state_dim() const override { return state_dim_; }
  int obs_dim() const override { return obs_dim_; }
  ParameterStore& params() override { return store_; }
  const ParameterStore& params() const { return store_; }
  const FlowConfig& config() const { return cfg_; }

  Proposed propose(Tape& tape, Var x_prev, const Eigen::VectorXd& y,
                   const Mat& noise) override;
  Var transition_logpdf(Tape& tape, Var x, Var x_prev) override;
  Var measurement_loglik(Tape& tape, const Eigen::VectorXd& y, Var x) override;

  /// Proposal density of given states via the inverse flow path; independent
  /// of the sampling path, used for consistency checks.
  Var proposal_logpdf(Tape& tape, Var x, Var x_prev, const Eigen::VectorXd& y);

  const DynamicModel& dynamic() const { return dyn_; }
  const ProposalModel& proposal() const { return prop_; }
  const MeasurementModel& measurement() const { return meas_; }

  /// Propose from the dynamic model itself (q = p(x_t|x_{t-1})); the
  /// transition and proposal terms then cancel in the weight update.
  void set_bootstrap_proposal(bool on) { bootstrap_proposal_ = on; }
  bool bootstrap_proposal() const { return bootstrap_proposal_; }

  /// Overwrite parameter values from another store (shapes must match).
  void load_params(const ParameterStore& src);

 private:
  int state_dim_ = 0;
  int obs_dim_ = 0;
  FlowConfig cfg_;
  bool bootstrap_proposal_ = false;
  ParameterStore store_;
  DynamicModel dyn_;
  ProposalModel prop_;
  MeasurementModel meas_;
};

}  // namespace oldpf::flows
