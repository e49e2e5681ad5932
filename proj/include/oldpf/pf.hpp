#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "oldpf/autodiff.hpp"
#include "oldpf/components.hpp"

namespace oldpf::pf {

using ad::Mat;
using ad::Tape;
using ad::Var;

/// Every particle carries zero likelihood; the filter has diverged.
struct FilterCollapse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FilterConfig {
  int num_particles = 100;
  double ess_threshold = 50.0;        // default N_p / 2
  Eigen::MatrixXd init_bounds;        // d x 2 (min, max) per dimension

  static FilterConfig with_defaults(int num_particles, Eigen::MatrixXd bounds);
  void validate() const;
};

/// Weighted particle set. `states`/`log_w` are the proposed particles and
/// unnormalised weights w_t; `log_w_tilde` and `states` reflect the
/// post-resampling pair (w~_t, x~_t) once `multinomial_resample` ran.
struct ParticleEnsemble {
  Var states;        // N x d
  Var log_w;         // N x 1, pre-resampling
  Var log_w_tilde;   // N x 1, post-resampling (== log_w when not resampled)
  bool resampled = false;
  std::vector<int> ancestors;

  int count(const Tape& tape) const {
    return static_cast<int>(tape.value(states).rows());
  }
};

/// Particles i.i.d. uniform over the configured hypercube, weights 1/N_p.
ParticleEnsemble init_particles(Tape& tape, const FilterConfig& cfg, std::mt19937_64& rng);

/// Algorithm-1 style proposal and weight update in log space:
/// log w_t = log w~_{t-1} + meas + trans - log q, all differentiable.
ParticleEnsemble propose_and_weight(Tape& tape, const ParticleEnsemble& ens,
                                    const Eigen::VectorXd& y, SsmComponents& model,
                                    const Mat& noise);
ParticleEnsemble propose_and_weight(Tape& tape, const ParticleEnsemble& ens,
                                    const Eigen::VectorXd& y, SsmComponents& model,
                                    std::mt19937_64& rng);

/// Softmax of the log-weights as a differentiable N x 1 node.
Var normalized_weights(Tape& tape, const ParticleEnsemble& ens);

/// Value-level softmax; throws FilterCollapse when all weights are -inf.
Eigen::VectorXd normalize_values(const Eigen::VectorXd& log_w);

/// 1 / sum(w_i^2) for normalized weights; in [1, N_p].
double ess(const Eigen::VectorXd& normalized);

/// I.i.d. multinomial ancestor draw; states gathered, weights reset to 1.
/// Ancestor indices are constants: no gradient flows through the selection.
void multinomial_resample(Tape& tape, ParticleEnsemble& ens, std::mt19937_64& rng);

/// Weighted particle mean, 1 x d, differentiable.
Var estimate_state(Tape& tape, const ParticleEnsemble& ens);

/// Fraction of particles whose normalized weight exceeds 1 - 1e-12 would be
/// a collapse indicator; returns true when the largest weight does.
bool weight_degenerate(const Eigen::VectorXd& normalized);

}  // namespace oldpf::pf
