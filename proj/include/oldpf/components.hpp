#pragma once

#include <Eigen/Dense>

#include "oldpf/autodiff.hpp"

namespace oldpf {

struct Proposed {
  ad::Var states;  // N x d_x
  ad::Var log_q;   // N x 1
};

/// Model triple used by the particle filter: proposal sampler/density,
/// transition density, measurement likelihood. All tape-based so filtering
/// stays differentiable end to end.
class SsmComponents {
 public:
  virtual ~SsmComponents() = default;

  virtual int state_dim() const = 0;
  virtual int obs_dim() const = 0;
  virtual ad::ParameterStore& params() = 0;

  /// Reparameterized proposal draw: noise is standard normal, N x d_x.
  virtual Proposed propose(ad::Tape& tape, ad::Var x_prev, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& noise) = 0;
  virtual ad::Var transition_logpdf(ad::Tape& tape, ad::Var x, ad::Var x_prev) = 0;
  virtual ad::Var measurement_loglik(ad::Tape& tape, const Eigen::VectorXd& y, ad::Var x) = 0;
};

}  // namespace oldpf
