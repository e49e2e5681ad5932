#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oldpf/autodiff.hpp"
#include "oldpf/components.hpp"
#include "oldpf/ssm.hpp"

namespace oldpf::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct KalmanResult {
  std::vector<VectorXd> means;      // filtering means, one per observation
  std::vector<MatrixXd> covariances;
  double log_evidence = 0.0;        // exact log p(y_{1:T})
};

/// Exact filtering for the linear Gaussian model: prior N(0, I), transition
/// covariance I, observation covariance obs_noise_var * I. Joseph-form
/// covariance update; innovation covariance solved by Cholesky.
KalmanResult kalman_filter(const ssm::LgssmParams& params,
                           const std::vector<VectorXd>& observations);

/// Central finite differences of a deterministic scalar loss with respect to
/// every entry of the store. The loss callback sees the perturbed store.
std::map<std::string, MatrixXd> finite_diff_grad(
    const std::function<double(ad::ParameterStore&)>& loss, ad::ParameterStore& store,
    double step = 1e-5);

/// Exact linear Gaussian model components (bootstrap proposal q = p(x|x_prev));
/// the reference implementation the flow model is validated against.
class LgssmExactComponents : public SsmComponents {
 public:
  explicit LgssmExactComponents(ssm::LgssmParams params);

  int state_dim() const override { return params_.state_dim(); }
  int obs_dim() const override { return params_.obs_dim(); }
  ad::ParameterStore& params() override { return store_; }

  Proposed propose(ad::Tape& tape, ad::Var x_prev, const VectorXd& y,
                   const MatrixXd& noise) override;
  ad::Var transition_logpdf(ad::Tape& tape, ad::Var x, ad::Var x_prev) override;
  ad::Var measurement_loglik(ad::Tape& tape, const VectorXd& y, ad::Var x) override;

 private:
  ssm::LgssmParams params_;
  ad::ParameterStore store_;  // empty; nothing learnable here
};

}  // namespace oldpf::oracle
