#include "oldpf/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace oldpf::oracle {

KalmanResult kalman_filter(const ssm::LgssmParams& params,
                           const std::vector<VectorXd>& observations) {
  const int d_x = params.state_dim();
  const int d_y = params.obs_dim();
  const MatrixXd& f = params.theta1;
  const MatrixXd& h = params.theta2;
  const MatrixXd q = MatrixXd::Identity(d_x, d_x);
  const MatrixXd r = params.obs_noise_var * MatrixXd::Identity(d_y, d_y);
  const MatrixXd eye = MatrixXd::Identity(d_x, d_x);

  VectorXd m = VectorXd::Zero(d_x);
  MatrixXd p = MatrixXd::Identity(d_x, d_x);

  KalmanResult res;
  res.means.reserve(observations.size());
  res.covariances.reserve(observations.size());

  for (const auto& y : observations) {
    if (y.size() != d_y) throw std::invalid_argument("kalman_filter: observation dim mismatch");
    // predict
    m = f * m;
    p = f * p * f.transpose() + q;
    // update
    const VectorXd innov = y - h * m;
    MatrixXd s = h * p * h.transpose() + r;
    s = 0.5 * (s + s.transpose()).eval();
    Eigen::LLT<MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("kalman_filter: singular innovation covariance");
    const MatrixXd k = p * h.transpose() * llt.solve(MatrixXd::Identity(d_y, d_y));
    m += k * innov;
    const MatrixXd ikh = eye - k * h;
    p = ikh * p * ikh.transpose() + k * r * k.transpose();  // Joseph form
    p = 0.5 * (p + p.transpose()).eval();
    {
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p);
      if (eig.eigenvalues().minCoeff() <= 0.0)
        throw std::runtime_error("kalman_filter: covariance lost positive definiteness");
    }
    // log evidence increment from the innovation density
    const double logdet_s = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double maha = innov.dot(llt.solve(innov));
    res.log_evidence += -0.5 * (d_y * std::log(2.0 * M_PI) + logdet_s + maha);

    res.means.push_back(m);
    res.covariances.push_back(p);
  }
  return res;
}

std::map<std::string, MatrixXd> finite_diff_grad(
    const std::function<double(ad::ParameterStore&)>& loss, ad::ParameterStore& store,
    double step) {
  std::map<std::string, MatrixXd> grads;
  for (const auto& name : store.names()) {
    MatrixXd& v = store.value(name);
    MatrixXd g(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const double orig = v(i, j);
        v(i, j) = orig + step;
        const double up = loss(store);
        v(i, j) = orig - step;
        const double dn = loss(store);
        v(i, j) = orig;
        g(i, j) = (up - dn) / (2.0 * step);
      }
    }
    grads[name] = g;
  }
  return grads;
}

LgssmExactComponents::LgssmExactComponents(ssm::LgssmParams params)
    : params_(std::move(params)) {}

Proposed LgssmExactComponents::propose(ad::Tape& tape, ad::Var x_prev, const VectorXd& y,
                                       const MatrixXd& noise) {
  (void)y;  // bootstrap: proposal ignores the observation
  ad::Var mean = tape.matmul(x_prev, tape.constant(params_.theta1.transpose()));
  ad::Var x = tape.add(mean, tape.constant(noise));
  ad::Var zero = tape.constant(ad::Mat::Zero(1, params_.state_dim()));
  ad::Var log_q = tape.gaussian_logpdf(x, mean, zero);
  return {x, log_q};
}

ad::Var LgssmExactComponents::transition_logpdf(ad::Tape& tape, ad::Var x, ad::Var x_prev) {
  ad::Var mean = tape.matmul(x_prev, tape.constant(params_.theta1.transpose()));
  ad::Var zero = tape.constant(ad::Mat::Zero(1, params_.state_dim()));
  return tape.gaussian_logpdf(x, mean, zero);
}

ad::Var LgssmExactComponents::measurement_loglik(ad::Tape& tape, const VectorXd& y,
                                                 ad::Var x) {
  const int n = static_cast<int>(tape.value(x).rows());
  ad::Var mean = tape.matmul(x, tape.constant(params_.theta2.transpose()));
  ad::Var y_tiled = tape.tile_rows(tape.constant(y.transpose()), n);
  ad::Var log_std = tape.constant(ad::Mat::Constant(
      1, params_.obs_dim(), 0.5 * std::log(params_.obs_noise_var)));
  return tape.gaussian_logpdf(y_tiled, mean, log_std);
}

}  // namespace oldpf::oracle
