// Python bindings for the main operations: simulators, flow model densities,
// particle filter steps, the Kalman reference and the experiment pipeline.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "oldpf/flows.hpp"
#include "oldpf/harness.hpp"
#include "oldpf/learn.hpp"
#include "oldpf/oracle.hpp"
#include "oldpf/pf.hpp"
#include "oldpf/rng.hpp"
#include "oldpf/ssm.hpp"

namespace py = pybind11;
using namespace oldpf;

namespace {

ssm::Phase parse_phase(const std::string& s) { return ssm::phase_from_string(s); }

struct TrajectoryOut {
  Eigen::MatrixXd states;
  Eigen::MatrixXd observations;
};

TrajectoryOut pack(const ssm::Trajectory& traj) {
  TrajectoryOut out;
  const auto d_x = traj.states.front().size();
  const auto d_y = traj.observations.front().size();
  out.states.resize(static_cast<Eigen::Index>(traj.states.size()), d_x);
  for (std::size_t i = 0; i < traj.states.size(); ++i)
    out.states.row(static_cast<Eigen::Index>(i)) = traj.states[i].transpose();
  out.observations.resize(static_cast<Eigen::Index>(traj.observations.size()), d_y);
  for (std::size_t i = 0; i < traj.observations.size(); ++i)
    out.observations.row(static_cast<Eigen::Index>(i)) = traj.observations[i].transpose();
  return out;
}

/// Thin value-level facade over FlowModel for numpy callers.
class PyFlowModel {
 public:
  PyFlowModel(int state_dim, int obs_dim, int depth, int hidden, double clamp,
              std::uint64_t seed)
      : model_(state_dim, obs_dim,
               flows::FlowConfig{depth, hidden, clamp}, seed) {}

  std::pair<Eigen::MatrixXd, Eigen::VectorXd> dynamic_sample(const Eigen::MatrixXd& x_prev,
                                                             const Eigen::MatrixXd& noise) {
    ad::Tape tape;
    auto s = model_.dynamic().sample(tape, model_.params(), tape.constant(x_prev), noise);
    return {tape.value(s.x), tape.value(s.log_p).col(0)};
  }

  Eigen::VectorXd dynamic_logpdf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prev) {
    ad::Tape tape;
    auto lp = model_.dynamic().logpdf(tape, model_.params(), tape.constant(x),
                                      tape.constant(x_prev));
    return tape.value(lp).col(0);
  }

  std::pair<Eigen::MatrixXd, Eigen::VectorXd> proposal_sample(const Eigen::MatrixXd& x_prev,
                                                              const Eigen::VectorXd& y,
                                                              const Eigen::MatrixXd& noise) {
    ad::Tape tape;
    auto s = model_.proposal().sample(tape, model_.params(), tape.constant(x_prev), y, noise);
    return {tape.value(s.x), tape.value(s.log_p).col(0)};
  }

  Eigen::VectorXd measurement_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
    ad::Tape tape;
    auto ll = model_.measurement_loglik(tape, y, tape.constant(x));
    return tape.value(ll).col(0);
  }

  std::vector<std::string> param_names() { return model_.params().names(); }

  Eigen::MatrixXd get_param(const std::string& name) { return model_.params().value(name); }
  void set_param(const std::string& name, const Eigen::MatrixXd& v) {
    auto& dst = model_.params().value(name);
    if (dst.rows() != v.rows() || dst.cols() != v.cols())
      throw std::invalid_argument("set_param: shape mismatch for " + name);
    dst = v;
  }

  void save(const std::string& path) { model_.params().save(path); }
  void load(const std::string& path) { model_.load_params(ad::ParameterStore::load(path)); }

 private:
  flows::FlowModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "differentiable particle filtering with online sliding-window training";

  py::class_<TrajectoryOut>(m, "Trajectory")
      .def_readonly("states", &TrajectoryOut::states)
      .def_readonly("observations", &TrajectoryOut::observations);

  m.def(
      "lgssm_params",
      [](const std::string& phase, int d) {
        auto p = ssm::lgssm_params(parse_phase(phase), d);
        return std::make_pair(p.theta1, p.theta2);
      },
      py::arg("phase"), py::arg("dim"),
      "Transition/observation matrices for the linear Gaussian study.");

  m.def(
      "simulate_lgssm",
      [](const std::string& phase, int d, int steps, std::uint64_t seed) {
        auto rng = make_rng(seed);
        return pack(ssm::lgssm_simulate(ssm::lgssm_params(parse_phase(phase), d), steps, rng));
      },
      py::arg("phase"), py::arg("dim"), py::arg("steps"), py::arg("seed"));

  m.def(
      "simulate_tracking",
      [](const std::string& phase, int steps, std::uint64_t seed) {
        auto rng = make_rng(seed);
        return pack(ssm::tracking_simulate(ssm::tracking_params(parse_phase(phase)), steps, rng));
      },
      py::arg("phase"), py::arg("steps"), py::arg("seed"));

  m.def("tracking_transition_matrix", &ssm::tracking_transition_matrix, py::arg("omega"),
        py::arg("sampling_period") = 5.0);

  m.def(
      "kalman_filter",
      [](const std::string& phase, int d, const Eigen::MatrixXd& observations) {
        auto params = ssm::lgssm_params(parse_phase(phase), d);
        std::vector<Eigen::VectorXd> obs;
        obs.reserve(static_cast<std::size_t>(observations.rows()));
        for (Eigen::Index i = 0; i < observations.rows(); ++i)
          obs.push_back(observations.row(i).transpose());
        auto res = oracle::kalman_filter(params, obs);
        Eigen::MatrixXd means(observations.rows(), d);
        for (Eigen::Index i = 0; i < observations.rows(); ++i)
          means.row(i) = res.means[static_cast<std::size_t>(i)].transpose();
        return std::make_pair(means, res.log_evidence);
      },
      py::arg("phase"), py::arg("dim"), py::arg("observations"),
      "Exact filtering means and log-evidence for the linear Gaussian model.");

  m.def(
      "ess",
      [](const Eigen::VectorXd& log_weights) {
        return pf::ess(pf::normalize_values(log_weights));
      },
      py::arg("log_weights"), "Effective sample size of unnormalised log-weights.");

  m.def(
      "multinomial_resample_indices",
      [](const Eigen::VectorXd& log_weights, std::uint64_t seed) {
        ad::Tape tape;
        pf::ParticleEnsemble ens;
        const auto n = log_weights.size();
        ens.states = tape.constant(Eigen::MatrixXd::Zero(n, 1));
        ens.log_w = tape.constant(log_weights);
        ens.log_w_tilde = ens.log_w;
        auto rng = make_rng(seed);
        pf::multinomial_resample(tape, ens, rng);
        return ens.ancestors;
      },
      py::arg("log_weights"), py::arg("seed"));

  py::class_<PyFlowModel>(m, "FlowModel")
      .def(py::init<int, int, int, int, double, std::uint64_t>(), py::arg("state_dim"),
           py::arg("obs_dim"), py::arg("depth") = 2, py::arg("hidden") = 32,
           py::arg("clamp") = 5.0, py::arg("seed") = 42)
      .def("dynamic_sample", &PyFlowModel::dynamic_sample, py::arg("x_prev"), py::arg("noise"))
      .def("dynamic_logpdf", &PyFlowModel::dynamic_logpdf, py::arg("x"), py::arg("x_prev"))
      .def("proposal_sample", &PyFlowModel::proposal_sample, py::arg("x_prev"), py::arg("y"),
           py::arg("noise"))
      .def("measurement_loglik", &PyFlowModel::measurement_loglik, py::arg("y"), py::arg("x"))
      .def("param_names", &PyFlowModel::param_names)
      .def("get_param", &PyFlowModel::get_param, py::arg("name"))
      .def("set_param", &PyFlowModel::set_param, py::arg("name"), py::arg("value"))
      .def("save", &PyFlowModel::save, py::arg("path"))
      .def("load", &PyFlowModel::load, py::arg("path"));

  m.def(
      "run_experiment",
      [](const std::string& config_path) {
        auto cfg = harness::load_config(config_path);
        auto summary = harness::run_experiment(cfg);
        py::dict out;
        for (const auto& ms : summary.methods) {
          py::dict row;
          row["mean"] = ms.mean;
          row["std"] = ms.stddev;
          row["per_seed"] = ms.per_seed_rmse;
          out[py::str(harness::method_key(ms.method))] = row;
        }
        return out;
      },
      py::arg("config_path"),
      "Full pipeline (pretrain + online runs) for a config file; returns RMSE summaries.");

  m.attr("__version__") = "0.1.0";
}
