#include "oldpf/ssm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "oldpf/rng.hpp"

namespace oldpf::ssm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Phase p) { return p == Phase::Pretrain ? "pretrain" : "online"; }
std::string to_string(ModelKind k) { return k == ModelKind::Lgssm ? "lgssm" : "tracking"; }

Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::Pretrain;
  if (s == "online") return Phase::Online;
  throw std::invalid_argument("unknown phase: " + s);
}

ModelKind kind_from_string(const std::string& s) {
  if (s == "lgssm") return ModelKind::Lgssm;
  if (s == "tracking") return ModelKind::Tracking;
  throw std::invalid_argument("unknown model kind: " + s);
}

LgssmParams lgssm_params(Phase phase, int d) {
  if (d < 1) throw std::invalid_argument("lgssm_params: dimension must be >= 1");
  const double base = phase == Phase::Pretrain ? 0.42 : 0.2;
  const double diag2 = phase == Phase::Pretrain ? 0.5 : 10.0;
  LgssmParams p;
  p.theta1.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) p.theta1(i, j) = std::pow(base, std::abs(i - j) + 1);
  p.theta2 = diag2 * MatrixXd::Identity(d, d);
  return p;
}

Trajectory lgssm_simulate(const LgssmParams& params, int steps, std::mt19937_64& rng) {
  if (steps < 1) throw std::invalid_argument("lgssm_simulate: steps must be >= 1");
  const int d = params.state_dim();
  const double obs_std = std::sqrt(params.obs_noise_var);
  Trajectory traj;
  traj.states.reserve(steps + 1);
  traj.observations.reserve(steps);
  VectorXd x = randn_vec(rng, d);
  traj.states.push_back(x);
  for (int t = 1; t <= steps; ++t) {
    x = params.theta1 * x + randn_vec(rng, d);
    traj.states.push_back(x);
    traj.observations.push_back(params.theta2 * x + obs_std * randn_vec(rng, params.obs_dim()));
  }
  return traj;
}

TrackingParams tracking_params(Phase phase) {
  TrackingParams p;
  p.accel = phase == Phase::Pretrain ? 5.0 : -5.0;
  return p;
}

Eigen::Matrix4d tracking_transition_matrix(double omega, double sampling_period) {
  if (!std::isfinite(omega)) throw std::invalid_argument("transition matrix: omega not finite");
  const double ts = sampling_period;
  Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
  double swt, cwt1;  // sin(w Ts)/w and (1 - cos(w Ts))/w
  const double wt = omega * ts;
  if (std::abs(omega) < 1e-8) {
    swt = ts;
    cwt1 = 0.0;
  } else {
    swt = std::sin(wt) / omega;
    cwt1 = (1.0 - std::cos(wt)) / omega;
  }
  a(0, 2) = swt;
  a(0, 3) = -cwt1;
  a(1, 2) = cwt1;
  a(1, 3) = swt;
  a(2, 2) = std::cos(wt);
  a(2, 3) = -std::sin(wt);
  a(3, 2) = std::sin(wt);
  a(3, 3) = std::cos(wt);
  return a;
}

Eigen::Vector2d tracking_measure(const TrackingParams& params, const Eigen::Vector2d& pos) {
  const Eigen::Vector2d diff = pos - params.reference;
  const double range = diff.norm();
  if (range < 1e-9)
    throw std::domain_error("tracking measurement: target at the reference point");
  Eigen::Vector2d y;
  y(0) = 10.0 * std::log10(params.p0 / std::pow(range, params.beta));
  y(1) = std::atan2(diff(1), diff(0));
  if (y(1) == -M_PI) y(1) = M_PI;  // bearing kept in (-pi, pi]
  return y;
}

Trajectory tracking_simulate(const TrackingParams& params, int steps, std::mt19937_64& rng,
                             const Eigen::Vector2d& init_pos, const Eigen::Vector2d& init_vel) {
  if (steps < 1) throw std::invalid_argument("tracking_simulate: steps must be >= 1");
  const double ts = params.sampling_period;
  Eigen::Matrix<double, 4, 2> b;
  b << ts * ts / 2, 0, 0, ts * ts / 2, ts, 0, 0, ts;
  const double u_std = std::sqrt(params.process_noise_var);
  const double w_std = std::sqrt(params.turn_rate_noise_var);

  auto speed_of = [](const Eigen::Vector4d& kin) {
    return std::hypot(kin(2), kin(3));
  };

  Trajectory traj;
  traj.states.reserve(steps + 1);
  traj.observations.reserve(steps);

  Eigen::Vector4d kin;
  kin << init_pos(0), init_pos(1), init_vel(0), init_vel(1);
  const double s0 = speed_of(kin);
  if (s0 < 1e-6) throw std::domain_error("tracking: initial speed too small for a turn rate");
  double omega = params.accel / s0;

  VectorXd state(TrackingParams::kStateDim);
  state << kin, omega;
  traj.states.push_back(state);

  for (int t = 1; t <= steps; ++t) {
    const double speed = speed_of(kin);
    if (speed < 1e-6)
      throw std::domain_error("tracking: speed below 1e-6 at step " + std::to_string(t) +
                              "; turn rate undefined");
    const double omega_next = params.accel / speed + w_std * std_normal(rng);
    const Eigen::Vector2d u(u_std * std_normal(rng), u_std * std_normal(rng));
    kin = tracking_transition_matrix(omega, ts) * kin + b * u;
    omega = omega_next;
    state << kin, omega;
    traj.states.push_back(state);

    Eigen::Vector2d y = tracking_measure(params, kin.head<2>());
    const double comp = uniform01(rng);
    const double v_std =
        comp <= params.mix_weight_near ? std::sqrt(params.mix_var_near)
                                       : std::sqrt(params.mix_var_far);
    y(0) += v_std * std_normal(rng);
    y(1) += v_std * std_normal(rng);
    traj.observations.push_back(y);
  }
  return traj;
}

std::vector<Trajectory> generate_dataset(const DatasetMeta& meta) {
  if (meta.n_traj < 1) throw std::invalid_argument("generate_dataset: n_traj must be >= 1");
  if (meta.steps < 1) throw std::invalid_argument("generate_dataset: steps must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(meta.n_traj);
  for (int k = 0; k < meta.n_traj; ++k) {
    auto rng = make_rng(meta.seed, static_cast<std::uint64_t>(k));
    Trajectory traj;
    if (meta.kind == ModelKind::Lgssm) {
      traj = lgssm_simulate(lgssm_params(meta.phase, meta.dim), meta.steps, rng);
    } else {
      traj = tracking_simulate(tracking_params(meta.phase), meta.steps, rng);
    }
    traj.seed = derive_seed(meta.seed, static_cast<std::uint64_t>(k));
    out.push_back(std::move(traj));
  }
  return out;
}

void save_dataset(const std::string& dir, const std::vector<Trajectory>& data,
                  const DatasetMeta& meta) {
  fs::create_directories(dir);
  const int d_x = static_cast<int>(data.front().states.front().size());
  const int d_y = static_cast<int>(data.front().observations.front().size());

  std::ofstream csv(fs::path(dir) / "data.csv");
  if (!csv) throw std::runtime_error("save_dataset: cannot write to " + dir);
  csv << "traj,t";
  for (int j = 0; j < d_x; ++j) csv << ",x" << j;
  for (int j = 0; j < d_y; ++j) csv << ",y" << j;
  csv << "\n";
  csv.precision(17);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& traj = data[k];
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
      csv << k << "," << t;
      for (int j = 0; j < d_x; ++j) csv << "," << traj.states[t](j);
      for (int j = 0; j < d_y; ++j) {
        csv << ",";
        if (t >= 1) csv << traj.observations[t - 1](j);
      }
      csv << "\n";
    }
  }

  json j;
  j["version"] = 1;
  j["kind"] = to_string(meta.kind);
  j["phase"] = to_string(meta.phase);
  j["dim"] = meta.dim;
  j["n_traj"] = meta.n_traj;
  j["steps"] = meta.steps;
  j["seed"] = meta.seed;
  j["state_dim"] = d_x;
  j["obs_dim"] = d_y;
  std::ofstream mf(fs::path(dir) / "meta.json");
  mf << j.dump(2) << "\n";
}

std::vector<Trajectory> load_dataset(const std::string& dir, DatasetMeta* meta_out) {
  std::ifstream mf(fs::path(dir) / "meta.json");
  if (!mf) throw std::runtime_error("load_dataset: missing meta.json in " + dir);
  json j;
  mf >> j;
  const int d_x = j.at("state_dim").get<int>();
  const int d_y = j.at("obs_dim").get<int>();
  DatasetMeta meta;
  meta.kind = kind_from_string(j.at("kind").get<std::string>());
  meta.phase = phase_from_string(j.at("phase").get<std::string>());
  meta.dim = j.at("dim").get<int>();
  meta.n_traj = j.at("n_traj").get<int>();
  meta.steps = j.at("steps").get<int>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  if (meta_out) *meta_out = meta;

  std::ifstream csv(fs::path(dir) / "data.csv");
  if (!csv) throw std::runtime_error("load_dataset: missing data.csv in " + dir);
  std::string line;
  std::getline(csv, line);  // header
  std::vector<Trajectory> out(meta.n_traj);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const auto k = std::stoul(cell);
    std::getline(ss, cell, ',');
    const auto t = std::stoul(cell);
    VectorXd x(d_x);
    for (int i = 0; i < d_x; ++i) {
      std::getline(ss, cell, ',');
      x(i) = std::stod(cell);
    }
    auto& traj = out.at(k);
    if (traj.states.size() != t)
      throw std::runtime_error("load_dataset: rows out of order in data.csv");
    traj.states.push_back(x);
    if (t >= 1) {
      VectorXd y(d_y);
      for (int i = 0; i < d_y; ++i) {
        std::getline(ss, cell, ',');
        y(i) = std::stod(cell);
      }
      traj.observations.push_back(y);
    }
  }
  for (auto& traj : out) traj.seed = meta.seed;
  return out;
}

MatrixXd state_bounds(const std::vector<Trajectory>& data) {
  if (data.empty()) throw std::invalid_argument("state_bounds: empty dataset");
  const int d = static_cast<int>(data.front().states.front().size());
  MatrixXd bounds(d, 2);
  bounds.col(0).setConstant(std::numeric_limits<double>::infinity());
  bounds.col(1).setConstant(-std::numeric_limits<double>::infinity());
  for (const auto& traj : data)
    for (const auto& x : traj.states)
      for (int j = 0; j < d; ++j) {
        bounds(j, 0) = std::min(bounds(j, 0), x(j));
        bounds(j, 1) = std::max(bounds(j, 1), x(j));
      }
  return bounds;
}

}  // namespace oldpf::ssm
