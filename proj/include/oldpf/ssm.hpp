#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oldpf::ssm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Phase { Pretrain, Online };
enum class ModelKind { Lgssm, Tracking };

std::string to_string(Phase p);
std::string to_string(ModelKind k);
Phase phase_from_string(const std::string& s);
ModelKind kind_from_string(const std::string& s);

/// Ground-truth latent states x_0..x_T and observations y_1..y_T.
struct Trajectory {
  std::vector<VectorXd> states;        // T+1 entries
  std::vector<VectorXd> observations;  // T entries
  std::uint64_t seed = 0;

  int steps() const { return static_cast<int>(observations.size()); }
};

struct LgssmParams {
  MatrixXd theta1;  // d_x x d_x transition
  MatrixXd theta2;  // d_y x d_x observation
  double obs_noise_var = 0.1;

  int state_dim() const { return static_cast<int>(theta1.rows()); }
  int obs_dim() const { return static_cast<int>(theta2.rows()); }
};

/// Pretrain: theta1(i,j) = 0.42^(|i-j|+1), theta2 = diag(0.5).
/// Online:   theta1(i,j) = 0.2^(|i-j|+1),  theta2 = diag(10).
LgssmParams lgssm_params(Phase phase, int d);

Trajectory lgssm_simulate(const LgssmParams& params, int steps, std::mt19937_64& rng);

struct TrackingParams {
  double sampling_period = 5.0;
  double accel = 5.0;                // +5 pretrain, -5 online
  double process_noise_var = 1e-2;   // on u_t (per axis)
  double turn_rate_noise_var = 1e-4;
  double p0 = 1.0;
  double beta = 2.0;
  Eigen::Vector2d reference{2.0, 2.0};
  double mix_weight_near = 0.7;
  double mix_var_near = 4.0;
  double mix_weight_far = 0.3;
  double mix_var_far = 25.0;

  static constexpr int kStateDim = 5;  // (x1, x2, v1, v2, omega)
  static constexpr int kObsDim = 2;    // (received power, bearing)
};

TrackingParams tracking_params(Phase phase);

/// Coordinated-turn transition for the kinematic 4-vector; |omega| below
/// 1e-8 switches to the constant-velocity limit.
Eigen::Matrix4d tracking_transition_matrix(double omega, double sampling_period);

/// Range-power and bearing measurement of a position.
Eigen::Vector2d tracking_measure(const TrackingParams& params, const Eigen::Vector2d& pos);

Trajectory tracking_simulate(const TrackingParams& params, int steps, std::mt19937_64& rng,
                             const Eigen::Vector2d& init_pos = {0.0, 0.0},
                             const Eigen::Vector2d& init_vel = {55.0 / M_SQRT2,
                                                                55.0 / M_SQRT2});

struct DatasetMeta {
  ModelKind kind = ModelKind::Lgssm;
  Phase phase = Phase::Pretrain;
  int dim = 2;  // lgssm state dim; tracking ignores it
  int n_traj = 0;
  int steps = 0;
  std::uint64_t seed = 0;
};

/// Independent trajectories from per-trajectory derived seed streams.
std::vector<Trajectory> generate_dataset(const DatasetMeta& meta);

/// data.csv (traj, t, state dims, observation dims; y blank at t=0) plus
/// meta.json sidecar.
void save_dataset(const std::string& dir, const std::vector<Trajectory>& data,
                  const DatasetMeta& meta);
std::vector<Trajectory> load_dataset(const std::string& dir, DatasetMeta* meta_out = nullptr);

/// Per-dimension (min, max) of ground-truth states across a dataset; d x 2.
MatrixXd state_bounds(const std::vector<Trajectory>& data);

}  // namespace oldpf::ssm
