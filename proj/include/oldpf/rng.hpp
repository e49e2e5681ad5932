#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace oldpf {

/// Splittable seeding: derives independent, reproducible RNG streams from a
/// master seed and a stream index (one stream per trajectory / per seed run).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 1));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream = 0) {
  return std::mt19937_64(derive_seed(master, stream));
}

/// Uniform on (0, 1]. Avoids 0 so log() below is safe.
inline double uniform01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

/// Stateless Box-Muller draw; two uniforms per normal, no cached spare, so the
/// consumption pattern is independent of call-site interleaving.
inline double std_normal(std::mt19937_64& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline Eigen::MatrixXd randn(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std_normal(rng);
  return m;
}

inline Eigen::VectorXd randn_vec(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = std_normal(rng);
  return v;
}

}  // namespace oldpf
