#ifndef CCIL_COMMON_HPP_
#define CCIL_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ccil {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr std::string_view kVersion = "ccil 0.1.0";

// Error taxonomy: every throwing operation maps its failure to one of these.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};
struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};
struct EnvError : std::runtime_error {
  explicit EnvError(const std::string& what) : std::runtime_error(what) {}
};

namespace rng {

using Engine = std::mt19937_64;

// Uniform in [0, 1) with exactly 53 random bits. Pinned formula so that a
// given seed produces the same stream on every standard library.
inline double uniform(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& g, double lo, double hi) {
  return lo + (hi - lo) * uniform(g);
}

// Box-Muller without state; draws two variates and discards one.
inline double normal(Engine& g) {
  const double u1 = 1.0 - uniform(g);  // (0, 1]
  const double u2 = uniform(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline double normal(Engine& g, double mean, double stddev) {
  return mean + stddev * normal(g);
}

}  // namespace rng

// FNV-1a, used for derived sub-seeds and config fingerprints.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Sub-seed derivation: every pipeline stage draws its RNG seed from
// fnv1a64 over a canonical "master|env|size|seed|stage" string. Stages that
// must be paired across arms (policy training, evaluation) share a stage
// name so that identical training data implies identical results.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view env,
                                 int n_traj, std::uint64_t seed_index,
                                 std::string_view stage) {
  std::string key;
  key.reserve(64);
  key += "ccil|m=";
  key += std::to_string(master);
  key += "|env=";
  key += env;
  key += "|n=";
  key += std::to_string(n_traj);
  key += "|s=";
  key += std::to_string(seed_index);
  key += "|stage=";
  key += stage;
  return fnv1a64(key);
}

}  // namespace ccil

#endif  // CCIL_COMMON_HPP_
