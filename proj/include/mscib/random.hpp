#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

namespace mscib {

/// Seeded generator with portable uniform/normal draws and a serializable state.
///
/// Normals come from Box-Muller without a cached second value, so the whole
/// generator state is the engine state and can be checkpointed exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::string state() const;
  void set_state(const std::string& s);

  /// Deterministic child seed from a parent seed and a stream index.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mscib
