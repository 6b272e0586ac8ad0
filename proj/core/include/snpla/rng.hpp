#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace snpla {

/// Deterministic RNG stream. All randomness in a run derives from a single
/// run seed through named streams ("simulate", "flow-init", "step2-noise",
/// "mcmc", "abc", ...), so independent pieces of a run stay reproducible
/// when other pieces change.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Derive a stream from (run_seed, stream name). Distinct names give
  /// statistically independent streams; the mapping is stable across runs.
  static RngStream named(std::uint64_t run_seed, std::string_view stream);

  /// Split off a numbered child stream (per-worker / per-replicate seeding).
  RngStream split(std::uint64_t index) const;

  double uniform() { return unif_(engine_); }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal() { return norm_(engine_); }

  Eigen::MatrixXd normal_matrix(int rows, int cols);
  Eigen::VectorXd uniform_vector(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
  std::uint64_t base_ = 0;  // remembers the derived seed for split()
};

}  // namespace snpla
