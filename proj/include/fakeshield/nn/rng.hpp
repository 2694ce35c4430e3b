#pragma once

#include "fakeshield/nn/tensor.hpp"

#include <cstdint>
#include <random>

namespace fakeshield::nn {

// Seeded generator with a platform-independent normal transform (the
// standard library leaves std::normal_distribution's algorithm unspecified).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double uniform();  // [0, 1)
  double normal();
  uint64_t next() { return engine_(); }
  // Uniform integer in [0, n).
  size_t below(size_t n) { return static_cast<size_t>(next() % n); }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fakeshield::nn
