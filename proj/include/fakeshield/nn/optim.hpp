#pragma once

#include "fakeshield/nn/layers.hpp"

#include <vector>

namespace fakeshield::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

class Adam {
 public:
  Adam(ParamList params, AdamOptions options);

  // Applies one update from the accumulated gradients divided by
  // `accumulated` (the number of backward passes since the last step).
  void step(int accumulated = 1);
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }

  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

// Linear warm-up over the first `warmup` fraction of steps, then cosine decay
// to zero at `total`.
double cosine_lr(double base, long step, long total, double warmup = 0.03);

}  // namespace fakeshield::nn
