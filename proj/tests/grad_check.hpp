#pragma once

#include "fakeshield/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace fakeshield::testing {

// Largest relative error between the autodiff gradient and a central
// finite difference, over every entry of every input.
inline double max_grad_error(std::vector<nn::Var> inputs,
                             const std::function<nn::Var(const std::vector<nn::Var>&)>& f,
                             double h = 1e-6) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  f(inputs).backward();
  double worst = 0.0;
  for (auto& in : inputs) {
    const nn::Matrix analytic = in.grad();
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      double& x = in.mutable_value().data()[i];
      const double saved = x;
      x = saved + h;
      const double up = f(inputs).item();
      x = saved - h;
      const double down = f(inputs).item();
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max(1e-3, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace fakeshield::testing
