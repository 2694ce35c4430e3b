#include "fakeshield/nn/optim.hpp"

#include <cmath>
#include <numbers>

namespace fakeshield::nn {

Adam::Adam(ParamList params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void Adam::step(int accumulated) {
  ++t_;
  const double inv = 1.0 / std::max(accumulated, 1);
  double clip = 1.0;
  if (options_.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (p.var.has_grad()) sq += (p.var.grad() * inv).squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > options_.grad_clip) clip = options_.grad_clip / norm;
  }
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Var v = params_[i].var;
    if (!v.has_grad()) continue;
    const Matrix g = v.grad() * (inv * clip);
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    const auto mhat = m_[i].array() / bc1;
    const auto vhat = v_[i].array() / bc2;
    v.mutable_value().array() -= options_.lr * mhat / (vhat.sqrt() + options_.eps);
  }
}

double cosine_lr(double base, long step, long total, double warmup) {
  if (total <= 1) return base;
  const long warm = static_cast<long>(std::ceil(warmup * static_cast<double>(total)));
  if (step < warm) return base * static_cast<double>(step + 1) / static_cast<double>(warm);
  const double t = static_cast<double>(step - warm) / static_cast<double>(std::max(total - warm, 1L));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace fakeshield::nn
