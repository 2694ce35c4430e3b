#include "fakeshield/nn/layers.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <stdexcept>

namespace fakeshield::nn {

double Rng::uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal() * stddev;
  return m;
}

LowRankAdapter::LowRankAdapter(int in, int out, int rank, double alpha, Rng& rng)
    : down(rng.normal_matrix(rank, in, 1.0 / std::sqrt(static_cast<double>(in))), true),
      up(Matrix::Zero(out, rank), true),
      scale(alpha / rank) {}

void LowRankAdapter::zero() {
  up.mutable_value().setZero();
}

bool AdapterConfig::targets(const std::string& layer_name) const {
  if (rank <= 0) return false;
  for (const auto& t : target_layers) {
    if (t == "*") return true;
    if (layer_name.size() >= t.size() &&
        layer_name.compare(layer_name.size() - t.size(), t.size(), t) == 0) {
      return true;
    }
  }
  return false;
}

Linear::Linear(int in, int out, Rng& rng, bool bias, double init_scale)
    : weight_(rng.normal_matrix(out, in, init_scale / std::sqrt(static_cast<double>(in)))) {
  if (bias) bias_ = Var(Matrix::Zero(1, out));
}

Var Linear::forward(const Var& x) const {
  Var y = matmul_nt(x, weight_);
  if (bias_.defined()) y = add_row(y, bias_);
  if (adapter_) {
    Var delta = matmul_nt(matmul_nt(x, adapter_->down), adapter_->up);
    y = add(y, scale(delta, adapter_->scale));
  }
  return y;
}

void Linear::attach_adapter(int rank, double alpha, Rng& rng) {
  if (rank <= 0) {
    adapter_.reset();
    return;
  }
  adapter_.emplace(in_features(), out_features(), rank, alpha, rng);
}

void Linear::collect_base(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight_});
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
}

void Linear::collect_adapter(const std::string& prefix, ParamList& out) const {
  if (!adapter_) return;
  out.push_back({prefix + ".lora_down", adapter_->down});
  out.push_back({prefix + ".lora_up", adapter_->up});
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng)
    : weight_(rng.normal_matrix(out, static_cast<Eigen::Index>(in) * kernel * kernel,
                                std::sqrt(2.0 / (in * kernel * kernel)))),
      bias_(Matrix::Zero(out, 1)),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {}

FeatureMap Conv2d::forward(const FeatureMap& x) const {
  Var cols = im2col(x.data, x.height, x.width, kernel_, stride_, pad_);
  Var y = matmul(weight_, cols);
  if (adapter_) {
    Var delta = matmul(adapter_->up, matmul(adapter_->down, cols));
    y = add(y, scale(delta, adapter_->scale));
  }
  y = add_col(y, bias_);
  return {y, (x.height + 2 * pad_ - kernel_) / stride_ + 1,
          (x.width + 2 * pad_ - kernel_) / stride_ + 1};
}

void Conv2d::attach_adapter(int rank, double alpha, Rng& rng) {
  if (rank <= 0) {
    adapter_.reset();
    return;
  }
  adapter_.emplace(static_cast<int>(weight_.cols()), static_cast<int>(weight_.rows()), rank,
                   alpha, rng);
}

void Conv2d::collect_base(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

void Conv2d::collect_adapter(const std::string& prefix, ParamList& out) const {
  if (!adapter_) return;
  out.push_back({prefix + ".lora_down", adapter_->down});
  out.push_back({prefix + ".lora_up", adapter_->up});
}

LayerNorm::LayerNorm(int width) : gain_(Matrix::Ones(1, width)), bias_(Matrix::Zero(1, width)) {}

void LayerNorm::collect_base(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain_});
  out.push_back({prefix + ".bias", bias_});
}

void set_trainable(const ParamList& params, bool trainable) {
  for (const auto& p : params) {
    Var v = p.var;
    v.set_requires_grad(trainable);
  }
}

std::string checksum(const ParamList& params) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    const Matrix& m = p.var.value();
    mix(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void load_values(const ParamList& params,
                 const std::vector<std::pair<std::string, Matrix>>& values) {
  std::map<std::string, const Matrix*> by_name;
  for (const auto& [name, m] : values) by_name[name] = &m;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint is missing tensor " + p.name);
    const Matrix& src = *it->second;
    Var v = p.var;
    if (src.rows() != v.rows() || src.cols() != v.cols()) {
      throw std::runtime_error("checkpoint tensor " + p.name + " has the wrong shape");
    }
    v.mutable_value() = src;
  }
}

std::vector<std::pair<std::string, Matrix>> snapshot(const ParamList& params) {
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.name, p.var.value());
  return out;
}

}  // namespace fakeshield::nn
