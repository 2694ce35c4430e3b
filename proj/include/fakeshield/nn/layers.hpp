#pragma once

#include "fakeshield/nn/ops.hpp"
#include "fakeshield/nn/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fakeshield::nn {

struct NamedParam {
  std::string name;
  Var var;
};

using ParamList = std::vector<NamedParam>;

// Low-rank additive delta: W' = W + (alpha / rank) * B * A. B starts at zero,
// so a freshly attached adapter leaves the layer's output untouched.
struct LowRankAdapter {
  Var down;  // A: [rank, in]
  Var up;    // B: [out, rank]
  double scale = 1.0;

  LowRankAdapter(int in, int out, int rank, double alpha, Rng& rng);
  int rank() const { return static_cast<int>(down.rows()); }
  void zero();
};

struct AdapterConfig {
  int rank = 0;
  double alpha = 1.0;
  // Layer-name suffixes that receive adapters; "*" matches every eligible layer.
  std::vector<std::string> target_layers{"*"};

  bool targets(const std::string& layer_name) const;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng, bool bias = true, double init_scale = 1.0);

  Var forward(const Var& x) const;  // x: [n, in] -> [n, out]

  void attach_adapter(int rank, double alpha, Rng& rng);
  LowRankAdapter* adapter() { return adapter_ ? &*adapter_ : nullptr; }
  const LowRankAdapter* adapter() const { return adapter_ ? &*adapter_ : nullptr; }

  void collect_base(const std::string& prefix, ParamList& out) const;
  void collect_adapter(const std::string& prefix, ParamList& out) const;

  int in_features() const { return static_cast<int>(weight_.cols()); }
  int out_features() const { return static_cast<int>(weight_.rows()); }

 private:
  Var weight_;  // [out, in]
  Var bias_;    // [1, out] or undefined
  std::optional<LowRankAdapter> adapter_;
};

// A feature map stored as [channels, height*width].
struct FeatureMap {
  Var data;
  int height = 0;
  int width = 0;
  int channels() const { return static_cast<int>(data.rows()); }
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng);

  FeatureMap forward(const FeatureMap& x) const;

  void attach_adapter(int rank, double alpha, Rng& rng);
  LowRankAdapter* adapter() { return adapter_ ? &*adapter_ : nullptr; }
  const LowRankAdapter* adapter() const { return adapter_ ? &*adapter_ : nullptr; }

  void collect_base(const std::string& prefix, ParamList& out) const;
  void collect_adapter(const std::string& prefix, ParamList& out) const;

 private:
  Var weight_;  // [out, in*k*k]
  Var bias_;    // [out, 1]
  int kernel_ = 3;
  int stride_ = 1;
  int pad_ = 1;
  std::optional<LowRankAdapter> adapter_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int width);
  Var forward(const Var& x) const { return layer_norm(x, gain_, bias_); }
  void collect_base(const std::string& prefix, ParamList& out) const;

 private:
  Var gain_;
  Var bias_;
};

// Marks every parameter in the list as trainable or frozen.
void set_trainable(const ParamList& params, bool trainable);

// Order-sensitive digest of parameter values; used to prove frozen weights
// were left untouched by training.
std::string checksum(const ParamList& params);

// Copies values by name; throws on a missing name or a shape mismatch.
void load_values(const ParamList& params, const std::vector<std::pair<std::string, Matrix>>& values);
std::vector<std::pair<std::string, Matrix>> snapshot(const ParamList& params);

}  // namespace fakeshield::nn
