#pragma once

// Desk-scale vision-language backbone shared by the detector and the
// tamper-comprehension encoder: a frozen patch encoder, a trainable linear
// projector into the language model width, and a frozen decoder-only
// transformer that takes low-rank adapters.

#include "fakeshield/nn/layers.hpp"
#include "fakeshield/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <vector>

namespace fakeshield {

struct VisionConfig {
  int image_size = 64;
  int patch = 16;
  int width = 64;

  int n_tokens() const { return (image_size / patch) * (image_size / patch); }
};

struct LmConfig {
  int d_model = 64;
  int layers = 4;
  int heads = 4;
  int mlp_hidden = 256;
  int max_seq = 640;
};

class VisionEncoder {
 public:
  VisionEncoder() = default;
  VisionEncoder(const VisionConfig& config, nn::Rng& rng);

  // planar: [3, image_size^2] -> patch features [n_tokens, width]
  nn::Var forward(const nn::Matrix& planar) const;
  const VisionConfig& config() const { return config_; }
  void collect(nn::ParamList& out) const;

 private:
  VisionConfig config_;
  nn::Linear patch_embed_;
  nn::Linear mix_;
};

// Autoregressive decoding interface. Implementations keep whatever cache
// they need between calls; one instance serves one generation.
class Decoder {
 public:
  virtual ~Decoder() = default;
  // Consumes the prompt embeddings [n, d]; returns next-token logits.
  virtual nn::RowVector prefill(const nn::Var& prompt) = 0;
  virtual nn::RowVector step(int token) = 0;
  // Total positions (prompt plus output) the decoder can hold; 0 is unbounded.
  virtual int context() const { return 0; }
};

class TinyLm {
 public:
  TinyLm(const LmConfig& config, int vocab_size, nn::Rng& rng);

  void attach_adapters(const nn::AdapterConfig& adapters, nn::Rng& rng);
  void zero_adapters();
  bool has_adapters() const;

  nn::Var embed(std::span<const int> ids) const;
  // Last-layer states [T, d] (after the final norm) for a causal pass.
  nn::Var hidden(const nn::Var& inputs) const;
  nn::Var logits(const nn::Var& hidden) const;

  std::unique_ptr<Decoder> decoder() const;

  const LmConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  void collect_base(nn::ParamList& out) const;
  void collect_adapters(nn::ParamList& out) const;
  std::vector<std::string> adapter_layer_names() const;

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    nn::Linear q, k, v, o, up, down;
  };
  struct Cache {
    std::vector<nn::Var> keys, values;
    int length = 0;
  };
  class CachedDecoder;

  void build_rotary_tables();
  nn::Var rotate(const nn::Var& x, int start) const;
  // Runs every block over `x` (new positions), extending `cache` if given.
  nn::Var run(const nn::Var& x, Cache* cache) const;

  LmConfig config_;
  int vocab_size_;
  nn::Var tok_embed_;
  // Constant rotary position tables [max_seq, d_model] and pair rotation.
  nn::Var rope_cos_, rope_sin_, rope_rot_;
  std::vector<Block> blocks_;
  nn::LayerNorm ln_f_;
  nn::Linear head_;
};

// Encoder + projector + language model + tokenizer.
struct VlmBackbone {
  VisionConfig vision;
  LmConfig lm_config;
  nn::AdapterConfig adapter;
  uint64_t base_seed = 0;

  ByteTokenizer tokenizer;
  VisionEncoder encoder;
  nn::Linear projector;
  std::unique_ptr<TinyLm> lm;

  // Base weights are a pure function of (configs, base_seed).
  static VlmBackbone create(const VisionConfig& vision, const LmConfig& lm,
                            const nn::AdapterConfig& adapter, uint64_t base_seed);

  // Frozen weights: encoder + language model base.
  nn::ParamList frozen_params() const;
  // Trained weights: projector + adapters.
  nn::ParamList trainable_params() const;

  nlohmann::json describe() const;
  static VlmBackbone from_description(const nlohmann::json& j);
};

void to_json(nlohmann::json& j, const VisionConfig& c);
void from_json(const nlohmann::json& j, VisionConfig& c);
void to_json(nlohmann::json& j, const LmConfig& c);
void from_json(const nlohmann::json& j, LmConfig& c);

}  // namespace fakeshield

namespace fakeshield::nn {
void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);
}  // namespace fakeshield::nn
