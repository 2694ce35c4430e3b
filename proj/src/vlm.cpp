#include "fakeshield/vlm.hpp"

#include "fakeshield/errors.hpp"

#include <cmath>

namespace fakeshield {

using nn::Matrix;
using nn::Var;

VisionEncoder::VisionEncoder(const VisionConfig& config, nn::Rng& rng)
    : config_(config),
      patch_embed_(3 * config.patch * config.patch, config.width, rng),
      mix_(config.width, config.width, rng) {
  if (config.image_size % config.patch != 0) {
    throw ConfigError("vision image_size must be a multiple of the patch size");
  }
}

Var VisionEncoder::forward(const Matrix& planar) const {
  const int s = config_.image_size;
  const int p = config_.patch;
  if (planar.rows() != 3 || planar.cols() != static_cast<Eigen::Index>(s) * s) {
    throw InputError("vision encoder expects a [3, image_size^2] input");
  }
  const int grid = s / p;
  Matrix patches(grid * grid, 3 * p * p);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const int row = gy * grid + gx;
      int col = 0;
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < p; ++y) {
          for (int x = 0; x < p; ++x) {
            patches(row, col++) = planar(c, (gy * p + y) * s + gx * p + x);
          }
        }
      }
    }
  }
  Var h = nn::gelu(patch_embed_.forward(Var(std::move(patches))));
  return mix_.forward(h);
}

void VisionEncoder::collect(nn::ParamList& out) const {
  patch_embed_.collect_base("vision.patch_embed", out);
  mix_.collect_base("vision.mix", out);
}

TinyLm::TinyLm(const LmConfig& config, int vocab_size, nn::Rng& rng)
    : config_(config),
      vocab_size_(vocab_size),
      tok_embed_(rng.normal_matrix(vocab_size, config.d_model, 1.0)),
      ln_f_(config.d_model),
      head_(config.d_model, vocab_size, rng, /*bias=*/false) {
  if (config.d_model % config.heads != 0) throw ConfigError("d_model must divide into heads");
  if ((config.d_model / config.heads) % 2 != 0) throw ConfigError("head width must be even for rotary positions");
  build_rotary_tables();
  // Output projections start small so the frozen random blocks perturb the
  // residual stream gently.
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.layers);
  for (int i = 0; i < config.layers; ++i) {
    Block b;
    b.ln1 = nn::LayerNorm(config.d_model);
    b.ln2 = nn::LayerNorm(config.d_model);
    b.q = nn::Linear(config.d_model, config.d_model, rng);
    b.k = nn::Linear(config.d_model, config.d_model, rng);
    b.v = nn::Linear(config.d_model, config.d_model, rng);
    b.o = nn::Linear(config.d_model, config.d_model, rng, true, residual_scale);
    b.up = nn::Linear(config.d_model, config.mlp_hidden, rng);
    b.down = nn::Linear(config.mlp_hidden, config.d_model, rng, true, residual_scale);
    blocks_.push_back(std::move(b));
  }
}

// Rotary positions: each head's channels form (i, i + dh/2) pairs rotated by
// angle pos * 10000^(-2i/dh). x' = x * cos + (x R) * sin, where R maps
// (a, b) -> (-b, a) per pair.
void TinyLm::build_rotary_tables() {
  const int d = config_.d_model;
  const int dh = d / config_.heads;
  const int half = dh / 2;
  nn::Matrix cos_t(config_.max_seq, d), sin_t(config_.max_seq, d);
  for (int pos = 0; pos < config_.max_seq; ++pos) {
    for (int h = 0; h < config_.heads; ++h) {
      for (int i = 0; i < half; ++i) {
        const double angle = pos * std::pow(10000.0, -2.0 * i / dh);
        for (int c : {h * dh + i, h * dh + half + i}) {
          cos_t(pos, c) = std::cos(angle);
          sin_t(pos, c) = std::sin(angle);
        }
      }
    }
  }
  nn::Matrix rot = nn::Matrix::Zero(d, d);
  for (int h = 0; h < config_.heads; ++h) {
    for (int i = 0; i < half; ++i) {
      const int a = h * dh + i;
      const int b = h * dh + half + i;
      rot(b, a) = -1.0;  // out[a] = -x[b]
      rot(a, b) = 1.0;   // out[b] = x[a]
    }
  }
  rope_cos_ = nn::Var(std::move(cos_t));
  rope_sin_ = nn::Var(std::move(sin_t));
  rope_rot_ = nn::Var(std::move(rot));
}

nn::Var TinyLm::rotate(const nn::Var& x, int start) const {
  const auto n = x.rows();
  return nn::add(nn::mul(x, nn::slice_rows(rope_cos_, start, n)),
                 nn::mul(nn::matmul(x, rope_rot_), nn::slice_rows(rope_sin_, start, n)));
}

namespace {

template <class F>
void for_each_linear(size_t index, F&& f, auto& block) {
  const std::string p = "layers." + std::to_string(index);
  f(p + ".attn.q", block.q);
  f(p + ".attn.k", block.k);
  f(p + ".attn.v", block.v);
  f(p + ".attn.o", block.o);
  f(p + ".mlp.up", block.up);
  f(p + ".mlp.down", block.down);
}

}  // namespace

void TinyLm::attach_adapters(const nn::AdapterConfig& adapters, nn::Rng& rng) {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    for_each_linear(
        i,
        [&](const std::string& name, nn::Linear& layer) {
          if (adapters.targets(name)) {
            layer.attach_adapter(adapters.rank, adapters.alpha, rng);
          } else {
            layer.attach_adapter(0, 1.0, rng);
          }
        },
        blocks_[i]);
  }
}

void TinyLm::zero_adapters() {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    for_each_linear(
        i,
        [](const std::string&, nn::Linear& layer) {
          if (auto* a = layer.adapter()) a->zero();
        },
        blocks_[i]);
  }
}

bool TinyLm::has_adapters() const { return !adapter_layer_names().empty(); }

std::vector<std::string> TinyLm::adapter_layer_names() const {
  std::vector<std::string> names;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    for_each_linear(
        i,
        [&](const std::string& name, const nn::Linear& layer) {
          if (layer.adapter()) names.push_back(name);
        },
        blocks_[i]);
  }
  return names;
}

Var TinyLm::embed(std::span<const int> ids) const { return nn::gather_rows(tok_embed_, ids); }

Var TinyLm::run(const Var& x, Cache* cache) const {
  const int start = cache ? cache->length : 0;
  const auto n = x.rows();
  if (start + n > config_.max_seq) {
    throw InputError("sequence of length " + std::to_string(start + n) +
                     " exceeds the language model context of " + std::to_string(config_.max_seq));
  }
  Var h = x;
  const int heads = config_.heads;
  const int dh = config_.d_model / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  if (cache && cache->keys.empty()) {
    cache->keys.resize(blocks_.size());
    cache->values.resize(blocks_.size());
  }
  for (size_t li = 0; li < blocks_.size(); ++li) {
    const Block& b = blocks_[li];
    Var a = b.ln1.forward(h);
    Var q = rotate(b.q.forward(a), start);
    Var k = rotate(b.k.forward(a), start);
    Var v = b.v.forward(a);
    if (cache) {
      if (cache->keys[li].defined()) {
        const Var ks[] = {cache->keys[li], k};
        const Var vs[] = {cache->values[li], v};
        k = nn::concat_rows(ks);
        v = nn::concat_rows(vs);
      }
      cache->keys[li] = k;
      cache->values[li] = v;
    }
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      Var qh = nn::slice_cols(q, hd * dh, dh);
      Var kh = nn::slice_cols(k, hd * dh, dh);
      Var vh = nn::slice_cols(v, hd * dh, dh);
      Var p = nn::softmax_rows(nn::scale(nn::matmul_nt(qh, kh), inv_sqrt), /*causal=*/true);
      outs.push_back(nn::matmul(p, vh));
    }
    h = nn::add(h, b.o.forward(nn::concat_cols(outs)));
    Var m = b.down.forward(nn::gelu(b.up.forward(b.ln2.forward(h))));
    h = nn::add(h, m);
  }
  if (cache) cache->length += static_cast<int>(n);
  return ln_f_.forward(h);
}

Var TinyLm::hidden(const Var& inputs) const { return run(inputs, nullptr); }

Var TinyLm::logits(const Var& hidden) const { return head_.forward(hidden); }

class TinyLm::CachedDecoder final : public Decoder {
 public:
  explicit CachedDecoder(const TinyLm& lm) : lm_(lm) {}

  nn::RowVector prefill(const Var& prompt) override {
    nn::NoGradGuard guard;
    return last_logits(lm_.run(prompt, &cache_));
  }

  nn::RowVector step(int token) override {
    nn::NoGradGuard guard;
    const int ids[] = {token};
    return last_logits(lm_.run(lm_.embed(ids), &cache_));
  }

  int context() const override { return lm_.config().max_seq; }

 private:
  nn::RowVector last_logits(const Var& hidden) {
    Var last = nn::slice_rows(hidden, hidden.rows() - 1, 1);
    return lm_.logits(last).value().row(0);
  }

  const TinyLm& lm_;
  Cache cache_;
};

std::unique_ptr<Decoder> TinyLm::decoder() const { return std::make_unique<CachedDecoder>(*this); }

void TinyLm::collect_base(nn::ParamList& out) const {
  out.push_back({"lm.tok_embed", tok_embed_});
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "lm.layers." + std::to_string(i);
    blocks_[i].ln1.collect_base(p + ".ln1", out);
    blocks_[i].ln2.collect_base(p + ".ln2", out);
    for_each_linear(
        i, [&](const std::string& name, const nn::Linear& layer) { layer.collect_base("lm." + name, out); },
        blocks_[i]);
  }
  ln_f_.collect_base("lm.ln_f", out);
  head_.collect_base("lm.head", out);
}

void TinyLm::collect_adapters(nn::ParamList& out) const {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    for_each_linear(
        i,
        [&](const std::string& name, const nn::Linear& layer) { layer.collect_adapter("lm." + name, out); },
        blocks_[i]);
  }
}

VlmBackbone VlmBackbone::create(const VisionConfig& vision, const LmConfig& lm,
                                const nn::AdapterConfig& adapter, uint64_t base_seed) {
  VlmBackbone b;
  b.vision = vision;
  b.lm_config = lm;
  b.adapter = adapter;
  b.base_seed = base_seed;
  nn::Rng base_rng(base_seed);
  b.encoder = VisionEncoder(vision, base_rng);
  b.lm = std::make_unique<TinyLm>(lm, b.tokenizer.vocab_size(), base_rng);
  // Trainable pieces draw from a separate stream so changing the adapter
  // shape never perturbs the base weights.
  nn::Rng train_rng(base_seed ^ 0x9e3779b97f4a7c15ULL);
  b.projector = nn::Linear(vision.width, lm.d_model, train_rng);
  b.lm->attach_adapters(adapter, train_rng);
  nn::set_trainable(b.frozen_params(), false);
  nn::set_trainable(b.trainable_params(), true);
  return b;
}

nn::ParamList VlmBackbone::frozen_params() const {
  nn::ParamList out;
  encoder.collect(out);
  lm->collect_base(out);
  return out;
}

nn::ParamList VlmBackbone::trainable_params() const {
  nn::ParamList out;
  projector.collect_base("projector", out);
  lm->collect_adapters(out);
  return out;
}

nlohmann::json VlmBackbone::describe() const {
  return {{"vision", vision}, {"lm", lm_config}, {"adapter", adapter}, {"base_seed", base_seed}};
}

VlmBackbone VlmBackbone::from_description(const nlohmann::json& j) {
  return create(j.at("vision").get<VisionConfig>(), j.at("lm").get<LmConfig>(),
                j.at("adapter").get<nn::AdapterConfig>(), j.at("base_seed").get<uint64_t>());
}

void to_json(nlohmann::json& j, const VisionConfig& c) {
  j = {{"image_size", c.image_size}, {"patch", c.patch}, {"width", c.width}};
}
void from_json(const nlohmann::json& j, VisionConfig& c) {
  c.image_size = j.value("image_size", c.image_size);
  c.patch = j.value("patch", c.patch);
  c.width = j.value("width", c.width);
}
void to_json(nlohmann::json& j, const LmConfig& c) {
  j = {{"d_model", c.d_model},       {"layers", c.layers},   {"heads", c.heads},
       {"mlp_hidden", c.mlp_hidden}, {"max_seq", c.max_seq}};
}
void from_json(const nlohmann::json& j, LmConfig& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.max_seq = j.value("max_seq", c.max_seq);
}

}  // namespace fakeshield

// Kept out of nn/ so the autodiff core stays free of JSON.
namespace fakeshield::nn {

void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = {{"rank", c.rank}, {"alpha", c.alpha}, {"target_layers", c.target_layers}};
}
void from_json(const nlohmann::json& j, AdapterConfig& c) {
  c.rank = j.value("rank", c.rank);
  c.alpha = j.value("alpha", c.alpha);
  c.target_layers = j.value("target_layers", c.target_layers);
}

}  // namespace fakeshield::nn
