#include "fakeshield/locator/locator.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/log.hpp"
#include "fakeshield/nn/checkpoint.hpp"
#include "fakeshield/nn/optim.hpp"

#include <algorithm>
#include <numeric>

namespace fakeshield::locator {

using nn::Matrix;
using nn::Var;

std::string_view mflm_inputs_name(MflmInputs m) {
  switch (m) {
    case MflmInputs::odet_img: return "O_det+T_img";
    case MflmInputs::ins_img: return "T_ins+T_img";
    case MflmInputs::ins_tag: return "T_ins+T_tag";
    case MflmInputs::ins_tag_img: return "T_ins+T_tag+T_img";
  }
  return "?";
}

MflmInputs parse_mflm_inputs(std::string_view name) {
  for (auto m : {MflmInputs::odet_img, MflmInputs::ins_img, MflmInputs::ins_tag, MflmInputs::ins_tag_img}) {
    if (mflm_inputs_name(m) == name) return m;
  }
  throw ConfigError("unknown mflm_inputs value: " + std::string(name));
}

bool uses_image(MflmInputs m) { return m != MflmInputs::ins_tag; }
bool uses_tag(MflmInputs m) { return m == MflmInputs::ins_tag || m == MflmInputs::ins_tag_img; }

namespace {

std::string with_suffix(const std::string& text, std::string_view suffix) {
  if (suffix.empty()) return text;
  return text + " " + std::string(suffix);
}

}  // namespace

std::vector<int> tcm_prompt_ids(const Tokenizer& tok, MflmInputs inputs, const TcmContext& ctx, int n_image,
                                std::string_view suffix) {
  std::vector<int> ids{tok.bos_id()};
  if (uses_image(inputs)) ids.insert(ids.end(), static_cast<size_t>(n_image), tok.image_id());
  if (uses_tag(inputs)) {
    if (!ctx.tag) throw std::invalid_argument("comprehension input needs a domain tag");
    const auto t = tok.encode(ctx.tag->sentence);
    ids.insert(ids.end(), t.begin(), t.end());
  }
  const std::string& text = inputs == MflmInputs::odet_img ? ctx.detection_text : ctx.instruction;
  if (text.empty()) throw std::invalid_argument("comprehension input text is empty");
  const auto t = tok.encode(with_suffix(text, suffix));
  ids.insert(ids.end(), t.begin(), t.end());
  ids.push_back(tok.sep_id());
  return ids;
}

Var tcm_prompt_embeddings(const VlmBackbone& tcm, MflmInputs inputs, const TcmContext& ctx, std::string_view suffix) {
  const int n_image = uses_image(inputs) ? tcm.vision.n_tokens() : 0;
  if (uses_image(inputs) && !ctx.image) throw std::invalid_argument("comprehension input needs image tokens");
  const auto ids = tcm_prompt_ids(tcm.tokenizer, inputs, ctx, n_image, suffix);
  const std::span<const int> all(ids);
  if (!uses_image(inputs)) return tcm.lm->embed(all);
  const Var parts[] = {tcm.lm->embed(all.subspan(0, 1)), ctx.image->tokens,
                       tcm.lm->embed(all.subspan(1 + static_cast<size_t>(n_image)))};
  return nn::concat_rows(parts);
}

SegProjector::SegProjector(int in, int out, nn::Rng& rng) : l1_(in, in, rng), l2_(in, out, rng) {}

Var SegProjector::forward(const Var& x) const { return l2_.forward(nn::relu(l1_.forward(x))); }

void SegProjector::collect(const std::string& prefix, nn::ParamList& out) const {
  l1_.collect_base(prefix + ".l1", out);
  l2_.collect_base(prefix + ".l2", out);
}

Var extract_seg_embedding(const Var& states, std::span<const int> ids, int seg_id,
                          const std::function<Var(const Var&)>& mlp) {
  if (states.rows() != static_cast<Eigen::Index>(ids.size())) {
    throw std::invalid_argument("state rows do not match the token count");
  }
  const auto it = std::find(ids.begin(), ids.end(), seg_id);
  if (it == ids.end()) throw std::invalid_argument("no <SEG> token in the sequence");
  return mlp(nn::slice_rows(states, it - ids.begin(), 1));
}

Var extract_seg_embedding(const Var& states, std::span<const int> ids, int seg_id, const SegProjector& mlp) {
  return extract_seg_embedding(states, ids, seg_id, [&](const Var& x) { return mlp.forward(x); });
}

SegBackbone::SegBackbone(const SegConfig& config, const nn::AdapterConfig& adapter, uint64_t seed)
    : config_(config) {
  if (config.channels.size() != 3) throw ConfigError("segmentation encoder needs exactly three levels");
  if (config.mask_size % 8 != 0) throw ConfigError("mask_size must be a multiple of 8");
  nn::Rng base(seed);
  int in = 3;
  for (int c : config.channels) {
    enc_.emplace_back(in, c, 3, 1, 1, base);
    in = c;
  }
  nn::Rng dec(seed ^ 0x5eedULL);
  const int d = config.decoder_width;
  dec_in_ = nn::Conv2d(in + 2, d, 1, 1, 0, dec);
  film_gain_ = nn::Linear(config.prompt_width, d, dec, true, 0.1);
  film_shift_ = nn::Linear(config.prompt_width, d, dec);
  dec_mix_ = nn::Conv2d(d, d, 3, 1, 1, dec);
  dec_fuse_ = nn::Conv2d(d + config.channels[0], d, 1, 1, 0, dec);
  hyper_ = nn::Linear(config.prompt_width, d, dec);
  out_bias_ = Var(Matrix::Zero(1, 1));
  nn::Rng ad(seed ^ 0xada97ULL);
  for (size_t i = 0; i < enc_.size(); ++i) {
    const std::string name = "seg.enc." + std::to_string(i);
    if (adapter.targets(name)) enc_[i].attach_adapter(adapter.rank, adapter.alpha, ad);
  }
  nn::set_trainable(frozen_params(), false);
  nn::set_trainable(adapter_params(), true);
  nn::set_trainable(decoder_params(), true);
}

SegBackbone::Encoded SegBackbone::encode(const Matrix& planar) const {
  const int s = config_.mask_size;
  if (planar.rows() != 3 || planar.cols() != static_cast<Eigen::Index>(s) * s) {
    throw InputError("segmentation encoder expects a [3, mask_size^2] input");
  }
  Encoded out;
  nn::FeatureMap x{Var(planar), s, s};
  for (size_t i = 0; i < enc_.size(); ++i) {
    x = enc_[i].forward(x);
    x.data = nn::relu(x.data);
    if (i == 0) out.skip = x;
    x.data = nn::max_pool2(x.data, x.height, x.width);
    x.height /= 2;
    x.width /= 2;
  }
  Matrix coords(2, static_cast<Eigen::Index>(x.height) * x.width);
  for (int y = 0; y < x.height; ++y) {
    for (int c = 0; c < x.width; ++c) {
      coords(0, y * x.width + c) = (c + 0.5) / x.width * 2.0 - 1.0;
      coords(1, y * x.width + c) = (y + 0.5) / x.height * 2.0 - 1.0;
    }
  }
  const Var parts[] = {x.data, Var(std::move(coords))};
  out.mid = {nn::concat_rows(parts), x.height, x.width};
  return out;
}

Var SegBackbone::decode(const Encoded& e, const Var& prompt) const {
  if (prompt.rows() != 1 || prompt.cols() != config_.prompt_width) {
    throw ConfigError("segmentation prompt must be [1, " + std::to_string(config_.prompt_width) + "]");
  }
  nn::FeatureMap h = dec_in_.forward(e.mid);
  const Var gain = nn::transpose(film_gain_.forward(prompt));
  const Var shift = nn::transpose(film_shift_.forward(prompt));
  const Var ones(Matrix::Ones(gain.rows(), 1));
  h.data = nn::relu(nn::add_col(nn::mul_col(h.data, nn::add(gain, ones)), shift));
  h = dec_mix_.forward(h);
  h.data = nn::relu(h.data);
  const int s = config_.mask_size;
  const Var up = nn::upsample_bilinear(h.data, h.height, h.width, s, s);
  const Var parts[] = {up, e.skip.data};
  nn::FeatureMap f = dec_fuse_.forward({nn::concat_rows(parts), s, s});
  const Var features = nn::relu(f.data);
  return nn::add_col(nn::matmul(hyper_.forward(prompt), features), out_bias_);
}

nn::ParamList SegBackbone::frozen_params() const {
  nn::ParamList out;
  for (size_t i = 0; i < enc_.size(); ++i) enc_[i].collect_base("seg.enc." + std::to_string(i), out);
  return out;
}

nn::ParamList SegBackbone::adapter_params() const {
  nn::ParamList out;
  for (size_t i = 0; i < enc_.size(); ++i) enc_[i].collect_adapter("seg.enc." + std::to_string(i), out);
  return out;
}

nn::ParamList SegBackbone::decoder_params() const {
  nn::ParamList out;
  dec_in_.collect_base("seg.dec.in", out);
  film_gain_.collect_base("seg.dec.film_gain", out);
  film_shift_.collect_base("seg.dec.film_shift", out);
  dec_mix_.collect_base("seg.dec.mix", out);
  dec_fuse_.collect_base("seg.dec.fuse", out);
  hyper_.collect_base("seg.dec.hyper", out);
  out.push_back({"seg.dec.out_bias", out_bias_});
  return out;
}

void SegBackbone::zero_adapters() {
  for (auto& c : enc_) {
    if (auto* a = c.adapter()) a->zero();
  }
}

TamperMask TamperMask::from_probs(Matrix probs, double threshold) {
  TamperMask m;
  m.threshold = threshold;
  m.binary = (probs.array() >= threshold).cast<double>().matrix();
  m.probs = std::move(probs);
  return m;
}

TamperMask TamperMask::empty(int height, int width, double threshold) {
  return from_probs(Matrix::Zero(height, width), threshold);
}

Bytes mask_png(const TamperMask& mask) {
  cv::Mat m(static_cast<int>(mask.binary.rows()), static_cast<int>(mask.binary.cols()), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) m.at<uint8_t>(y, x) = mask.binary(y, x) > 0.5 ? 255 : 0;
  }
  return encode_png(m);
}

Bytes probability_png(const TamperMask& mask) {
  cv::Mat m(static_cast<int>(mask.probs.rows()), static_cast<int>(mask.probs.cols()), CV_16UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      m.at<uint16_t>(y, x) = static_cast<uint16_t>(std::lround(std::clamp(mask.probs(y, x), 0.0, 1.0) * 65535.0));
    }
  }
  return encode_png(m);
}

TamperMask mask_from_logits(const Var& logits, int mask_size, int height, int width, double threshold) {
  nn::NoGradGuard guard;
  // Upsampling probabilities rather than logits keeps saturated logits finite.
  Var p = nn::sigmoid(logits);
  if (height != mask_size || width != mask_size) p = nn::upsample_bilinear(p, mask_size, mask_size, height, width);
  const Matrix probs = p.value();
  return TamperMask::from_probs(Eigen::Map<const Matrix>(probs.data(), height, width), threshold);
}

TamperMask localize(const SegBackbone& seg, const cv::Mat& rgb, const Var& prompt, double threshold) {
  if (rgb.empty()) throw InputError("empty image");
  nn::NoGradGuard guard;
  const int s = seg.config().mask_size;
  const auto enc = seg.encode(image_to_planar(rgb, s));
  return mask_from_logits(seg.decode(enc, prompt), s, rgb.rows, rgb.cols, threshold);
}

Var dice_loss(const Var& probs, const Matrix& gt, double eps) {
  if (probs.rows() != gt.rows() || probs.cols() != gt.cols()) {
    throw std::invalid_argument("dice loss: prediction and mask shapes differ");
  }
  return nn::soft_dice(probs, gt, eps);
}

LocLossParts localization_loss(const Var& txt_logits, std::span<const int> targets, int seg_id, const Var& mask_logits,
                               const Matrix& gt_mask, double alpha, double beta, double dice_eps) {
  if (alpha < 0 || beta < 0) throw std::invalid_argument("loss weights must be non-negative");
  if (std::find(targets.begin(), targets.end(), seg_id) == targets.end()) {
    throw std::invalid_argument("ground-truth prompt has no <SEG> token");
  }
  LocLossParts parts;
  Var ce = nn::cross_entropy(txt_logits, targets);
  Var bce = nn::bce_with_logits(mask_logits, gt_mask);
  Var dice = dice_loss(nn::sigmoid(mask_logits), gt_mask, dice_eps);
  parts.ce = ce.item();
  parts.bce_weighted = alpha * bce.item();
  parts.dice_weighted = beta * dice.item();
  parts.total = nn::add(nn::add(ce, nn::scale(bce, alpha)), nn::scale(dice, beta));
  return parts;
}

MflmModel MflmModel::create(const VisionConfig& vision, const LmConfig& lm, const nn::AdapterConfig& tcm_adapter,
                            const SegConfig& seg, const nn::AdapterConfig& seg_adapter, uint64_t seed,
                            const MflmConfig& config) {
  MflmModel m;
  m.seed = seed;
  m.seg_adapter = seg_adapter;
  m.config = config;
  m.tcm = VlmBackbone::create(vision, lm, tcm_adapter, seed);
  nn::Rng rng(seed + 1);
  m.seg_mlp = SegProjector(lm.d_model, seg.prompt_width, rng);
  m.seg = SegBackbone(seg, seg_adapter, seed + 2);
  nn::ParamList mlp;
  m.seg_mlp.collect("seg_mlp", mlp);
  nn::set_trainable(mlp, true);
  return m;
}

nn::ParamList MflmModel::frozen_params() const {
  nn::ParamList out = tcm.frozen_params();
  for (auto& p : seg.frozen_params()) out.push_back(p);
  return out;
}

nn::ParamList MflmModel::trainable_params() const {
  nn::ParamList out = tcm.trainable_params();
  seg_mlp.collect("seg_mlp", out);
  for (auto& p : seg.adapter_params()) out.push_back(p);
  for (auto& p : seg.decoder_params()) out.push_back(p);
  return out;
}

void MflmModel::zero_adapters() {
  tcm.lm->zero_adapters();
  seg.zero_adapters();
}

void MflmModel::save(const std::filesystem::path& path) const {
  nn::Checkpoint ckpt;
  ckpt.meta = {{"kind", "mflm"},
               {"tcm", tcm.describe()},
               {"tcm_adapter_layers", tcm.lm->adapter_layer_names()},
               {"seg", seg.config()},
               {"seg_adapter", seg_adapter},
               {"seed", seed},
               {"config", config},
               {"generation", generation},
               {"instruction", instruction},
               {"widths", {{"d_model", tcm.lm_config.d_model}, {"prompt_width", seg.config().prompt_width}}},
               {"weights_version", weights_version()}};
  ckpt.tensors = nn::snapshot(trainable_params());
  ckpt.save(path);
}

MflmModel MflmModel::load(const std::filesystem::path& path) {
  const auto ckpt = nn::Checkpoint::load(path);
  if (ckpt.meta.value("kind", "") != "mflm") throw ConfigError(path.string() + " is not a locator checkpoint");
  const auto& t = ckpt.meta.at("tcm");
  MflmModel m = create(t.at("vision").get<VisionConfig>(), t.at("lm").get<LmConfig>(),
                       t.at("adapter").get<nn::AdapterConfig>(), ckpt.meta.at("seg").get<SegConfig>(),
                       ckpt.meta.at("seg_adapter").get<nn::AdapterConfig>(), ckpt.meta.at("seed").get<uint64_t>(),
                       ckpt.meta.at("config").get<MflmConfig>());
  if (t.at("base_seed").get<uint64_t>() != m.seed) throw ConfigError("inconsistent seeds in " + path.string());
  m.generation = ckpt.meta.at("generation").get<detector::GenerationConfig>();
  m.instruction = ckpt.meta.at("instruction").get<std::string>();
  nn::load_values(m.trainable_params(), ckpt.tensors);
  return m;
}

std::string MflmModel::weights_version() const { return "loc-" + nn::checksum(trainable_params()).substr(0, 12); }

bool LocateResult::has_flag(std::string_view f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

namespace {

TcmContext make_context(const MflmModel& model, const cv::Mat& rgb, const std::string& detection_text,
                        const std::optional<DomainTag>& tag) {
  TcmContext ctx;
  if (uses_image(model.config.inputs)) ctx.image = detector::encode_image(model.tcm, rgb);
  ctx.detection_text = detection_text;
  ctx.instruction = model.instruction;
  ctx.tag = tag;
  return ctx;
}

}  // namespace

LocateResult locate(const MflmModel& model, const cv::Mat& rgb, const std::string& detection_text,
                    const std::optional<DomainTag>& tag) {
  nn::NoGradGuard guard;
  LocateResult result;
  const auto ctx = make_context(model, rgb, detection_text, tag);
  const auto& tok = model.tcm.tokenizer;
  for (std::string_view suffix : {std::string_view(), kForceSegSuffix}) {
    const Var prompt = tcm_prompt_embeddings(model.tcm, model.config.inputs, ctx, suffix);
    auto decoder = model.tcm.lm->decoder();
    const auto gen = detector::generate_ids(*decoder, prompt, tok.eos_id(), model.generation);
    result.tcm_text = sanitize_utf8(tok.decode(gen.ids));
    const auto seg_at = std::find(gen.ids.begin(), gen.ids.end(), tok.seg_id());
    if (seg_at == gen.ids.end()) continue;

    const std::vector<int> answer(gen.ids.begin(), seg_at + 1);
    const Var parts[] = {prompt, model.tcm.lm->embed(answer)};
    const Var states = model.tcm.lm->hidden(nn::concat_rows(parts));
    const int n_image = uses_image(model.config.inputs) ? model.tcm.vision.n_tokens() : 0;
    auto ids = tcm_prompt_ids(tok, model.config.inputs, ctx, n_image, suffix);
    ids.insert(ids.end(), answer.begin(), answer.end());
    const Var h = extract_seg_embedding(states, ids, tok.seg_id(), model.seg_mlp);
    result.mask = localize(model.seg, rgb, h, model.config.threshold);
    return result;
  }
  result.flags.emplace_back("no_seg");
  result.mask = TamperMask::empty(rgb.rows, rgb.cols, model.config.threshold);
  return result;
}

std::vector<LocatorExample> examples_from_dataset(const mmtd::Dataset& dataset) {
  std::vector<LocatorExample> out;
  for (const auto& r : dataset.records) {
    if (r.authentic) continue;
    if (!r.mask_path) throw InputError("tampered record " + r.id + " has no mask");
    out.push_back({read_image(dataset.image_file(r)), read_mask(dataset.mask_file(r)), r.domain,
                   mmtd::serialize_description(r.description)});
  }
  return out;
}

void use_detector_outputs(std::vector<LocatorExample>& examples, const detector::DetectorModel& detector) {
  for (auto& e : examples) {
    const auto tag = make_domain_tag(e.domain);
    e.detection_text = detector::detect(detector, e.rgb, &tag).raw_text;
    if (e.detection_text.empty()) e.detection_text = " ";
  }
}

MflmTrainReport train_mflm(MflmModel& model, const std::vector<LocatorExample>& examples,
                           const MflmTrainConfig& config) {
  if (examples.empty()) throw InputError("no tampered examples for the locator");
  for (const auto& e : examples) {
    if (e.mask.empty()) throw InputError("locator training example without a mask");
  }
  MflmTrainReport report;
  const auto frozen = model.frozen_params();
  report.frozen_checksum_before = nn::checksum(frozen);

  const auto& tcm = model.tcm;
  const auto& tok = tcm.tokenizer;
  const int s = model.seg.config().mask_size;
  std::vector<int> answer = tok.encode(kGroundTruthPrompt);
  answer.push_back(tok.eos_id());

  struct Prepared {
    Matrix tcm_planar;
    Matrix seg_planar;
    Matrix gt;  // [1, s*s]
  };
  std::vector<Prepared> prep;
  for (const auto& e : examples) {
    const Matrix m = mask_to_matrix(e.mask, s, s);
    prep.push_back({image_to_planar(e.rgb, tcm.vision.image_size), image_to_planar(e.rgb, s),
                    Eigen::Map<const Matrix>(m.data(), 1, m.size())});
  }

  auto loss_of = [&](size_t i) {
    const auto& e = examples[i];
    TcmContext ctx;
    if (uses_image(model.config.inputs)) ctx.image = detector::ImageTokens{tcm.projector.forward(tcm.encoder.forward(prep[i].tcm_planar))};
    ctx.detection_text = e.detection_text;
    ctx.instruction = model.instruction;
    ctx.tag = make_domain_tag(e.domain);
    const Var prompt = tcm_prompt_embeddings(tcm, model.config.inputs, ctx);
    const int n_image = uses_image(model.config.inputs) ? tcm.vision.n_tokens() : 0;
    auto ids = tcm_prompt_ids(tok, model.config.inputs, ctx, n_image);
    const size_t n_prompt = ids.size();
    ids.insert(ids.end(), answer.begin(), answer.end());
    const Var parts[] = {prompt, tcm.lm->embed(answer)};
    const Var states = tcm.lm->hidden(nn::concat_rows(parts));
    std::vector<int> targets(ids.size(), -1);
    for (size_t k = 0; k < answer.size(); ++k) targets[n_prompt - 1 + k] = answer[k];
    const Var h = extract_seg_embedding(states, ids, tok.seg_id(), model.seg_mlp);
    const Var logits = model.seg.decode(model.seg.encode(prep[i].seg_planar), h);
    return localization_loss(tcm.lm->logits(states), targets, tok.seg_id(), logits, prep[i].gt, model.config.alpha,
                             model.config.beta, model.config.dice_eps);
  };

  {
    nn::NoGradGuard guard;
    double total = 0.0;
    for (size_t i = 0; i < examples.size(); ++i) total += loss_of(i).total.item();
    report.initial_loss = total / static_cast<double>(examples.size());
  }

  nn::Adam opt(model.trainable_params(), {.lr = config.lr, .grad_clip = 1.0});
  nn::Rng rng(config.seed);
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(std::max(config.batch_size, 1));
  const double n = static_cast<double>(examples.size());
  const long total_steps = static_cast<long>((order.size() + batch - 1) / batch) * config.epochs;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0, ce = 0.0, bce = 0.0, dice = 0.0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      opt.zero_grad();
      for (size_t k = start; k < end; ++k) {
        auto parts = loss_of(order[k]);
        total += parts.total.item();
        ce += parts.ce;
        bce += parts.bce_weighted;
        dice += parts.dice_weighted;
        parts.total.backward();
      }
      if (config.cosine_schedule) opt.set_lr(nn::cosine_lr(config.lr, step, total_steps));
      opt.step(static_cast<int>(end - start));
      ++step;
    }
    report.epoch_loss.push_back(total / n);
    report.epoch_ce.push_back(ce / n);
    report.epoch_bce.push_back(bce / n);
    report.epoch_dice.push_back(dice / n);
    log_info("locator epoch {} loss {:.5f} (ce {:.5f}, bce {:.5f}, dice {:.5f})", epoch + 1, total / n, ce / n,
             bce / n, dice / n);
  }
  report.frozen_checksum_after = nn::checksum(frozen);
  return report;
}

void to_json(nlohmann::json& j, const SegConfig& c) {
  j = {{"mask_size", c.mask_size}, {"channels", c.channels}, {"prompt_width", c.prompt_width},
       {"decoder_width", c.decoder_width}};
}
void from_json(const nlohmann::json& j, SegConfig& c) {
  c.mask_size = j.value("mask_size", c.mask_size);
  c.channels = j.value("channels", c.channels);
  c.prompt_width = j.value("prompt_width", c.prompt_width);
  c.decoder_width = j.value("decoder_width", c.decoder_width);
}
void to_json(nlohmann::json& j, const MflmConfig& c) {
  j = {{"alpha", c.alpha}, {"beta", c.beta}, {"dice_eps", c.dice_eps}, {"threshold", c.threshold},
       {"inputs", mflm_inputs_name(c.inputs)}};
}
void from_json(const nlohmann::json& j, MflmConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.dice_eps = j.value("dice_eps", c.dice_eps);
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("inputs")) c.inputs = parse_mflm_inputs(j.at("inputs").get<std::string>());
}
void to_json(nlohmann::json& j, const MflmTrainConfig& c) {
  j = {{"epochs", c.epochs}, {"lr", c.lr}, {"batch_size", c.batch_size}, {"seed", c.seed},
       {"train_on_detector_outputs", c.train_on_detector_outputs}, {"cosine_schedule", c.cosine_schedule}};
}
void from_json(const nlohmann::json& j, MflmTrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.train_on_detector_outputs = j.value("train_on_detector_outputs", c.train_on_detector_outputs);
  c.cosine_schedule = j.value("cosine_schedule", c.cosine_schedule);
}

}  // namespace fakeshield::locator
