#include "fakeshield/detector/detector.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/log.hpp"
#include "fakeshield/nn/checkpoint.hpp"
#include "fakeshield/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fakeshield::detector {

std::vector<std::string> default_instruction_pool() {
  return {std::string(kCanonicalInstruction),
          "Has this image been edited? Point out the altered region.",
          "Is anything in this picture manipulated, and where?",
          "Please check this photo for tampering and describe the edited area.",
          "Was this image modified? Explain where and why you think so.",
          "Examine the picture and tell me whether any part of it is fake.",
          "Detect any forged content in this image and justify your answer.",
          "Is this photograph authentic or tampered? Give the location and your reasons."};
}

ImageTokens encode_image(const VlmBackbone& backbone, const cv::Mat& rgb) {
  if (rgb.empty()) throw InputError("empty image");
  const nn::Matrix planar = image_to_planar(rgb, backbone.vision.image_size);
  return {backbone.projector.forward(backbone.encoder.forward(planar))};
}

namespace {

void append(std::vector<int>& ids, const std::vector<int>& more) { ids.insert(ids.end(), more.begin(), more.end()); }

}  // namespace

AssembledPrompt assemble_prompt(const TinyLm& lm, const Tokenizer& tok, std::string_view instruction,
                                const DomainTag* tag, const ImageTokens& img, std::span<const Turn> history) {
  if (instruction.empty()) throw std::invalid_argument("instruction text is empty");
  if (!img.tokens.defined() || img.tokens.rows() == 0) throw std::invalid_argument("no image tokens");
  if (img.tokens.cols() != lm.config().d_model) {
    throw ConfigError("image tokens are " + std::to_string(img.tokens.cols()) + " wide but text embeddings are " +
                      std::to_string(lm.config().d_model));
  }
  AssembledPrompt p;
  p.ids.push_back(tok.bos_id());
  p.image = {static_cast<int>(p.ids.size()), static_cast<int>(img.tokens.rows())};
  p.ids.insert(p.ids.end(), static_cast<size_t>(img.tokens.rows()), tok.image_id());
  p.tag.start = static_cast<int>(p.ids.size());
  if (tag) append(p.ids, tok.encode(tag->sentence));
  p.tag.length = static_cast<int>(p.ids.size()) - p.tag.start;
  p.instruction.start = static_cast<int>(p.ids.size());
  append(p.ids, tok.encode(instruction));
  p.instruction.length = static_cast<int>(p.ids.size()) - p.instruction.start;
  p.ids.push_back(tok.sep_id());
  for (const auto& turn : history) {
    if (turn.question.empty()) throw std::invalid_argument("follow-up question is empty");
    append(p.ids, tok.encode(turn.answer));
    p.ids.push_back(tok.eos_id());
    append(p.ids, tok.encode(turn.question));
    p.ids.push_back(tok.sep_id());
  }

  const std::span<const int> all(p.ids);
  const nn::Var parts[] = {lm.embed(all.subspan(0, static_cast<size_t>(p.image.start))), img.tokens,
                           lm.embed(all.subspan(static_cast<size_t>(p.image.start + p.image.length)))};
  p.embeddings = nn::concat_rows(parts);
  return p;
}

AssembledPrompt assemble_prompt(const VlmBackbone& backbone, std::string_view instruction, const DomainTag* tag,
                                const ImageTokens& img, std::span<const Turn> history) {
  return assemble_prompt(*backbone.lm, backbone.tokenizer, instruction, tag, img, history);
}

bool DetectionOutput::has_flag(std::string_view f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

Generated generate_ids(Decoder& decoder, const nn::Var& prompt, int eos_id, const GenerationConfig& config) {
  Generated out;
  nn::Rng rng(config.seed);
  auto choose = [&](const nn::RowVector& logits) {
    if (config.greedy || config.temperature <= 0.0) {
      Eigen::Index best = 0;
      logits.maxCoeff(&best);  // first maximum wins
      return static_cast<int>(best);
    }
    const nn::RowVector scaled = logits / config.temperature;
    const nn::RowVector p = (scaled.array() - scaled.maxCoeff()).exp();
    double u = rng.uniform() * p.sum();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      u -= p(i);
      if (u <= 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
  };
  int budget = config.max_new_tokens;
  if (const int ctx = decoder.context(); ctx > 0) {
    // Every emitted token must still fit when the answer is fed back.
    const int room = ctx - static_cast<int>(prompt.rows());
    budget = std::min(budget, room);
    if (room <= 0 && config.max_new_tokens > 0) {
      throw InputError("prompt of " + std::to_string(prompt.rows()) + " positions leaves no room in a context of " +
                       std::to_string(ctx));
    }
  }
  nn::RowVector logits = decoder.prefill(prompt);
  for (int step = 0; step < budget; ++step) {
    const int next = choose(logits);
    if (next == eos_id) return out;
    out.ids.push_back(next);
    if (step + 1 < budget) logits = decoder.step(next);
  }
  out.truncated = true;
  return out;
}

DetectionOutput interpret_detection(std::string raw_text, bool truncated) {
  DetectionOutput out;
  out.raw_text = std::move(raw_text);
  if (truncated) out.flags.emplace_back("truncated");
  try {
    out.parsed = mmtd::parse_description(out.raw_text);
  } catch (const mmtd::ParseError&) {
    std::string lower = out.raw_text;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.parsed = {};
    out.parsed.verdict =
        lower.find("tamper") != std::string::npos ? mmtd::Verdict::tampered : mmtd::Verdict::authentic;
    out.parsed.basis_text = out.raw_text;
    out.flags.emplace_back("low_confidence");
  }
  return out;
}

DetectionOutput generate_detection(Decoder& decoder, const Tokenizer& tokenizer, const AssembledPrompt& prompt,
                                   const GenerationConfig& config) {
  const auto gen = generate_ids(decoder, prompt.embeddings, tokenizer.eos_id(), config);
  return interpret_detection(sanitize_utf8(tokenizer.decode(gen.ids)), gen.truncated);
}

DetectionOutput generate_detection(const VlmBackbone& backbone, const AssembledPrompt& prompt,
                                   const GenerationConfig& config) {
  auto decoder = backbone.lm->decoder();
  return generate_detection(*decoder, backbone.tokenizer, prompt, config);
}

std::string generate_answer(const VlmBackbone& backbone, const AssembledPrompt& prompt,
                            const GenerationConfig& config) {
  auto decoder = backbone.lm->decoder();
  const auto gen = generate_ids(*decoder, prompt.embeddings, backbone.tokenizer.eos_id(), config);
  return sanitize_utf8(backbone.tokenizer.decode(gen.ids));
}

LossParts detection_loss(const nn::Var& pred_logits, std::span<const int> target_tokens, const nn::Var& tag_logits,
                         int tag_label, double lambda) {
  if (lambda < 0) throw std::invalid_argument("lambda must be non-negative");
  LossParts parts;
  nn::Var text = nn::cross_entropy(pred_logits, target_tokens);
  parts.text = text.item();
  parts.total = text;
  if (tag_logits.defined() && lambda > 0) {
    const int label[] = {tag_label};
    nn::Var tag = nn::cross_entropy(tag_logits, label);
    parts.tag = tag.item();
    parts.total = nn::add(text, nn::scale(tag, lambda));
  }
  return parts;
}

TrainingSequence build_training_sequence(const VlmBackbone& backbone, AssembledPrompt prompt,
                                         std::string_view answer) {
  TrainingSequence seq;
  seq.answer_ids = backbone.tokenizer.encode(answer);
  seq.answer_ids.push_back(backbone.tokenizer.eos_id());
  const nn::Var parts[] = {prompt.embeddings, backbone.lm->embed(seq.answer_ids)};
  seq.embeddings = nn::concat_rows(parts);
  const size_t n_prompt = prompt.ids.size();
  seq.targets.assign(n_prompt + seq.answer_ids.size(), -1);
  // The last prompt position predicts the first answer token.
  for (size_t i = 0; i < seq.answer_ids.size(); ++i) seq.targets[n_prompt - 1 + i] = seq.answer_ids[i];
  seq.prompt = std::move(prompt);
  return seq;
}

DetectorModel DetectorModel::create(const VisionConfig& vision, const LmConfig& lm, const nn::AdapterConfig& adapter,
                                    uint64_t base_seed) {
  DetectorModel m;
  m.backbone = VlmBackbone::create(vision, lm, adapter, base_seed);
  return m;
}

void DetectorModel::save(const std::filesystem::path& path) const {
  nn::Checkpoint ckpt;
  ckpt.meta = {{"kind", "detector"},
               {"backbone", backbone.describe()},
               {"adapter_layers", backbone.lm->adapter_layer_names()},
               {"instructions", instructions},
               {"generation", generation},
               {"use_domain_tag", use_domain_tag},
               {"weights_version", weights_version()}};
  ckpt.tensors = nn::snapshot(backbone.trainable_params());
  ckpt.save(path);
}

DetectorModel DetectorModel::load(const std::filesystem::path& path) {
  const auto ckpt = nn::Checkpoint::load(path);
  if (ckpt.meta.value("kind", "") != "detector") throw ConfigError(path.string() + " is not a detector checkpoint");
  DetectorModel m;
  m.backbone = VlmBackbone::from_description(ckpt.meta.at("backbone"));
  m.instructions = ckpt.meta.at("instructions").get<std::vector<std::string>>();
  m.generation = ckpt.meta.at("generation").get<GenerationConfig>();
  m.use_domain_tag = ckpt.meta.value("use_domain_tag", true);
  if (ckpt.meta.at("adapter_layers").get<std::vector<std::string>>() != m.backbone.lm->adapter_layer_names()) {
    throw ConfigError("adapter layer names in " + path.string() + " do not match the backbone");
  }
  nn::load_values(m.backbone.trainable_params(), ckpt.tensors);
  return m;
}

std::string DetectorModel::weights_version() const {
  return "det-" + nn::checksum(backbone.trainable_params()).substr(0, 12);
}

std::vector<DetectorExample> examples_from_dataset(const mmtd::Dataset& dataset) {
  std::vector<DetectorExample> out;
  for (const auto& r : dataset.records) {
    if (r.description.basis_text.empty() || (!r.authentic && r.description.location_text.empty())) {
      throw InputError("record " + r.id + " has no usable description");
    }
    out.push_back({read_image(dataset.image_file(r)), r.domain, mmtd::serialize_description(r.description)});
  }
  return out;
}

DetectorTrainReport train_dte_fdm(DetectorModel& model, const std::vector<DetectorExample>& examples,
                                  const DetectorTrainConfig& config, DtgModel* dtg) {
  if (examples.empty()) throw InputError("no training examples for the detector");
  for (const auto& e : examples) {
    if (e.target_text.empty()) throw InputError("training example without a description");
  }
  auto& bb = model.backbone;
  DetectorTrainReport report;
  const auto frozen = bb.frozen_params();
  report.frozen_checksum_before = nn::checksum(frozen);

  nn::ParamList params = bb.trainable_params();
  std::vector<nn::Matrix> dtg_inputs;
  if (dtg) {
    for (const auto& p : dtg->backbone->params()) params.push_back(p);
    for (const auto& e : examples) dtg_inputs.push_back(dtg->backbone->prepare(e.rgb));
  }
  std::vector<nn::Matrix> planar;
  for (const auto& e : examples) planar.push_back(image_to_planar(e.rgb, bb.vision.image_size));

  nn::Rng rng(config.seed);
  auto loss_of = [&](size_t i, const std::string& instruction) {
    const auto& e = examples[i];
    const ImageTokens img{bb.projector.forward(bb.encoder.forward(planar[i]))};
    const DomainTag tag = make_domain_tag(e.domain);
    auto seq = build_training_sequence(
        bb, assemble_prompt(bb, instruction, model.use_domain_tag ? &tag : nullptr, img), e.target_text);
    nn::Var logits = bb.lm->logits(bb.lm->hidden(seq.embeddings));
    nn::Var tag_logits = dtg ? dtg->backbone->forward(dtg_inputs[i]) : nn::Var();
    return detection_loss(logits, seq.targets, tag_logits, domain_code(e.domain), config.lambda);
  };
  auto pick_instruction = [&] {
    if (!config.sample_instructions || model.instructions.size() < 2) return model.instructions.front();
    return model.instructions[rng.below(model.instructions.size())];
  };

  {
    nn::NoGradGuard guard;
    double total = 0.0;
    for (size_t i = 0; i < examples.size(); ++i) total += loss_of(i, model.instructions.front()).total.item();
    report.initial_loss = total / static_cast<double>(examples.size());
  }

  nn::Adam opt(params, {.lr = config.lr, .grad_clip = 1.0});
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(std::max(config.batch_size, 1));
  const long total_steps = static_cast<long>((order.size() + batch - 1) / batch) * config.epochs;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      opt.zero_grad();
      for (size_t k = start; k < end; ++k) {
        auto parts = loss_of(order[k], pick_instruction());
        total += parts.total.item();
        parts.total.backward();
      }
      if (config.cosine_schedule) opt.set_lr(nn::cosine_lr(config.lr, step, total_steps));
      opt.step(static_cast<int>(end - start));
      ++step;
    }
    report.epoch_loss.push_back(total / static_cast<double>(order.size()));
    log_info("detector epoch {} loss {:.5f}", epoch + 1, report.epoch_loss.back());
  }
  report.frozen_checksum_after = nn::checksum(frozen);
  if (dtg) dtg->weights_version = "dtg-" + nn::checksum(dtg->backbone->params()).substr(0, 12);
  return report;
}

DetectionOutput detect(const DetectorModel& model, const cv::Mat& rgb, const DomainTag* tag) {
  nn::NoGradGuard guard;
  const auto img = encode_image(model.backbone, rgb);
  const auto prompt = assemble_prompt(model.backbone, model.instructions.front(),
                                      model.use_domain_tag ? tag : nullptr, img);
  return generate_detection(model.backbone, prompt, model.generation);
}

void to_json(nlohmann::json& j, const GenerationConfig& c) {
  j = {{"max_new_tokens", c.max_new_tokens}, {"temperature", c.temperature}, {"greedy", c.greedy}, {"seed", c.seed}};
}
void from_json(const nlohmann::json& j, GenerationConfig& c) {
  c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
  c.temperature = j.value("temperature", c.temperature);
  c.greedy = j.value("greedy", c.greedy);
  c.seed = j.value("seed", c.seed);
}
void to_json(nlohmann::json& j, const DetectorTrainConfig& c) {
  j = {{"epochs", c.epochs}, {"lr", c.lr},     {"batch_size", c.batch_size},
       {"lambda", c.lambda}, {"seed", c.seed}, {"sample_instructions", c.sample_instructions},
       {"cosine_schedule", c.cosine_schedule}};
}
void from_json(const nlohmann::json& j, DetectorTrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lambda = j.value("lambda", c.lambda);
  c.seed = j.value("seed", c.seed);
  c.sample_instructions = j.value("sample_instructions", c.sample_instructions);
  c.cosine_schedule = j.value("cosine_schedule", c.cosine_schedule);
}

}  // namespace fakeshield::detector
