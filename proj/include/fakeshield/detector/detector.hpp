#pragma once

#include "fakeshield/dtg.hpp"
#include "fakeshield/mmtd/description.hpp"
#include "fakeshield/mmtd/record.hpp"
#include "fakeshield/vlm.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fakeshield::detector {

inline constexpr std::string_view kCanonicalInstruction =
    "Can you identify manipulated areas in the photograph?";

// Default training pool; the first entry is used at inference.
std::vector<std::string> default_instruction_pool();

struct ImageTokens {
  nn::Var tokens;  // [n_img_tokens, d_model]
};

// Projected patch features. Throws InputError for an empty image.
ImageTokens encode_image(const VlmBackbone& backbone, const cv::Mat& rgb);

struct Span {
  int start = 0;
  int length = 0;
};

struct Turn {
  std::string question;
  std::string answer;  // empty for the turn being asked
};

// Token layout:
//   [bos] [image x n] [tag] [instruction] [sep] ([answer] [eos] [question] [sep])*
// Image positions carry the tokenizer's image id in `ids` and are replaced
// by the projected image tokens in `embeddings`.
struct AssembledPrompt {
  std::vector<int> ids;
  nn::Var embeddings;  // [ids.size(), d_model]
  Span image, tag, instruction;
};

// Throws std::invalid_argument for an empty instruction and ConfigError when
// the image token width differs from the text embedding width. `tag` may be
// null to leave the tag span empty.
AssembledPrompt assemble_prompt(const TinyLm& lm, const Tokenizer& tokenizer, std::string_view instruction,
                                const DomainTag* tag, const ImageTokens& img,
                                std::span<const Turn> history = {});
AssembledPrompt assemble_prompt(const VlmBackbone& backbone, std::string_view instruction,
                                const DomainTag* tag, const ImageTokens& img,
                                std::span<const Turn> history = {});

struct GenerationConfig {
  int max_new_tokens = 200;
  double temperature = 0.0;
  bool greedy = true;
  uint64_t seed = 0;
};

struct DetectionOutput {
  std::string raw_text;
  mmtd::StructuredDescription parsed;
  // "low_confidence" when the verdict came from the fallback rule,
  // "truncated" when max_new_tokens ran out before the answer ended.
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const;
};

// Decodes until eos or max_new_tokens; returns the generated ids (eos
// excluded) and whether the limit was hit.
struct Generated {
  std::vector<int> ids;
  bool truncated = false;
};
Generated generate_ids(Decoder& decoder, const nn::Var& prompt, int eos_id, const GenerationConfig& config);

// Unparseable text falls back to verdict = tampered iff "tamper" appears.
DetectionOutput interpret_detection(std::string raw_text, bool truncated);

DetectionOutput generate_detection(Decoder& decoder, const Tokenizer& tokenizer, const AssembledPrompt& prompt,
                                   const GenerationConfig& config);
DetectionOutput generate_detection(const VlmBackbone& backbone, const AssembledPrompt& prompt,
                                   const GenerationConfig& config);

// Plain-text answer for follow-up questions.
std::string generate_answer(const VlmBackbone& backbone, const AssembledPrompt& prompt,
                            const GenerationConfig& config);

struct LossParts {
  nn::Var total;
  double text = 0.0;
  double tag = 0.0;
};

// ce(pred_logits, target_tokens) + lambda * ce(tag_logits, tag_label).
// target_tokens < 0 are masked. tag_logits may be undefined (text term only).
LossParts detection_loss(const nn::Var& pred_logits, std::span<const int> target_tokens,
                         const nn::Var& tag_logits, int tag_label, double lambda);

// Token ids and next-token targets for prompt + answer + eos; prompt
// positions are masked.
struct TrainingSequence {
  AssembledPrompt prompt;
  std::vector<int> answer_ids;
  nn::Var embeddings;         // prompt embeddings followed by answer embeddings
  std::vector<int> targets;   // one per row of `embeddings`
};
TrainingSequence build_training_sequence(const VlmBackbone& backbone, AssembledPrompt prompt,
                                         std::string_view answer);

struct DetectorModel {
  VlmBackbone backbone;
  std::vector<std::string> instructions = default_instruction_pool();
  GenerationConfig generation;
  bool use_domain_tag = true;

  static DetectorModel create(const VisionConfig& vision, const LmConfig& lm, const nn::AdapterConfig& adapter,
                              uint64_t base_seed);

  // Stores configs, adapter rank/alpha/target layer names and the trainable
  // tensors; base weights are rebuilt from the seed on load.
  void save(const std::filesystem::path& path) const;
  static DetectorModel load(const std::filesystem::path& path);
  std::string weights_version() const;
};

struct DetectorTrainConfig {
  int epochs = 10;
  double lr = 2e-4;
  int batch_size = 4;
  double lambda = 1.0;
  uint64_t seed = 11;
  bool sample_instructions = true;  // otherwise always the canonical one
  bool cosine_schedule = true;      // warm-up then cosine decay; else constant
};

struct DetectorExample {
  cv::Mat rgb;
  DomainCategory domain = DomainCategory::photoshop;
  std::string target_text;
};

struct DetectorTrainReport {
  std::vector<double> epoch_loss;
  double initial_loss = 0.0;
  std::string frozen_checksum_before;
  std::string frozen_checksum_after;
};

// Builds examples from records; throws InputError when a record's
// description is missing its basis (tampered records also need a location).
std::vector<DetectorExample> examples_from_dataset(const mmtd::Dataset& dataset);

// Teacher-forced training with ground-truth domain tags. When `dtg` is given
// its parameters join the optimiser and contribute lambda * tag CE.
DetectorTrainReport train_dte_fdm(DetectorModel& model, const std::vector<DetectorExample>& examples,
                                  const DetectorTrainConfig& config, DtgModel* dtg = nullptr);

// Full inference for one image with a given tag (null when tags are disabled).
DetectionOutput detect(const DetectorModel& model, const cv::Mat& rgb, const DomainTag* tag);

void to_json(nlohmann::json& j, const GenerationConfig& c);
void from_json(const nlohmann::json& j, GenerationConfig& c);
void to_json(nlohmann::json& j, const DetectorTrainConfig& c);
void from_json(const nlohmann::json& j, DetectorTrainConfig& c);

}  // namespace fakeshield::detector
