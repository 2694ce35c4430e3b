#pragma once

// Text-prompted tamper localisation: a tamper-comprehension language model
// reads the image and the detector's explanation and answers with a <SEG>
// token; the projected last-layer state at that token prompts a small
// segmentation decoder.

#include "fakeshield/detector/detector.hpp"
#include "fakeshield/dtg.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/mmtd/record.hpp"
#include "fakeshield/vlm.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include <filesystem>
#include <functional>
#include <span>
#include <optional>
#include <string>
#include <vector>

namespace fakeshield::locator {

inline constexpr std::string_view kGroundTruthPrompt = "It is <SEG>";
inline constexpr std::string_view kForceSegSuffix = "Answer with the segmentation token.";

// Which texts and images the comprehension model sees.
enum class MflmInputs { odet_img, ins_img, ins_tag, ins_tag_img };
std::string_view mflm_inputs_name(MflmInputs m);  // "O_det+T_img", ...
MflmInputs parse_mflm_inputs(std::string_view name);
bool uses_image(MflmInputs m);
bool uses_tag(MflmInputs m);

struct TcmContext {
  std::optional<detector::ImageTokens> image;
  std::string detection_text;  // O_det
  std::string instruction;
  std::optional<DomainTag> tag;
};

// [bos] [image] [tag] [instruction | O_det] [sep], keeping only the parts
// selected by `inputs`.
std::vector<int> tcm_prompt_ids(const Tokenizer& tok, MflmInputs inputs, const TcmContext& ctx, int n_image,
                                std::string_view suffix = {});
nn::Var tcm_prompt_embeddings(const VlmBackbone& tcm, MflmInputs inputs, const TcmContext& ctx,
                              std::string_view suffix = {});

// Two-layer MLP (hidden width = input width) from TCM states to the decoder
// prompt width.
class SegProjector {
 public:
  SegProjector() = default;
  SegProjector(int in, int out, nn::Rng& rng);
  nn::Var forward(const nn::Var& x) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
  int out_width() const { return l2_.out_features(); }

 private:
  nn::Linear l1_, l2_;
};

// Projected state at the first <SEG> in `ids`. Throws std::invalid_argument
// when there is none or the shapes disagree.
nn::Var extract_seg_embedding(const nn::Var& states, std::span<const int> ids, int seg_id,
                              const SegProjector& mlp);
nn::Var extract_seg_embedding(const nn::Var& states, std::span<const int> ids, int seg_id,
                              const std::function<nn::Var(const nn::Var&)>& mlp);

struct SegConfig {
  int mask_size = 128;
  std::vector<int> channels{16, 32, 32};  // encoder levels
  int prompt_width = 32;
  int decoder_width = 32;
};

// Frozen convolutional encoder (with optional adapters) and a trainable
// prompt-conditioned decoder.
class SegBackbone {
 public:
  SegBackbone() = default;
  SegBackbone(const SegConfig& config, const nn::AdapterConfig& adapter, uint64_t seed);

  struct Encoded {
    nn::FeatureMap mid;   // E_mid at mask_size / 8, with coordinate channels
    nn::FeatureMap skip;  // first-level features at mask_size
  };
  Encoded encode(const nn::Matrix& planar) const;  // planar: [3, mask_size^2]
  // prompt: [1, prompt_width] -> logits [1, mask_size^2]
  nn::Var decode(const Encoded& e, const nn::Var& prompt) const;

  const SegConfig& config() const { return config_; }
  nn::ParamList frozen_params() const;   // encoder base
  nn::ParamList adapter_params() const;  // encoder adapters
  nn::ParamList decoder_params() const;
  void zero_adapters();

 private:
  SegConfig config_;
  std::vector<nn::Conv2d> enc_;
  nn::Conv2d dec_in_;     // 1x1 over E_mid + coords
  nn::Linear film_gain_, film_shift_;
  nn::Conv2d dec_mix_;    // 3x3 at E_mid resolution
  nn::Conv2d dec_fuse_;   // 1x1 over upsampled + skip
  nn::Linear hyper_;      // prompt -> per-pixel dot-product weights
  nn::Var out_bias_;
};

struct TamperMask {
  nn::Matrix probs;   // [H, W] in [0, 1]
  nn::Matrix binary;  // [H, W] in {0, 1}
  double threshold = 0.5;

  static TamperMask from_probs(nn::Matrix probs, double threshold = 0.5);
  static TamperMask empty(int height, int width, double threshold = 0.5);
};

// Mask logits [1, S^2] -> probabilities at (height, width).
// Single-channel PNGs: the binary mask as 0/255 (8-bit) and the
// probabilities scaled to 0..65535 (16-bit, lossless).
Bytes mask_png(const TamperMask& mask);
Bytes probability_png(const TamperMask& mask);

TamperMask mask_from_logits(const nn::Var& logits, int mask_size, int height, int width, double threshold);

// Throws ConfigError when the prompt width does not match the decoder.
TamperMask localize(const SegBackbone& seg, const cv::Mat& rgb, const nn::Var& prompt, double threshold = 0.5);

// 1 - (2 sum(p g) + eps) / (sum p + sum g + eps). Throws on shape mismatch.
nn::Var dice_loss(const nn::Var& probs, const nn::Matrix& gt, double eps = 1.0);

struct LocLossParts {
  nn::Var total;
  double ce = 0.0;
  double bce_weighted = 0.0;   // alpha * bce
  double dice_weighted = 0.0;  // beta * dice
};

// ce(text) + alpha * bce(mask) + beta * dice(mask). `targets` are the
// next-token targets of the ground-truth prompt (< 0 masked); they must
// include the <SEG> id.
LocLossParts localization_loss(const nn::Var& txt_logits, std::span<const int> targets, int seg_id,
                               const nn::Var& mask_logits, const nn::Matrix& gt_mask, double alpha, double beta,
                               double dice_eps = 1.0);

struct MflmConfig {
  double alpha = 2.0;
  double beta = 0.5;
  double dice_eps = 1.0;
  double threshold = 0.5;
  MflmInputs inputs = MflmInputs::odet_img;
};

struct MflmModel {
  VlmBackbone tcm;
  SegProjector seg_mlp;
  SegBackbone seg;
  MflmConfig config;
  detector::GenerationConfig generation{.max_new_tokens = 24};
  std::string instruction = std::string(detector::kCanonicalInstruction);

  static MflmModel create(const VisionConfig& vision, const LmConfig& lm, const nn::AdapterConfig& tcm_adapter,
                          const SegConfig& seg, const nn::AdapterConfig& seg_adapter, uint64_t seed,
                          const MflmConfig& config = {});

  nn::ParamList frozen_params() const;
  nn::ParamList trainable_params() const;
  void zero_adapters();

  void save(const std::filesystem::path& path) const;
  static MflmModel load(const std::filesystem::path& path);
  std::string weights_version() const;

  uint64_t seed = 0;
  nn::AdapterConfig seg_adapter;
};

struct LocateResult {
  TamperMask mask;
  std::string tcm_text;
  std::vector<std::string> flags;  // "no_seg" when no <SEG> came out twice
  bool has_flag(std::string_view f) const;
};

// Runs the comprehension model greedily; on a missing <SEG> retries once
// with kForceSegSuffix, then gives an all-zero mask flagged no_seg.
LocateResult locate(const MflmModel& model, const cv::Mat& rgb, const std::string& detection_text,
                    const std::optional<DomainTag>& tag);

struct LocatorExample {
  cv::Mat rgb;
  cv::Mat mask;  // 8-bit, non-zero = tampered
  DomainCategory domain = DomainCategory::photoshop;
  std::string detection_text;  // used verbatim as O_det
};

struct MflmTrainConfig {
  int epochs = 24;
  double lr = 3e-4;
  int batch_size = 2;
  uint64_t seed = 13;
  bool train_on_detector_outputs = false;  // replace O_det by detector generations
  bool cosine_schedule = true;
};

struct MflmTrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_ce, epoch_bce, epoch_dice;  // weighted components
  double initial_loss = 0.0;
  std::string frozen_checksum_before;
  std::string frozen_checksum_after;
};

// Tampered records only; throws InputError for a record without a mask.
std::vector<LocatorExample> examples_from_dataset(const mmtd::Dataset& dataset);

// Replaces each example's O_det by what the detector generates for it
// (ground-truth domain tag), for training on imperfect explanations.
void use_detector_outputs(std::vector<LocatorExample>& examples, const detector::DetectorModel& detector);

// Descriptions are consumed verbatim; nothing rewrites them.
MflmTrainReport train_mflm(MflmModel& model, const std::vector<LocatorExample>& examples,
                           const MflmTrainConfig& config);

void to_json(nlohmann::json& j, const SegConfig& c);
void from_json(const nlohmann::json& j, SegConfig& c);
void to_json(nlohmann::json& j, const MflmConfig& c);
void from_json(const nlohmann::json& j, MflmConfig& c);
void to_json(nlohmann::json& j, const MflmTrainConfig& c);
void from_json(const nlohmann::json& j, MflmTrainConfig& c);

}  // namespace fakeshield::locator
