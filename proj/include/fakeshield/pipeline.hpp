#pragma once

// End-to-end analysis: domain tag, detection text, and (for tampered
// verdicts) a localisation mask, from one set of loaded models.

#include "fakeshield/detector/detector.hpp"
#include "fakeshield/dtg.hpp"
#include "fakeshield/locator/locator.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace fakeshield {

// Which trained components a run uses; the defaults are the full pipeline.
struct PipelineVariant {
  bool use_dtg = true;
  locator::MflmInputs mflm_inputs = locator::MflmInputs::odet_img;
  bool locator_on_correct_odet = true;  // false: locator trained on detector generations

  bool operator==(const PipelineVariant&) const = default;
};

// Checkpoint file names inside a models directory:
//   dtg.ckpt, detector.ckpt, detector.no_dtg.ckpt,
//   locator.ckpt (full inputs, dataset descriptions),
//   locator.<inputs>[.det_odet].ckpt for the other locator variants.
std::string detector_checkpoint_name(bool use_dtg);
std::string locator_checkpoint_name(locator::MflmInputs inputs, bool on_correct_odet);
std::string_view mflm_inputs_slug(locator::MflmInputs inputs);

struct PipelineModels {
  std::shared_ptr<const DtgModel> dtg;  // null when the variant disables it
  std::shared_ptr<const detector::DetectorModel> detector;
  std::shared_ptr<const locator::MflmModel> locator;

  // Throws NotFoundError for a missing checkpoint and ConfigError when the
  // components do not fit together.
  static PipelineModels load(const std::filesystem::path& models_dir, const PipelineVariant& variant = {});
  void validate() const;
  nlohmann::json versions() const;
};

struct AnalysisResult {
  std::optional<DomainPrediction> domain;
  std::optional<DomainTag> tag;
  detector::DetectionOutput detection;
  std::optional<locator::LocateResult> localization;  // tampered verdicts only
  std::vector<std::string> flags;
};

// Throws InputError for an empty image.
AnalysisResult analyze_image(const PipelineModels& models, const cv::Mat& rgb);

struct QaTurn {
  std::string question;
  std::string answer;
};

// Re-prompts the detector with the image, tag, first detection text, prior
// turns and the new question; greedy decoding gives repeatable answers.
std::string answer_follow_up(const PipelineModels& models, const cv::Mat& rgb, const std::optional<DomainTag>& tag,
                             const std::string& detection_text, const std::vector<QaTurn>& prior,
                             const std::string& question);

}  // namespace fakeshield
