#pragma once

// Training recipes: one JSON file with a section per component, and the
// glue that turns a built dataset into the checkpoints a pipeline loads.

#include "fakeshield/detector/detector.hpp"
#include "fakeshield/dtg.hpp"
#include "fakeshield/locator/locator.hpp"
#include "fakeshield/mmtd/record.hpp"
#include "fakeshield/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <vector>

namespace fakeshield {

struct DtgRecipe {
  ConvDomainConfig model;
  DtgTrainConfig train;
};

struct DetectorRecipe {
  VisionConfig vision;
  LmConfig lm;
  nn::AdapterConfig adapter{.rank = 8, .alpha = 16};
  uint64_t seed = 2;
  detector::GenerationConfig generation;
  bool joint_dtg = false;  // DTG weights join the optimiser through the tag loss
  detector::DetectorTrainConfig train;
};

struct LocatorRecipe {
  VisionConfig vision;
  LmConfig lm;
  nn::AdapterConfig adapter{.rank = 8, .alpha = 16};
  locator::SegConfig seg;
  nn::AdapterConfig seg_adapter{.rank = 8, .alpha = 16};
  uint64_t seed = 4;
  locator::MflmConfig mflm;
  detector::GenerationConfig generation{.max_new_tokens = 24};
  locator::MflmTrainConfig train;
};

struct Recipe {
  DtgRecipe dtg;
  DetectorRecipe detector;
  LocatorRecipe locator;

  // Missing keys keep their defaults; unknown keys raise ConfigError.
  static Recipe from_json(const nlohmann::json& j);
  static Recipe load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Throws ConfigError naming the first key of `given` that `known` lacks,
// descending into nested objects.
void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& where);

// Labeled images from every record of the split.
std::vector<LabeledImage> dtg_examples(const mmtd::Dataset& dataset);

DtgModel train_dtg_model(const mmtd::Dataset& dataset, const DtgRecipe& recipe, DtgTrainReport* report = nullptr);

// `joint` (optional) is trained alongside when the recipe asks for it.
detector::DetectorModel train_detector_model(const mmtd::Dataset& dataset, const DetectorRecipe& recipe, bool use_tag,
                                             DtgModel* joint = nullptr, detector::DetectorTrainReport* report = nullptr);

// With `odet_from`, O_det comes from that detector's generations instead of
// the dataset descriptions.
locator::MflmModel train_locator_model(const mmtd::Dataset& dataset, const LocatorRecipe& recipe,
                                       locator::MflmInputs inputs, const detector::DetectorModel* odet_from = nullptr,
                                       locator::MflmTrainReport* report = nullptr);

// Trains and saves every checkpoint the variants need under `out_dir`,
// using the names PipelineModels::load expects. Returns the files written.
std::vector<std::filesystem::path> train_model_set(const mmtd::Dataset& dataset, const Recipe& recipe,
                                                   const std::vector<PipelineVariant>& variants,
                                                   const std::filesystem::path& out_dir);

}  // namespace fakeshield
