#pragma once

// Image-level and pixel-level scores. "tampered" is the positive class.

#include "fakeshield/mmtd/description.hpp"
#include "fakeshield/nn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace fakeshield::eval {

struct Confusion {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  int total() const { return tp + fp + tn + fn; }
};

struct DetectionEval {
  double acc = 0.0;
  double f1 = 0.0;
  Confusion confusion;
};

// Throws std::invalid_argument when the lists differ in length.
DetectionEval eval_detection(const std::vector<mmtd::Verdict>& preds, const std::vector<bool>& gt_authentic);
DetectionEval detection_from_confusion(const Confusion& c);

struct MaskScore {
  double iou = 0.0;
  double f1 = 0.0;
};

// Binary masks of equal shape; both empty scores 1.
MaskScore score_mask(const nn::Matrix& pred, const nn::Matrix& gt);

// Nearest-neighbour resize that keeps a {0,1} mask binary.
nn::Matrix resize_nearest(const nn::Matrix& mask, int height, int width);

struct LocalizationEval {
  double mean_iou = 0.0;
  double mean_pixel_f1 = 0.0;
  std::vector<MaskScore> per_image;
};

// Predictions are probabilities (binarised at `threshold`); ground truth is
// resized to each prediction's shape with resize_nearest.
LocalizationEval eval_localization(const std::vector<nn::Matrix>& preds, const std::vector<nn::Matrix>& gts,
                                   double threshold = 0.5);

void to_json(nlohmann::json& j, const Confusion& c);
void to_json(nlohmann::json& j, const DetectionEval& e);

}  // namespace fakeshield::eval
