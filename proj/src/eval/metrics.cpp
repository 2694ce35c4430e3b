#include "fakeshield/eval/metrics.hpp"

#include <stdexcept>

namespace fakeshield::eval {

DetectionEval detection_from_confusion(const Confusion& c) {
  DetectionEval e;
  e.confusion = c;
  if (c.total() > 0) e.acc = static_cast<double>(c.tp + c.tn) / c.total();
  const int denom = 2 * c.tp + c.fp + c.fn;
  e.f1 = denom > 0 ? 2.0 * c.tp / denom : (c.total() > 0 ? 1.0 : 0.0);
  return e;
}

DetectionEval eval_detection(const std::vector<mmtd::Verdict>& preds, const std::vector<bool>& gt_authentic) {
  if (preds.size() != gt_authentic.size()) throw std::invalid_argument("prediction and label counts differ");
  Confusion c;
  for (size_t i = 0; i < preds.size(); ++i) {
    const bool said_tampered = preds[i] == mmtd::Verdict::tampered;
    const bool is_tampered = !gt_authentic[i];
    if (said_tampered && is_tampered) ++c.tp;
    else if (said_tampered) ++c.fp;
    else if (is_tampered) ++c.fn;
    else ++c.tn;
  }
  return detection_from_confusion(c);
}

MaskScore score_mask(const nn::Matrix& pred, const nn::Matrix& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw std::invalid_argument("mask shapes differ");
  const auto p = pred.array() > 0.5;
  const auto g = gt.array() > 0.5;
  const double inter = (p && g).count();
  const double uni = (p || g).count();
  const double sum = static_cast<double>(p.count() + g.count());
  if (uni == 0.0) return {1.0, 1.0};
  return {inter / uni, 2.0 * inter / sum};
}

nn::Matrix resize_nearest(const nn::Matrix& mask, int height, int width) {
  if (mask.rows() == height && mask.cols() == width) return mask;
  nn::Matrix out(height, width);
  for (int y = 0; y < height; ++y) {
    const auto sy = std::min<Eigen::Index>(mask.rows() - 1, static_cast<Eigen::Index>(y) * mask.rows() / height);
    for (int x = 0; x < width; ++x) {
      const auto sx = std::min<Eigen::Index>(mask.cols() - 1, static_cast<Eigen::Index>(x) * mask.cols() / width);
      out(y, x) = mask(sy, sx);
    }
  }
  return out;
}

LocalizationEval eval_localization(const std::vector<nn::Matrix>& preds, const std::vector<nn::Matrix>& gts,
                                   double threshold) {
  if (preds.size() != gts.size()) throw std::invalid_argument("prediction and mask counts differ");
  LocalizationEval e;
  for (size_t i = 0; i < preds.size(); ++i) {
    const nn::Matrix bin = (preds[i].array() >= threshold).cast<double>().matrix();
    e.per_image.push_back(
        score_mask(bin, resize_nearest(gts[i], static_cast<int>(bin.rows()), static_cast<int>(bin.cols()))));
    e.mean_iou += e.per_image.back().iou;
    e.mean_pixel_f1 += e.per_image.back().f1;
  }
  if (!preds.empty()) {
    e.mean_iou /= static_cast<double>(preds.size());
    e.mean_pixel_f1 /= static_cast<double>(preds.size());
  }
  return e;
}

void to_json(nlohmann::json& j, const Confusion& c) { j = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}; }
void to_json(nlohmann::json& j, const DetectionEval& e) {
  j = {{"acc", e.acc}, {"f1", e.f1}, {"confusion", e.confusion}};
}

}  // namespace fakeshield::eval
