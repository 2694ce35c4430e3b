#pragma once

// Domain tag generator: a small image classifier over the three tamper
// domains, plus the tag sentence handed to the detector.

#include "fakeshield/domain.hpp"
#include "fakeshield/nn/layers.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace fakeshield {

struct DomainTag {
  DomainCategory category = DomainCategory::photoshop;
  std::string sentence;
};

// "This is a suspected <name>-tampered picture."
std::string render_domain_tag(DomainCategory category);
DomainTag make_domain_tag(DomainCategory category);

struct DomainPrediction {
  DomainCategory category = DomainCategory::photoshop;
  std::array<double, 3> probs{};
};

// Softmax + argmax; ties go to the lowest category code.
DomainPrediction prediction_from_logits(const nn::RowVector& logits);

// Anything that maps an RGB image to three domain logits.
class DomainBackbone {
 public:
  virtual ~DomainBackbone() = default;
  // Resizing/normalisation, split out so training can cache it.
  virtual nn::Matrix prepare(const cv::Mat& rgb) const = 0;
  virtual nn::Var forward(const nn::Matrix& prepared) const = 0;  // [1, 3]
  nn::Var logits(const cv::Mat& rgb) const { return forward(prepare(rgb)); }
  virtual nn::ParamList params() const = 0;
  virtual nlohmann::json describe() const = 0;
};

struct ConvDomainConfig {
  int input_size = 224;
  std::vector<int> channels{8, 16, 32, 32};
  uint64_t seed = 1;
};

// conv3x3 + relu + 2x2 max-pool per block, global average pool, linear head.
class ConvDomainBackbone final : public DomainBackbone {
 public:
  explicit ConvDomainBackbone(const ConvDomainConfig& config);
  nn::Matrix prepare(const cv::Mat& rgb) const override;
  nn::Var forward(const nn::Matrix& planar) const override;
  nn::ParamList params() const override;
  nlohmann::json describe() const override;
  const ConvDomainConfig& config() const { return config_; }

 private:
  ConvDomainConfig config_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear head_;
};

struct DtgModel {
  std::shared_ptr<DomainBackbone> backbone;
  std::string weights_version;

  static DtgModel create(const ConvDomainConfig& config);
  void save(const std::filesystem::path& path) const;
  static DtgModel load(const std::filesystem::path& path);
};

// Throws InputError for undecodable bytes.
DomainPrediction classify_domain(const DtgModel& model, const cv::Mat& rgb);
DomainPrediction classify_domain(const DtgModel& model, std::span<const uint8_t> image_bytes);

struct DtgTrainConfig {
  int epochs = 20;
  double lr = 3e-3;
  int batch_size = 8;
  uint64_t seed = 7;
};

struct LabeledImage {
  cv::Mat rgb;
  DomainCategory domain = DomainCategory::photoshop;
};

struct DtgTrainReport {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  double initial_loss = 0.0;       // mean cross-entropy before the first update
  std::vector<std::string> warnings;
};

// Throws std::invalid_argument on an empty set. Updates weights in place and
// refreshes weights_version.
DtgTrainReport train_dtg(DtgModel& model, const std::vector<LabeledImage>& images,
                         const DtgTrainConfig& config);

void to_json(nlohmann::json& j, const ConvDomainConfig& c);
void from_json(const nlohmann::json& j, ConvDomainConfig& c);
void to_json(nlohmann::json& j, const DtgTrainConfig& c);
void from_json(const nlohmann::json& j, DtgTrainConfig& c);

}  // namespace fakeshield
