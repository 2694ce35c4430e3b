#pragma once

// Robustness degradations: JPEG re-encoding and additive Gaussian noise.

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include <string>
#include <vector>

namespace fakeshield::eval {

enum class DegradationKind { none, jpeg, gaussian };

struct DegradationSpec {
  DegradationKind kind = DegradationKind::none;
  double param = 0.0;  // JPEG quality, or noise variance in 8-bit units

  std::string label() const;  // "Original", "JPEG 70", "Gaussian 5"
  std::string slug() const;   // "original", "jpeg_70", "gaussian_5"
  bool operator==(const DegradationSpec&) const = default;
};

// "original", "jpeg:70", "gaussian:5". Throws ConfigError otherwise.
DegradationSpec parse_degradation(const std::string& text);

// Original plus JPEG 70/80 and Gaussian 5/10.
std::vector<DegradationSpec> default_degradations();

// Throws std::invalid_argument for a quality outside 1..100 or a negative
// variance. Noise is drawn from a generator seeded with `seed`.
cv::Mat degrade_image(const cv::Mat& rgb, const DegradationSpec& spec, uint64_t seed);

void to_json(nlohmann::json& j, const DegradationSpec& s);
void from_json(const nlohmann::json& j, DegradationSpec& s);

}  // namespace fakeshield::eval
