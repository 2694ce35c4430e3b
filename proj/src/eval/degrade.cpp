#include "fakeshield/eval/degrade.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/nn/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace fakeshield::eval {

namespace {

std::string number(double v) { return v == std::round(v) ? fmt::format("{}", static_cast<long>(v)) : fmt::format("{}", v); }

}  // namespace

std::string DegradationSpec::label() const {
  switch (kind) {
    case DegradationKind::none: return "Original";
    case DegradationKind::jpeg: return "JPEG " + number(param);
    case DegradationKind::gaussian: return "Gaussian " + number(param);
  }
  return "?";
}

std::string DegradationSpec::slug() const {
  switch (kind) {
    case DegradationKind::none: return "original";
    case DegradationKind::jpeg: return "jpeg_" + number(param);
    case DegradationKind::gaussian: return "gaussian_" + number(param);
  }
  return "?";
}

DegradationSpec parse_degradation(const std::string& text) {
  if (text == "original" || text == "none") return {};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("bad degradation '" + text + "'");
  const std::string kind = text.substr(0, colon);
  double param = 0.0;
  try {
    size_t used = 0;
    param = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("bad degradation parameter in '" + text + "'");
  }
  if (kind == "jpeg") {
    if (param < 1 || param > 100 || param != std::round(param)) throw ConfigError("JPEG quality must be 1..100");
    return {DegradationKind::jpeg, param};
  }
  if (kind == "gaussian") {
    if (param < 0) throw ConfigError("noise variance must be non-negative");
    return {DegradationKind::gaussian, param};
  }
  throw ConfigError("unknown degradation kind '" + kind + "'");
}

std::vector<DegradationSpec> default_degradations() {
  return {{}, {DegradationKind::jpeg, 70}, {DegradationKind::jpeg, 80}, {DegradationKind::gaussian, 5},
          {DegradationKind::gaussian, 10}};
}

cv::Mat degrade_image(const cv::Mat& rgb, const DegradationSpec& spec, uint64_t seed) {
  if (rgb.empty() || rgb.type() != CV_8UC3) throw std::invalid_argument("degradation expects an 8-bit RGB image");
  switch (spec.kind) {
    case DegradationKind::none: return rgb.clone();
    case DegradationKind::jpeg: {
      if (spec.param < 1 || spec.param > 100) throw std::invalid_argument("JPEG quality must be 1..100");
      return decode_image(encode_jpeg(rgb, static_cast<int>(spec.param)));
    }
    case DegradationKind::gaussian: {
      if (spec.param < 0) throw std::invalid_argument("noise variance must be non-negative");
      if (spec.param == 0) return rgb.clone();
      nn::Rng rng(seed);
      const double sd = std::sqrt(spec.param);
      cv::Mat out = rgb.clone();
      for (int y = 0; y < out.rows; ++y) {
        auto* row = out.ptr<uint8_t>(y);
        for (int x = 0; x < out.cols * 3; ++x) {
          row[x] = static_cast<uint8_t>(std::clamp(std::lround(row[x] + sd * rng.normal()), 0L, 255L));
        }
      }
      return out;
    }
  }
  return rgb.clone();
}

void to_json(nlohmann::json& j, const DegradationSpec& s) {
  switch (s.kind) {
    case DegradationKind::none: j = "original"; break;
    case DegradationKind::jpeg: j = "jpeg:" + number(s.param); break;
    case DegradationKind::gaussian: j = "gaussian:" + number(s.param); break;
  }
}
void from_json(const nlohmann::json& j, DegradationSpec& s) { s = parse_degradation(j.get<std::string>()); }

}  // namespace fakeshield::eval
