#include "fakeshield/mmtd/client.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/hash.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/mmtd/description.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include <fstream>

namespace fakeshield::mmtd {

std::string request_key(const DescriptionRequest& request) {
  std::string material = request.prompt;
  material += '\n';
  material += sha256_hex(read_file(request.image_path));
  material += '\n';
  if (request.mask_path) material += sha256_hex(read_file(*request.mask_path));
  return sha256_hex(material);
}

ReplayClient::ReplayClient(const std::filesystem::path& transcript) {
  std::ifstream in(transcript);
  if (!in) throw ConfigError("cannot open transcript " + transcript.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    responses_[j.at("key").get<std::string>()] = j.at("response").get<std::string>();
  }
}

std::string ReplayClient::describe(const DescriptionRequest& request) {
  const auto it = responses_.find(request_key(request));
  if (it == responses_.end()) {
    throw ServiceError("no transcript entry for " + request.image_path.filename().string(), false);
  }
  return it->second;
}

RecordingClient::RecordingClient(DescriptionServiceClient& inner, const std::filesystem::path& transcript)
    : inner_(inner), transcript_(transcript) {}

std::string RecordingClient::describe(const DescriptionRequest& request) {
  std::string response = inner_.describe(request);
  const nlohmann::json line = {{"key", request_key(request)},
                               {"image", request.image_path.filename().string()},
                               {"response", response}};
  std::lock_guard lock(mu_);
  std::ofstream out(transcript_, std::ios::app);
  out << line.dump() << '\n';
  return response;
}

std::string describe_position(const cv::Mat& mask) {
  const cv::Rect box = cv::boundingRect(mask);
  if (box.area() == 0) return "center";
  const double cx = (box.x + box.width / 2.0) / mask.cols;
  const double cy = (box.y + box.height / 2.0) / mask.rows;
  const std::string v = cy < 0.4 ? "top" : (cy > 0.6 ? "bottom" : "");
  const std::string h = cx < 0.4 ? "left" : (cx > 0.6 ? "right" : "");
  if (!v.empty() && !h.empty()) return v + " " + h + " corner";
  if (!v.empty()) return v;
  if (!h.empty()) return h;
  return "center";
}

std::string FixtureClient::describe(const DescriptionRequest& request) {
  if (request.authentic) return fixture_description(request.domain, true, cv::Mat());
  if (!request.mask_path) throw ServiceError("tampered request without a mask", false);
  return fixture_description(request.domain, false, read_mask(*request.mask_path));
}

std::string fixture_description(DomainCategory domain, bool authentic, const cv::Mat& mask) {
  StructuredDescription d;
  if (authentic) {
    d.verdict = Verdict::authentic;
    d.location_text = "none";
    d.basis_text = "Lighting, edge sharpness and texture are consistent across the whole image.";
    return serialize_description(d);
  }
  const std::string where = describe_position(mask);
  d.verdict = Verdict::tampered;
  switch (domain) {
    case DomainCategory::photoshop:
      d.location_text = "A pasted patch in the " + where + " of the image.";
      d.basis_text = "Edge artifacts around the patch and a lighting mismatch; its texture differs from the surroundings.";
      break;
    case DomainCategory::deepfake:
      d.location_text = "The face region in the " + where + " of the image.";
      d.basis_text = "Blending seams along the face edge and skin texture that disagrees with the lighting of the scene.";
      break;
    case DomainCategory::aigc:
      d.location_text = "A regenerated area in the " + where + " of the image.";
      d.basis_text = "Overly smooth texture with soft edge transitions; the lighting inside the area is inconsistent.";
      break;
  }
  return serialize_description(d);
}

}  // namespace fakeshield::mmtd
