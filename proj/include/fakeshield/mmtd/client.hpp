#pragma once

#include "fakeshield/domain.hpp"

#include <opencv2/core.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

namespace fakeshield::mmtd {

struct DescriptionRequest {
  std::string prompt;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  // Labels are passed along for offline clients; the live client ignores them.
  DomainCategory domain = DomainCategory::photoshop;
  bool authentic = false;
};

// transient(): timeouts, refusals, rate limits; worth retrying.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(const std::string& what, bool transient)
      : std::runtime_error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

// Implementations must be callable from several worker threads at once.
class DescriptionServiceClient {
 public:
  virtual ~DescriptionServiceClient() = default;
  // Returns the raw response text.
  virtual std::string describe(const DescriptionRequest& request) = 0;
};

struct LiveClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string credential_env = "FAKESHIELD_API_KEY";
  double timeout_seconds = 120.0;
};

// OpenAI-style chat-completions client; attachments go as base64 PNG data URLs.
// Throws ConfigError when the credential variable is unset.
std::unique_ptr<DescriptionServiceClient> make_live_client(const LiveClientConfig& config);

// Key under which a request is stored in a transcript: a digest of the
// prompt and the attachment contents.
std::string request_key(const DescriptionRequest& request);

// Answers from a JSON Lines transcript of {"key", "response"} objects.
// Unknown requests raise a non-transient ServiceError.
class ReplayClient final : public DescriptionServiceClient {
 public:
  explicit ReplayClient(const std::filesystem::path& transcript);
  std::string describe(const DescriptionRequest& request) override;

 private:
  std::map<std::string, std::string> responses_;
};

// Forwards to another client and appends every answered request to a
// transcript usable by ReplayClient.
class RecordingClient final : public DescriptionServiceClient {
 public:
  RecordingClient(DescriptionServiceClient& inner, const std::filesystem::path& transcript);
  std::string describe(const DescriptionRequest& request) override;

 private:
  DescriptionServiceClient& inner_;
  std::filesystem::path transcript_;
  std::mutex mu_;
};

// Offline client that writes a well-formed answer from the labels and the
// mask geometry. Used for toy corpora and tests.
class FixtureClient final : public DescriptionServiceClient {
 public:
  std::string describe(const DescriptionRequest& request) override;
};

// "top left corner", "center", "bottom", ... for the mask's bounding-box
// centre. Empty masks give "center".
std::string describe_position(const cv::Mat& mask);

// The answer FixtureClient gives; `mask` is ignored for authentic images.
std::string fixture_description(DomainCategory domain, bool authentic, const cv::Mat& mask);

}  // namespace fakeshield::mmtd
