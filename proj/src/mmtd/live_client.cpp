#include "fakeshield/errors.hpp"
#include "fakeshield/hash.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/mmtd/client.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>

namespace fakeshield::mmtd {

namespace {

class LiveClient final : public DescriptionServiceClient {
 public:
  LiveClient(LiveClientConfig config, std::string credential)
      : config_(std::move(config)), credential_(std::move(credential)) {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + config_.endpoint);
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    base_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
  }

  std::string describe(const DescriptionRequest& request) override {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    content.push_back(attachment(request.image_path, false));
    if (request.mask_path) content.push_back(attachment(*request.mask_path, true));
    const nlohmann::json body = {
        {"model", config_.model},
        {"messages", {{{"role", "user"}, {"content", content}}}},
        {"temperature", 0}};

    httplib::Client cli(base_);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    cli.set_connection_timeout(secs);
    cli.set_read_timeout(secs);
    cli.set_write_timeout(secs);
    cli.set_bearer_token_auth(credential_);
    auto res = cli.Post(path_, body.dump(), "application/json");
    if (!res) throw ServiceError("request failed: " + httplib::to_string(res.error()), true);
    if (res->status == 429 || res->status >= 500) {
      throw ServiceError("service returned HTTP " + std::to_string(res->status), true);
    }
    if (res->status != 200) {
      throw ServiceError("service returned HTTP " + std::to_string(res->status) + ": " + res->body, false);
    }
    const auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
      throw ServiceError("malformed service response", false);
    }
    const auto& choice = j["choices"][0];
    const auto& message = choice.value("message", nlohmann::json::object());
    if (choice.value("finish_reason", std::string()) == "content_filter" ||
        (message.contains("refusal") && !message["refusal"].is_null())) {
      throw ServiceError("service refused the request", true);
    }
    if (!message.contains("content") || !message["content"].is_string()) {
      throw ServiceError("response has no text content", false);
    }
    return message["content"].get<std::string>();
  }

 private:
  static nlohmann::json attachment(const std::filesystem::path& path, bool mask) {
    const Bytes png = mask ? encode_png(read_mask(path)) : encode_png(read_image(path));
    return {{"type", "image_url"},
            {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}};
  }

  LiveClientConfig config_;
  std::string credential_;
  std::string base_;
  std::string path_;
};

}  // namespace

std::unique_ptr<DescriptionServiceClient> make_live_client(const LiveClientConfig& config) {
  const char* key = std::getenv(config.credential_env.c_str());
  if (!key || !*key) throw ConfigError("environment variable " + config.credential_env + " is not set");
  return std::make_unique<LiveClient>(config, key);
}

}  // namespace fakeshield::mmtd
