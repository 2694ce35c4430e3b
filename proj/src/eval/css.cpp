#include "fakeshield/eval/css.hpp"

#include "fakeshield/errors.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdlib>
#include <stdexcept>

namespace fakeshield::eval {

namespace {

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string HashEmbedder::id() const { return "hash-bow-" + std::to_string(dim_); }

Eigen::VectorXd HashEmbedder::embed(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  const auto w = words(text);
  for (size_t i = 0; i < w.size(); ++i) {
    v(static_cast<Eigen::Index>(fnv1a(w[i]) % static_cast<uint64_t>(dim_))) += 1.0;
    if (i + 1 < w.size()) v(static_cast<Eigen::Index>(fnv1a(w[i] + " " + w[i + 1]) % static_cast<uint64_t>(dim_))) += 0.5;
  }
  return v;
}

namespace {

class LiveEmbedder final : public Embedder {
 public:
  explicit LiveEmbedder(LiveEmbedderConfig config) : config_(std::move(config)) {}
  std::string id() const override { return "live:" + config_.model; }

  Eigen::VectorXd embed(std::string_view text) const override {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.credential_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const nlohmann::json body = {{"model", config_.model}, {"input", std::string(text)}};
    const auto res = client.Post("/v1/embeddings", headers, body.dump(), "application/json");
    if (!res) throw UnavailableError("embedding service unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw UnavailableError("embedding service returned HTTP " + std::to_string(res->status));
    const auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("data") || j["data"].empty()) {
      throw UnavailableError("malformed embedding response");
    }
    const auto values = j["data"][0].at("embedding").get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

 private:
  LiveEmbedderConfig config_;
};

}  // namespace

std::unique_ptr<Embedder> make_live_embedder(const LiveEmbedderConfig& config) {
  if (config.endpoint.empty() || config.model.empty()) throw ConfigError("live embedder needs an endpoint and a model");
  return std::make_unique<LiveEmbedder>(config);
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("embedding widths differ");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

ExplanationEval eval_css(const std::vector<std::string>& preds, const std::vector<std::string>& gts,
                         const Embedder& embedder) {
  if (preds.size() != gts.size()) throw std::invalid_argument("prediction and reference counts differ");
  ExplanationEval e;
  e.embedder_id = embedder.id();
  for (size_t i = 0; i < preds.size(); ++i) {
    double s = 0.0;
    if (preds[i].empty()) {
      ++e.flagged_empty;
    } else {
      s = cosine(embedder.embed(preds[i]), embedder.embed(gts[i]));
    }
    e.per_pair.push_back(s);
    e.mean_css += s;
  }
  if (!preds.empty()) e.mean_css /= static_cast<double>(preds.size());
  return e;
}

}  // namespace fakeshield::eval
