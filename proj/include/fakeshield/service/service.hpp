#pragma once

// Analysis sessions over the model pipeline: synchronous analyze with a
// deadline, persisted results, mask retrieval and follow-up questions.

#include "fakeshield/errors.hpp"
#include "fakeshield/pipeline.hpp"
#include "fakeshield/service/store.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>

namespace fakeshield::service {

class PayloadTooLargeError : public InputError {
 public:
  using InputError::InputError;
};

// A follow-up on a session that is not ready for one.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BusyError : public UnavailableError {
 public:
  using UnavailableError::UnavailableError;
};

struct ServiceConfig {
  std::filesystem::path data_dir = "fakeshield-data";
  size_t max_image_bytes = 20u << 20;
  double deadline_seconds = 60.0;
  int64_t ttl_seconds = 24 * 3600;
  int max_in_flight = 16;
  int http_threads = 16;
};
void to_json(nlohmann::json& j, const ServiceConfig& c);
void from_json(const nlohmann::json& j, ServiceConfig& c);

class Analyzer {
 public:
  virtual ~Analyzer() = default;
  virtual AnalysisResult analyze(const cv::Mat& rgb) const = 0;
  virtual std::string follow_up(const cv::Mat& rgb, const std::optional<DomainTag>& tag,
                                const std::string& detection_text, const std::vector<QaTurn>& prior,
                                const std::string& question) const = 0;
  virtual nlohmann::json versions() const = 0;
};

class PipelineAnalyzer final : public Analyzer {
 public:
  explicit PipelineAnalyzer(PipelineModels models) : models_(std::move(models)) { models_.validate(); }
  AnalysisResult analyze(const cv::Mat& rgb) const override { return analyze_image(models_, rgb); }
  std::string follow_up(const cv::Mat& rgb, const std::optional<DomainTag>& tag, const std::string& detection_text,
                        const std::vector<QaTurn>& prior, const std::string& question) const override {
    return answer_follow_up(models_, rgb, tag, detection_text, prior, question);
  }
  nlohmann::json versions() const override { return models_.versions(); }

 private:
  PipelineModels models_;
};

// 8-bit PNG, 255 where the binary mask is set.
Bytes mask_to_png(const locator::TamperMask& mask);

struct AnalyzeOutcome {
  Session session;
  bool pending = false;
};

class ForensicsService {
 public:
  explicit ForensicsService(ServiceConfig config, Clock clock = system_clock());
  ~ForensicsService();  // waits for background analyses to finish
  ForensicsService(const ForensicsService&) = delete;
  ForensicsService& operator=(const ForensicsService&) = delete;

  // Null means "not loaded": analyze and follow_up then fail with
  // UnavailableError.
  void set_analyzer(std::shared_ptr<const Analyzer> analyzer);
  bool ready() const;

  // InputError: empty or undecodable; PayloadTooLargeError; UnavailableError
  // when no models are loaded; BusyError over the in-flight cap. A run that
  // outlives the deadline keeps going and the session comes back pending.
  AnalyzeOutcome analyze(std::span<const uint8_t> image_bytes);
  Session session(const std::string& id) const;  // NotFoundError
  Bytes mask_png(const std::string& id) const;   // NotFoundError
  SessionTurn follow_up(const std::string& id, const std::string& question);
  nlohmann::json health() const;
  size_t purge_expired();

  const ServiceConfig& config() const { return config_; }

 private:
  void finish(Session s, const AnalysisResult& r);
  std::shared_ptr<std::mutex> session_lock(const std::string& id);

  ServiceConfig config_;
  Clock clock_;
  BlobStore blobs_;
  SessionStore store_;
  mutable std::mutex mu_;
  std::shared_ptr<const Analyzer> analyzer_;
  std::map<std::string, std::shared_ptr<std::mutex>> session_locks_;
  std::condition_variable idle_;
  int in_flight_ = 0;
};

}  // namespace fakeshield::service
