#include "fakeshield/service/service.hpp"

#include "fakeshield/log.hpp"

#include <openssl/rand.h>

#include <future>
#include <thread>

namespace fakeshield::service {

void to_json(nlohmann::json& j, const ServiceConfig& c) {
  j = {{"data_dir", c.data_dir.string()}, {"max_image_bytes", c.max_image_bytes},
       {"deadline_seconds", c.deadline_seconds}, {"ttl_seconds", c.ttl_seconds},
       {"max_in_flight", c.max_in_flight}, {"http_threads", c.http_threads}};
}

void from_json(const nlohmann::json& j, ServiceConfig& c) {
  c.data_dir = j.value("data_dir", c.data_dir.string());
  c.max_image_bytes = j.value("max_image_bytes", c.max_image_bytes);
  c.deadline_seconds = j.value("deadline_seconds", c.deadline_seconds);
  c.ttl_seconds = j.value("ttl_seconds", c.ttl_seconds);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.http_threads = j.value("http_threads", c.http_threads);
}

Bytes mask_to_png(const locator::TamperMask& mask) { return locator::mask_png(mask); }

namespace {

std::string new_session_id() {
  unsigned char raw[16];
  if (RAND_bytes(raw, sizeof raw) != 1) throw std::runtime_error("no randomness for session ids");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : raw) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

}  // namespace

ForensicsService::ForensicsService(ServiceConfig config, Clock clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      blobs_(config_.data_dir / "blobs"),
      store_(config_.data_dir / "sessions.db", clock_) {
  if (const int n = store_.fail_pending("interrupted by a service restart"); n > 0) {
    log_warn("marked {} interrupted sessions as failed", n);
  }
}

ForensicsService::~ForensicsService() {
  std::unique_lock lock(mu_);
  idle_.wait(lock, [&] { return in_flight_ == 0; });
}

void ForensicsService::set_analyzer(std::shared_ptr<const Analyzer> analyzer) {
  std::lock_guard lock(mu_);
  analyzer_ = std::move(analyzer);
}

bool ForensicsService::ready() const {
  std::lock_guard lock(mu_);
  return analyzer_ != nullptr;
}

void ForensicsService::finish(Session s, const AnalysisResult& r) {
  if (r.domain) {
    s.domain = nlohmann::json{{"domain", domain_id(r.domain->category)},
                              {"sentence", r.tag ? r.tag->sentence : ""},
                              {"probs", r.domain->probs}};
  }
  s.raw_text = r.detection.raw_text;
  s.verdict = mmtd::verdict_name(r.detection.parsed.verdict);
  s.location = r.detection.parsed.location_text;
  s.basis = r.detection.parsed.basis_text;
  s.flags = r.flags;
  if (r.localization) s.mask_ref = blobs_.put(mask_to_png(r.localization->mask));
  s.status = "complete";
  store_.put(s);
}

AnalyzeOutcome ForensicsService::analyze(std::span<const uint8_t> bytes) {
  if (bytes.empty()) throw InputError("empty upload");
  if (bytes.size() > config_.max_image_bytes) {
    throw PayloadTooLargeError("image is " + std::to_string(bytes.size()) + " bytes; the limit is " +
                               std::to_string(config_.max_image_bytes));
  }
  std::shared_ptr<const Analyzer> analyzer;
  {
    std::lock_guard lock(mu_);
    analyzer = analyzer_;
  }
  if (!analyzer) throw UnavailableError("models are not loaded");
  cv::Mat rgb = decode_image(bytes);

  {
    std::lock_guard lock(mu_);
    if (in_flight_ >= config_.max_in_flight) throw BusyError("too many analyses in flight");
    ++in_flight_;
  }
  Session s;
  std::future<void> done;
  try {
    s.id = new_session_id();
    s.status = "pending";
    s.created_at = clock_();
    s.expires_at = s.created_at + config_.ttl_seconds;
    s.image_ref = blobs_.put(bytes);
    s.model_versions = analyzer->versions();
    store_.put(s);
  } catch (...) {
    std::lock_guard lock(mu_);
    --in_flight_;
    idle_.notify_all();
    throw;
  }

  auto promise = std::make_shared<std::promise<void>>();
  done = promise->get_future();
  std::thread([this, s, analyzer, rgb = std::move(rgb), promise]() mutable {
    try {
      finish(s, analyzer->analyze(rgb));
      promise->set_value();
    } catch (const std::exception& e) {
      log_warn("analysis {} failed: {}", s.id, e.what());
      try {
        s.status = "failed";
        s.error = e.what();
        store_.put(s);
      } catch (const std::exception& inner) {
        log_warn("could not record failure of {}: {}", s.id, inner.what());
      }
      promise->set_exception(std::current_exception());
    }
    std::lock_guard lock(mu_);
    --in_flight_;
    idle_.notify_all();
  }).detach();

  const auto deadline = std::chrono::duration<double>(config_.deadline_seconds);
  if (done.wait_for(deadline) != std::future_status::ready) return {s, true};
  done.get();  // rethrows analysis failures
  return {session(s.id), false};
}

Session ForensicsService::session(const std::string& id) const {
  auto s = store_.get(id);
  if (!s) throw NotFoundError("no session " + id + " (unknown or expired)");
  return *s;
}

Bytes ForensicsService::mask_png(const std::string& id) const {
  const auto s = session(id);
  if (s.status == "pending") throw NotFoundError("session " + id + " is still being analysed");
  if (!s.mask_ref) throw NotFoundError("session " + id + " has no mask: the image was judged authentic");
  return blobs_.get(*s.mask_ref);
}

std::shared_ptr<std::mutex> ForensicsService::session_lock(const std::string& id) {
  std::lock_guard lock(mu_);
  auto& m = session_locks_[id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

SessionTurn ForensicsService::follow_up(const std::string& id, const std::string& question) {
  if (question.empty()) throw InputError("question is empty");
  std::shared_ptr<const Analyzer> analyzer;
  {
    std::lock_guard lock(mu_);
    analyzer = analyzer_;
  }
  if (!analyzer) throw UnavailableError("models are not loaded");
  const auto guard = session_lock(id);
  std::lock_guard lock(*guard);
  Session s = session(id);
  if (s.status != "complete") throw ConflictError("session " + id + " is " + s.status);
  if (s.model_versions != analyzer->versions()) throw ConflictError("models changed since session " + id + " was created");

  const cv::Mat rgb = decode_image(blobs_.get(s.image_ref));
  std::optional<DomainTag> tag;
  if (s.domain) tag = DomainTag{parse_domain(s.domain->at("domain").get<std::string>()), s.domain->at("sentence").get<std::string>()};
  std::vector<QaTurn> prior;
  for (const auto& t : s.turns) prior.push_back({t.question, t.answer});
  SessionTurn turn{question, analyzer->follow_up(rgb, tag, s.raw_text, prior, question), clock_()};
  s.turns.push_back(turn);
  store_.put(s);
  return turn;
}

nlohmann::json ForensicsService::health() const {
  std::lock_guard lock(mu_);
  return {{"status", "ok"},
          {"models_loaded", analyzer_ != nullptr},
          {"model_versions", analyzer_ ? analyzer_->versions() : nlohmann::json(nullptr)},
          {"in_flight", in_flight_}};
}

size_t ForensicsService::purge_expired() {
  const auto refs = store_.purge_expired();
  for (const auto& r : refs) blobs_.remove(r);
  std::lock_guard lock(mu_);
  for (auto it = session_locks_.begin(); it != session_locks_.end();) {
    it = store_.get(it->first) ? std::next(it) : session_locks_.erase(it);
  }
  return refs.size();
}

}  // namespace fakeshield::service
