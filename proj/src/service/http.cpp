#include "fakeshield/service/http.hpp"

#include "fakeshield/log.hpp"

#include <httplib.h>

namespace fakeshield::service {

namespace {

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"code", code}, {"message", message}}.dump(), "application/json");
}

void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

nlohmann::json analyze_body(const Session& s) {
  return {{"session_id", s.id},       {"status", s.status},
          {"verdict", s.verdict},     {"location", s.location},
          {"basis", s.basis},         {"flags", s.flags},
          {"has_mask", s.mask_ref.has_value()},
          {"domain", s.domain ? *s.domain : nlohmann::json(nullptr)}};
}

// Runs `fn`, turning the library's exception types into HTTP errors.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const PayloadTooLargeError& e) {
    reply_error(res, 413, "payload_too_large", e.what());
  } catch (const InputError& e) {
    reply_error(res, 400, "invalid_input", e.what());
  } catch (const NotFoundError& e) {
    reply_error(res, 404, "not_found", e.what());
  } catch (const ConflictError& e) {
    reply_error(res, 409, "conflict", e.what());
  } catch (const BusyError& e) {
    reply_error(res, 503, "busy", e.what());
  } catch (const UnavailableError& e) {
    reply_error(res, 503, "models_unavailable", e.what());
  } catch (const std::exception& e) {
    log_warn("internal error: {}", e.what());
    reply_error(res, 500, "internal", e.what());
  }
}

}  // namespace

HttpServer::HttpServer(ForensicsService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  const int threads = std::max(1, service_.config().http_threads);
  srv.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<size_t>(threads)); };
  // Leave headroom for multipart framing; the service enforces the image limit.
  srv.set_payload_max_length(service_.config().max_image_bytes + (1u << 20));

  srv.Post("/analyze", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string body;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("image")) throw InputError("multipart upload needs an 'image' part");
        body = req.get_file_value("image").content;
      } else {
        body = req.body;
      }
      const auto outcome = service_.analyze(std::span(reinterpret_cast<const uint8_t*>(body.data()), body.size()));
      if (outcome.pending) {
        reply_json(res, 202, {{"session_id", outcome.session.id}, {"status", "pending"}});
      } else {
        reply_json(res, 200, analyze_body(outcome.session));
      }
    });
  });

  srv.Get(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto s = service_.session(req.matches[1]);
      reply_json(res, s.status == "pending" ? 202 : 200, nlohmann::json(s));
    });
  });

  srv.Get(R"(/sessions/([0-9a-f]+)/mask)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto png = service_.mask_png(req.matches[1]);
      res.status = 200;
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });

  srv.Post(R"(/sessions/([0-9a-f]+)/follow_up)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto j = nlohmann::json::parse(req.body, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("question") || !j["question"].is_string()) {
        throw InputError("body must be a JSON object with a string 'question'");
      }
      const auto turn = service_.follow_up(req.matches[1], j["question"].get<std::string>());
      const auto s = service_.session(req.matches[1]);
      reply_json(res, 200, {{"session_id", s.id}, {"question", turn.question}, {"answer", turn.answer},
                            {"timestamp", turn.timestamp}, {"turns", s.turns.size()}});
    });
  });

  srv.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply_json(res, 200, service_.health()); });
  });

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 413) reply_error(res, 413, "payload_too_large", "request body too large");
    else if (res.status == 404) reply_error(res, 404, "not_found", "no such endpoint");
    else reply_error(res, res.status, "http_error", "request failed");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw std::runtime_error("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::start() {
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace fakeshield::service
