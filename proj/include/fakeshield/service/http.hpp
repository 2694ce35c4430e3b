#pragma once

// HTTP front end for ForensicsService. Errors are JSON {code, message}.

#include "fakeshield/service/service.hpp"

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace fakeshield::service {

class HttpServer {
 public:
  explicit HttpServer(ForensicsService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port; returns the bound port. Throws on failure.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void start();   // listen() on a background thread
  void stop();

 private:
  ForensicsService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace fakeshield::service
