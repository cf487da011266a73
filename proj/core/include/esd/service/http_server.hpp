#pragma once

#include <memory>
#include <string>

#include "esd/service/chat_service.hpp"

namespace esd::service {

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

/// Transport-free routing of the JSON API:
///   POST /sessions                 body: overrides object (optional)  -> 201 Session
///   GET  /sessions/{id}                                               -> 200 Session
///   POST /sessions/{id}/turns      body: {"message", "seed"?, "forced_strategy"?} -> 200 TurnResponse
///   GET  /healthz                                                     -> 200 {"status","checkpoint"}
/// Failures answer {"error": code, "detail": text}.
HttpReply handle_request(ChatService& service, const std::string& method, const std::string& path,
                         const std::string& body);

/// Serves handle_request over HTTP on a background thread.
class HttpServer {
 public:
  explicit HttpServer(ChatService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace esd::service
