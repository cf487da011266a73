#include "esd/service/http_server.hpp"

#include <chrono>
#include <thread>

#include "httplib.h"

#include "esd/error.hpp"

namespace esd::service {

using nlohmann::json;

namespace {

HttpReply reply(int status, const json& j) { return {status, j.dump()}; }

HttpReply error_reply(int status, const std::string& code, const std::string& detail) {
  return reply(status, {{"error", code}, {"detail", detail}});
}

json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not JSON: ") + e.what());
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  const std::string clean = path.substr(0, path.find('?'));
  for (char c : clean) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

HttpReply turn(ChatService& service, const std::string& id, const json& body) {
  if (!body.is_object()) throw ParseError("turn body must be a JSON object");
  if (!body.contains("message") || !body.at("message").is_string()) {
    throw InvalidArgument("turn body needs a string 'message'");
  }
  std::optional<std::uint64_t> seed;
  if (body.contains("seed") && !body.at("seed").is_null()) {
    const auto& s = body.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0)) {
      throw InvalidArgument("'seed' must be a non-negative integer or null");
    }
    seed = s.get<std::uint64_t>();
  }
  std::optional<corpus::Strategy> forced;
  if (body.contains("forced_strategy") && !body.at("forced_strategy").is_null()) {
    if (!body.at("forced_strategy").is_string()) throw InvalidArgument("'forced_strategy' must be a string or null");
    const auto name = body.at("forced_strategy").get<std::string>();
    forced = corpus::parse_strategy(name);
    if (!forced) throw InvalidArgument("unknown strategy '" + name + "'");
  }
  for (const auto& [k, v] : body.items()) {
    if (k != "message" && k != "seed" && k != "forced_strategy") throw InvalidArgument("unknown field '" + k + "'");
  }
  return reply(200, to_json(service.chat_turn(id, body.at("message").get<std::string>(), seed, forced)));
}

}  // namespace

HttpReply handle_request(ChatService& service, const std::string& method, const std::string& path,
                         const std::string& body) {
  try {
    const auto parts = split_path(path);
    if (parts.size() == 1 && parts[0] == "healthz") {
      if (method != "GET") return error_reply(405, "method_not_allowed", method + " " + path);
      return reply(200, {{"status", "ok"}, {"checkpoint", service.options().checkpoint_name}});
    }
    if (!parts.empty() && parts[0] == "sessions") {
      if (parts.size() == 1) {
        if (method != "POST") return error_reply(405, "method_not_allowed", method + " " + path);
        return reply(201, to_json(service.create_session(overrides_from_json(parse_body(body)))));
      }
      if (parts.size() == 2) {
        if (method != "GET") return error_reply(405, "method_not_allowed", method + " " + path);
        return reply(200, to_json(service.get_session(parts[1])));
      }
      if (parts.size() == 3 && parts[2] == "turns") {
        if (method != "POST") return error_reply(405, "method_not_allowed", method + " " + path);
        return turn(service, parts[1], parse_body(body));
      }
    }
    return error_reply(404, "not_found", "no route for " + method + " " + path);
  } catch (const NotFound& e) {
    return error_reply(404, "not_found", e.what());
  } catch (const ParseError& e) {
    return error_reply(400, "bad_request", e.what());
  } catch (const InvalidArgument& e) {
    return error_reply(400, "invalid_argument", e.what());
  } catch (const ValidationError& e) {
    return error_reply(400, "invalid_argument", e.what());
  } catch (const json::exception& e) {
    return error_reply(400, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

struct HttpServer::Impl {
  ChatService& service;
  httplib::Server server;
  std::thread thread;
  int port = -1;

  explicit Impl(ChatService& s) : service(s) {}
};

HttpServer::HttpServer(ChatService& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = handle_request(impl_->service, req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Delete(".*", handler);
  impl_->server.Patch(".*", handler);
  impl_->server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  if (impl_->thread.joinable()) throw Error("server already running");
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->port = bound;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::wait() {
  while (impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpServer::port() const { return impl_->port; }

}  // namespace esd::service
