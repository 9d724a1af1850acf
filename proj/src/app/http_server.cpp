#include <thread>

#include <httplib.h>

#include "narrator/app.hpp"
#include "narrator/error.hpp"

namespace narrator::app {

struct HttpServer::Impl {
  PlayService& service;
  httplib::Server server;
  std::thread thread;
  bool bound = false;

  explicit Impl(PlayService& s) : service(s) {}
};

namespace {

void send(httplib::Response& res, const Reply& r) {
  res.status = r.status;
  res.set_content(r.body, "application/json");
}

}  // namespace

HttpServer::HttpServer(PlayService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  srv.Get("/models", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.models()); });
  srv.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.create_session(req.body));
  });
  srv.Get(R"(/sessions/([A-Za-z0-9_-]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_session(req.matches[1]));
  });
  srv.Post(R"(/sessions/([A-Za-z0-9_-]+)/choice)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.choose(req.matches[1], req.body));
  });
  srv.Post(R"(/sessions/([A-Za-z0-9_-]+)/reset)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.reset(req.matches[1]));
  });
  srv.Post(R"(/sessions/([A-Za-z0-9_-]+)/critique)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.critique(req.matches[1], req.body));
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(R"({"error":"not_found","message":"no such endpoint"})", "application/json");
    }
  });
  // The browser client may be served from another origin during development.
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound;
}

void HttpServer::listen() {
  if (!impl_->bound) throw StateError("bind before listen");
  impl_->server.listen_after_bind();
}

void HttpServer::start() {
  if (!impl_->bound) throw StateError("bind before start");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace narrator::app
