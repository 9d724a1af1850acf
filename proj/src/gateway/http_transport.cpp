#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "narrator/error.hpp"
#include "narrator/gateway.hpp"

namespace narrator::gateway {

namespace {

// Splits "https://host:port/prefix/path" into "https://host:port" and "/prefix/path".
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    const auto [origin, path] = split_url(request.url);
    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::seconds{10});
    client.set_read_timeout(request.timeout);
    client.set_write_timeout(request.timeout);
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        headers.emplace(k, v);
      }
    }
    auto res = client.Post(path, headers, request.body, content_type);
    if (!res) throw TransportError("request to " + origin + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

}  // namespace narrator::gateway
