#include "nellab/http.h"

#include <netdb.h>

#include <atomic>
#include <chrono>

#include "httplib.h"
#include "nellab/url.h"

namespace nellab {
namespace {

Timestamp wall_now() {
  using namespace std::chrono;
  return at_ms(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

std::optional<Timestamp> query_time(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return at_ms(std::stoll(req.get_param_value(key)));
}

bool resolves(const std::string& host) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const int rc = getaddrinfo(host.c_str(), nullptr, &hints, &result);
  if (result) freeaddrinfo(result);
  return rc == 0;
}

std::string resolve_location(const Url& base, const std::string& location) {
  if (Url::parse(location)) return location;
  if (location.rfind("//", 0) == 0) return base.scheme + ":" + location;
  if (!location.empty() && location.front() == '/') return base.origin() + location;
  const auto slash = base.path.rfind('/');
  return base.origin() + base.path.substr(0, slash + 1) + location;
}

}  // namespace

std::pair<std::string, int> split_listen_address(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == address.size())
    throw ConfigError("listen address must be host:port, got '" + std::string(address) + "'");
  std::string host(address.substr(0, colon));
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  int port = 0;
  try {
    std::size_t used = 0;
    const std::string port_text(address.substr(colon + 1));
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("listen address has a bad port: '" + std::string(address) + "'");
  }
  if (port < 0 || port > 65535) throw ConfigError("listen port out of range: " + std::to_string(port));
  return {host, port};
}

struct CollectorServer::Impl {
  Collector& collector;
  httplib::Server server;
  std::atomic<bool> bound{false};

  explicit Impl(Collector& c) : collector(c) {
    server.set_payload_max_length(kMaxUploadBytes);
    server.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
      const auto content_type = req.get_header_value("Content-Type");
      const auto media = content_type.substr(0, content_type.find(';'));
      if (media != kReportBatchMediaType) {
        res.status = 415;
        return;
      }
      try {
        auto result =
            collector.ingest(req.body, req.remote_addr, req.get_header_value("User-Agent"), wall_now());
        for (const auto& [name, value] : result.response_headers) res.set_header(name, value);
        for (const auto& warning : result.warnings) std::fprintf(stderr, "collector warning: %s\n", warning.c_str());
        res.status = 200;
      } catch (const RejectError& e) {
        res.status = e.status();
      }
    });
    server.Get("/reports", [this](const httplib::Request& req, httplib::Response& res) {
      ExportFilter filter;
      try {
        filter.from = query_time(req, "from");
        filter.to = query_time(req, "to");
      } catch (const std::exception&) {
        res.status = 400;
        return;
      }
      if (req.has_param("host")) filter.host = req.get_param_value("host");
      res.set_content(collector.export_ndjson(filter), "application/x-ndjson");
    });
  }
};

CollectorServer::CollectorServer(Collector& collector) : impl_(std::make_unique<Impl>(collector)) {}
CollectorServer::~CollectorServer() { stop(); }

int CollectorServer::bind(const std::string& host, int port) {
  int bound_port = port;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
    if (bound_port < 0) throw ConfigError("cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  return bound_port;
}

void CollectorServer::listen() {
  if (!impl_->bound) throw ConfigError("listen() before bind()");
  impl_->server.listen_after_bind();
}

void CollectorServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool CollectorServer::running() const { return impl_->server.is_running(); }

FetchedResponse fetch_response_headers(const std::string& start_url) {
  std::string current = start_url;
  for (int hop = 0; hop <= kMaxRedirects; ++hop) {
    auto url = Url::parse(current);
    if (!url) throw NetworkError("http", "not an http(s) URL: " + current);
    if (!resolves(url->host)) throw NetworkError("dns", "cannot resolve " + url->host);

    httplib::Client client(url->origin());
    client.set_follow_location(false);
    client.set_connection_timeout(10);
    client.set_read_timeout(10);
    std::string target = url->path;
    if (url->has_query) target += "?" + url->query;
    auto res = client.Get(target, {{"User-Agent", std::string(kAuditUserAgent)}});
    if (!res) {
      const auto err = res.error();
      const bool connect = err == httplib::Error::Connection || err == httplib::Error::ConnectionTimeout;
      throw NetworkError(connect ? "connect" : "http", httplib::to_string(err) + " for " + current);
    }

    if (res->status >= 300 && res->status < 400 && res->has_header("Location")) {
      current = resolve_location(*url, res->get_header_value("Location"));
      continue;
    }
    FetchedResponse out;
    out.final_url = current;
    out.status = res->status;
    for (const auto& [name, value] : res->headers) out.headers.add(name, value);
    return out;
  }
  throw NetworkError("http", "more than " + std::to_string(kMaxRedirects) + " redirects from " + start_url);
}

}  // namespace nellab
