#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "nellab/audit.h"
#include "nellab/collector.h"

namespace nellab {

inline constexpr std::string_view kAuditUserAgent = "nel-lab-audit/1.0 (+header audit; single GET)";
inline constexpr int kMaxRedirects = 5;

// "host:port" -> (host, port). Throws ConfigError.
std::pair<std::string, int> split_listen_address(std::string_view address);

// HTTP front end for a Collector.
//   POST <any path>  application/reports+json  -> 200, empty body
//   GET  /reports?from=&to=&host=              -> NDJSON export
class CollectorServer {
 public:
  explicit CollectorServer(Collector& collector);
  ~CollectorServer();
  CollectorServer(const CollectorServer&) = delete;
  CollectorServer& operator=(const CollectorServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws ConfigError.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class NetworkError : public std::runtime_error {
 public:
  NetworkError(std::string phase, const std::string& what) : std::runtime_error(what), phase_(std::move(phase)) {}
  // dns | connect | http
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

struct FetchedResponse {
  std::string final_url;
  int status = 0;
  ResponseHeaders headers;
};

// One GET with a fixed user agent, following at most kMaxRedirects
// redirects. Throws NetworkError.
FetchedResponse fetch_response_headers(const std::string& url);

}  // namespace nellab
