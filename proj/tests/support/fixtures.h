#pragma once

#include <array>
#include <string>
#include <string_view>

#include "nellab/report_engine.h"

namespace nellab::testing {

// The reference network-error report, verbatim.
inline constexpr std::string_view kReferenceReportJson = R"({
  "age": 0,
  "type": "network-error",
  "url": "https://www.example.com/",
  "body": {
    "sampling_fraction": 0.5,
    "referrer": "http://example.com/",
    "server_ip": "2001:DB8:0:0:0:0:0:42",
    "protocol": "h2",
    "method": "GET",
    "request_headers": {},
    "response_headers": {},
    "status_code": 200,
    "elapsed_time": 823,
    "phase": "application",
    "type": "http.protocol.error"
  }
})";

inline RequestOutcome reference_outcome(Timestamp at) {
  RequestOutcome o;
  o.url = "https://www.example.com/";
  o.referrer = "http://example.com/blog/post?id=3";
  o.method = "GET";
  o.protocol = "h2";
  o.server_ip = "2001:DB8:0:0:0:0:0:42";
  o.status_code = 200;
  o.elapsed_time = 823;
  o.phase = Phase::kApplication;
  o.result_type = "http.protocol.error";
  o.event_time = at;
  return o;
}

inline constexpr std::string_view kReferencePolicyNel =
    R"({"report_to":"default","max_age":86400,"success_fraction":0.5,"failure_fraction":0.5})";
inline constexpr std::string_view kReferencePolicyReportTo =
    R"({"group":"default","max_age":86400,"endpoints":[{"url":"https://collector.example/upload"}]})";

// Every client address any test hands to a volatile-mode collector writing
// under the shared log directory. The acceptance binary greps those logs.
inline constexpr std::array<std::string_view, 6> kVolatileClientIps = {
    "203.0.113.77", "198.51.100.23", "192.0.2.199", "2001:db8:85a3::8a2e:370:7334", "10.11.12.13", "127.0.0.1",
};

// One file per test binary so parallel test runs never share a writer.
inline std::string volatile_log_path(std::string_view binary) {
  return std::string(NEL_LAB_VOLATILE_LOG_DIR) + "/" + std::string(binary) + ".ndjson";
}

}  // namespace nellab::testing
