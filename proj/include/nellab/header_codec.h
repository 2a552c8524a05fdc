#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace nellab {

using ordered_json = nlohmann::ordered_json;

inline constexpr std::string_view kReportBatchMediaType = "application/reports+json";
inline constexpr std::string_view kNetworkErrorType = "network-error";
// body.type of a successful fetch.
inline constexpr std::string_view kResultOk = "ok";
inline constexpr std::size_t kMaxHeaderBytes = 16 * 1024;
// Largest accepted max_age, in seconds. Keeps expires_at in int64 milliseconds.
inline constexpr std::int64_t kMaxAgeLimitSeconds = (std::int64_t{1} << 53) - 1;

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(what), index_(index) {}

  // Offending element of a report batch, when the error is element-local.
  std::optional<std::size_t> index() const { return index_; }

 private:
  std::optional<std::size_t> index_;
};

// Parsed value of the `NEL` response header.
struct NelPolicyHeader {
  std::string report_to;
  std::int64_t max_age = 0;  // seconds
  bool include_subdomains = false;
  double success_fraction = 0.0;
  double failure_fraction = 1.0;
  std::vector<std::string> request_headers;
  std::vector<std::string> response_headers;

  bool operator==(const NelPolicyHeader&) const = default;
};

// A `NEL` header with max_age 0: delete whatever is stored for the host.
struct PolicyRemoval {
  std::string report_to;
  bool operator==(const PolicyRemoval&) const = default;
};

using NelHeaderValue = std::variant<NelPolicyHeader, PolicyRemoval>;

struct Endpoint {
  std::string url;
  int priority = 1;
  int weight = 1;
  bool operator==(const Endpoint&) const = default;
};

// One group object of the `Report-To` header.
struct EndpointGroup {
  std::string name = "default";
  std::int64_t max_age = 0;
  bool include_subdomains = false;
  std::vector<Endpoint> endpoints;
  bool operator==(const EndpointGroup&) const = default;
};

enum class Phase { kDns, kConnection, kApplication };

std::string_view to_string(Phase phase);
std::optional<Phase> phase_from_string(std::string_view text);

using HeaderMap = std::map<std::string, std::string>;

struct NelReportBody {
  double sampling_fraction = 0.0;
  std::string referrer;
  std::string server_ip;
  std::string protocol;
  std::string method;
  HeaderMap request_headers;
  HeaderMap response_headers;
  int status_code = 0;
  std::int64_t elapsed_time = 0;  // ms
  Phase phase = Phase::kApplication;
  std::string type;

  bool operator==(const NelReportBody&) const = default;
};

struct NelReport {
  std::int64_t age = 0;  // ms between the event and the upload
  std::string type{kNetworkErrorType};
  std::string url;
  NelReportBody body;

  bool operator==(const NelReport&) const = default;
};

// NEL header. Throws ParseError.
NelHeaderValue parse_nel_header(std::string_view raw);
std::string serialize_nel_header(const NelPolicyHeader& policy);
std::string serialize_nel_removal(const PolicyRemoval& removal);

// Report-To header: one or more comma-separated group objects. Throws ParseError.
std::vector<EndpointGroup> parse_report_to_header(std::string_view raw);
std::string serialize_report_to_header(std::span<const EndpointGroup> groups);

// Upload body. `reports` must be non-empty (std::invalid_argument otherwise).
std::string serialize_report_batch(std::span<const NelReport> reports);
// Throws ParseError; element-level failures carry the element index.
std::vector<NelReport> parse_report_batch(std::string_view body);

// Single report <-> JSON object with the exact upload field order.
ordered_json report_to_json(const NelReport& report);
NelReport report_from_json(const ordered_json& j);

ordered_json policy_to_json(const NelPolicyHeader& policy);
NelPolicyHeader policy_from_json(const ordered_json& j);
ordered_json group_to_json(const EndpointGroup& group);
EndpointGroup group_from_json(const ordered_json& j);

}  // namespace nellab
