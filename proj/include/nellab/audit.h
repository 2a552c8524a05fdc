#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nellab/header_codec.h"

namespace nellab {

enum class FindingCode {
  kNelPresentNoConsentSignal,
  kHeaderCaptureRequested,
  kLongMaxAge,
  kSubdomainScope,
  kNoRemovalPolicy,
  kInsecureNel,
  kRemovalPolicy,
};

enum class Severity { kInfo, kWarn, kHigh };

std::string_view to_string(FindingCode code);
std::string_view to_string(Severity severity);

struct AuditFinding {
  FindingCode code;
  Severity severity;
  std::string host;
  std::string evidence;  // raw header excerpt that triggered the finding

  bool operator==(const AuditFinding&) const = default;
};

struct AuditOptions {
  std::int64_t long_max_age_seconds = 30 * 86400LL;
  bool fleet = false;
};

// Response header block in arrival order. Lookups are case-insensitive and
// return the last occurrence.
class ResponseHeaders {
 public:
  void add(std::string name, std::string value) { fields_.emplace_back(std::move(name), std::move(value)); }
  std::optional<std::string> get(std::string_view name) const;
  const std::vector<std::pair<std::string, std::string>>& fields() const { return fields_; }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

// Raw header text as captured from a response: optional status line, then
// `Name: value` lines. Throws ParseError on lines without a colon.
ResponseHeaders parse_raw_headers(std::string_view text);

// `secure` is unknown for header files that carry no URL.
std::vector<AuditFinding> audit_headers(std::string_view host, std::optional<bool> secure,
                                        const ResponseHeaders& headers, const AuditOptions& options);

struct AuditReport {
  std::string target;
  std::string host;
  std::vector<AuditFinding> findings;
  std::optional<std::string> error_phase;  // dns | connect | http
  std::string error;
};

ordered_json audit_report_to_json(const AuditReport& report);
// Human rendering built from the same finding objects as the JSON.
std::string audit_report_to_text(const AuditReport& report);

}  // namespace nellab
