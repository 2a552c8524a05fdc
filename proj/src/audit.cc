#include "nellab/audit.h"

#include <sstream>

#include "nellab/url.h"

namespace nellab {
namespace {

constexpr std::size_t kEvidenceLimit = 240;

std::string excerpt(std::string_view name, std::string_view value) {
  std::string out = std::string(name) + ": " + std::string(value);
  if (out.size() > kEvidenceLimit) out = out.substr(0, kEvidenceLimit - 3) + "...";
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(FindingCode code) {
  switch (code) {
    case FindingCode::kNelPresentNoConsentSignal:
      return "NEL_PRESENT_NO_CONSENT_SIGNAL";
    case FindingCode::kHeaderCaptureRequested:
      return "HEADER_CAPTURE_REQUESTED";
    case FindingCode::kLongMaxAge:
      return "LONG_MAX_AGE";
    case FindingCode::kSubdomainScope:
      return "SUBDOMAIN_SCOPE";
    case FindingCode::kNoRemovalPolicy:
      return "NO_REMOVAL_POLICY";
    case FindingCode::kInsecureNel:
      return "INSECURE_NEL";
    case FindingCode::kRemovalPolicy:
      return "REMOVAL_POLICY";
  }
  return "UNKNOWN";
}

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::kInfo:
      return "info";
    case Severity::kWarn:
      return "warn";
    case Severity::kHigh:
      return "high";
  }
  return "info";
}

std::optional<std::string> ResponseHeaders::get(std::string_view name) const {
  for (auto it = fields_.rbegin(); it != fields_.rend(); ++it)
    if (iequals(it->first, name)) return it->second;
  return std::nullopt;
}

ResponseHeaders parse_raw_headers(std::string_view text) {
  ResponseHeaders headers;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++lineno;
    if (line.empty()) {
      // A blank line after the header block ends it.
      if (!headers.fields().empty()) break;
      continue;
    }
    if (lineno == 1 && line.rfind("HTTP/", 0) == 0) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0)
      throw ParseError("header line " + std::to_string(lineno) + " has no name: " + std::string(line));
    headers.add(std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
  }
  return headers;
}

std::vector<AuditFinding> audit_headers(std::string_view host, std::optional<bool> secure,
                                        const ResponseHeaders& headers, const AuditOptions& options) {
  std::vector<AuditFinding> findings;
  const std::string h(host);
  auto add = [&](FindingCode code, Severity severity, std::string evidence) {
    findings.push_back({code, severity, h, std::move(evidence)});
  };

  const auto nel = headers.get("NEL");
  if (!nel) {
    if (options.fleet) add(FindingCode::kNoRemovalPolicy, Severity::kInfo, "NEL: (absent)");
    return findings;
  }
  const std::string evidence = excerpt("NEL", *nel);

  if (secure && !*secure) add(FindingCode::kInsecureNel, Severity::kWarn, evidence);

  NelHeaderValue value;
  try {
    value = parse_nel_header(*nel);
  } catch (const ParseError&) {
    add(FindingCode::kNelPresentNoConsentSignal, Severity::kWarn, evidence);
    return findings;
  }
  if (std::holds_alternative<PolicyRemoval>(value)) {
    add(FindingCode::kRemovalPolicy, Severity::kInfo, evidence);
    return findings;
  }

  const auto& policy = std::get<NelPolicyHeader>(value);
  add(FindingCode::kNelPresentNoConsentSignal, Severity::kWarn, evidence);
  if (!policy.request_headers.empty() || !policy.response_headers.empty())
    add(FindingCode::kHeaderCaptureRequested, Severity::kHigh, evidence);
  if (policy.max_age > options.long_max_age_seconds) add(FindingCode::kLongMaxAge, Severity::kWarn, evidence);
  if (policy.include_subdomains) add(FindingCode::kSubdomainScope, Severity::kWarn, evidence);
  return findings;
}

ordered_json audit_report_to_json(const AuditReport& report) {
  ordered_json j;
  j["target"] = report.target;
  j["host"] = report.host;
  if (report.error_phase) {
    j["error"] = {{"phase", *report.error_phase}, {"message", report.error}};
  }
  j["findings"] = ordered_json::array();
  for (const auto& f : report.findings)
    j["findings"].push_back({{"code", std::string(to_string(f.code))},
                             {"severity", std::string(to_string(f.severity))},
                             {"host", f.host},
                             {"evidence", f.evidence}});
  return j;
}

std::string audit_report_to_text(const AuditReport& report) {
  std::ostringstream out;
  out << report.target << "\n";
  if (report.error_phase) out << "  error (" << *report.error_phase << "): " << report.error << "\n";
  if (report.findings.empty() && !report.error_phase) out << "  no findings\n";
  for (const auto& f : report.findings)
    out << "  [" << to_string(f.severity) << "] " << to_string(f.code) << " " << f.host << "\n      " << f.evidence
        << "\n";
  return out.str();
}

}  // namespace nellab
