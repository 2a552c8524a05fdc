#include "nellab/header_codec.h"

#include <cmath>

#include "nellab/url.h"

namespace nellab {
namespace {

ordered_json parse_json(std::string_view raw, const char* what) {
  try {
    return ordered_json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

void check_header_size(std::string_view raw, const char* what) {
  if (raw.size() > kMaxHeaderBytes)
    throw ParseError(std::string(what) + ": value exceeds " + std::to_string(kMaxHeaderBytes) + " bytes");
}

bool is_integer(const ordered_json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

std::int64_t non_negative_int(const ordered_json& v, const std::string& member, std::int64_t limit) {
  if (!is_integer(v)) throw ParseError(member + " must be an integer");
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ParseError(member + " must be non-negative");
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(limit))
    throw ParseError(member + " is out of range");
  const auto value = v.get<std::int64_t>();
  if (value > limit) throw ParseError(member + " is out of range");
  return value;
}

double fraction(const ordered_json& v, const std::string& member) {
  if (!v.is_number()) throw ParseError(member + " must be a number");
  const double f = v.get<double>();
  if (!(f >= 0.0 && f <= 1.0)) throw ParseError(member + " must be within [0, 1]");
  return f;
}

bool boolean(const ordered_json& v, const std::string& member) {
  if (!v.is_boolean()) throw ParseError(member + " must be a boolean");
  return v.get<bool>();
}

std::string text(const ordered_json& v, const std::string& member) {
  if (!v.is_string()) throw ParseError(member + " must be a string");
  return v.get<std::string>();
}

std::vector<std::string> text_list(const ordered_json& v, const std::string& member) {
  if (!v.is_array()) throw ParseError(member + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : v) out.push_back(text(item, member + "[]"));
  return out;
}

const ordered_json* member(const ordered_json& obj, const char* name) {
  auto it = obj.find(name);
  return it == obj.end() ? nullptr : &*it;
}

HeaderMap header_map(const ordered_json& v, const std::string& name) {
  if (!v.is_object()) throw ParseError(name + " must be an object");
  HeaderMap out;
  for (const auto& [k, value] : v.items()) out[k] = text(value, name + "." + k);
  return out;
}

const ordered_json& required(const ordered_json& obj, const char* name) {
  const auto* v = member(obj, name);
  if (!v) throw ParseError(std::string("missing member ") + name);
  return *v;
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kDns:
      return "dns";
    case Phase::kConnection:
      return "connection";
    case Phase::kApplication:
      return "application";
  }
  return "application";
}

std::optional<Phase> phase_from_string(std::string_view text) {
  if (text == "dns") return Phase::kDns;
  if (text == "connection") return Phase::kConnection;
  if (text == "application") return Phase::kApplication;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// NEL

NelPolicyHeader policy_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ParseError("NEL: value must be a JSON object");
  NelPolicyHeader policy;
  const auto* max_age = member(j, "max_age");
  if (!max_age) throw ParseError("NEL: missing max_age");
  policy.max_age = non_negative_int(*max_age, "max_age", kMaxAgeLimitSeconds);
  if (const auto* v = member(j, "report_to")) policy.report_to = text(*v, "report_to");
  else if (policy.max_age > 0) throw ParseError("NEL: missing report_to");
  if (const auto* v = member(j, "include_subdomains")) policy.include_subdomains = boolean(*v, "include_subdomains");
  if (const auto* v = member(j, "success_fraction")) policy.success_fraction = fraction(*v, "success_fraction");
  if (const auto* v = member(j, "failure_fraction")) policy.failure_fraction = fraction(*v, "failure_fraction");
  if (const auto* v = member(j, "request_headers")) policy.request_headers = text_list(*v, "request_headers");
  if (const auto* v = member(j, "response_headers")) policy.response_headers = text_list(*v, "response_headers");
  return policy;
}

NelHeaderValue parse_nel_header(std::string_view raw) {
  check_header_size(raw, "NEL");
  const auto j = parse_json(raw, "NEL");
  if (!j.is_object()) throw ParseError("NEL: value must be a JSON object");
  // Removal wins over every other member check.
  if (const auto* max_age = member(j, "max_age"); max_age && max_age->is_number() && max_age->get<double>() == 0.0) {
    PolicyRemoval removal;
    if (const auto* v = member(j, "report_to"); v && v->is_string()) removal.report_to = v->get<std::string>();
    return removal;
  }
  return policy_from_json(j);
}

ordered_json policy_to_json(const NelPolicyHeader& policy) {
  ordered_json j;
  j["report_to"] = policy.report_to;
  j["max_age"] = policy.max_age;
  j["include_subdomains"] = policy.include_subdomains;
  j["success_fraction"] = policy.success_fraction;
  j["failure_fraction"] = policy.failure_fraction;
  if (!policy.request_headers.empty()) j["request_headers"] = policy.request_headers;
  if (!policy.response_headers.empty()) j["response_headers"] = policy.response_headers;
  return j;
}

std::string serialize_nel_header(const NelPolicyHeader& policy) { return policy_to_json(policy).dump(); }

std::string serialize_nel_removal(const PolicyRemoval& removal) {
  ordered_json j;
  if (!removal.report_to.empty()) j["report_to"] = removal.report_to;
  j["max_age"] = 0;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Report-To

EndpointGroup group_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ParseError("Report-To: group must be a JSON object");
  EndpointGroup group;
  if (const auto* v = member(j, "group")) group.name = text(*v, "group");
  group.max_age = non_negative_int(required(j, "max_age"), "max_age", kMaxAgeLimitSeconds);
  if (const auto* v = member(j, "include_subdomains")) group.include_subdomains = boolean(*v, "include_subdomains");
  const auto& endpoints = required(j, "endpoints");
  if (!endpoints.is_array() || endpoints.empty())
    throw ParseError("Report-To: group '" + group.name + "' needs a non-empty endpoints array");
  for (const auto& e : endpoints) {
    if (!e.is_object()) throw ParseError("Report-To: endpoint must be a JSON object");
    Endpoint endpoint;
    endpoint.url = text(required(e, "url"), "url");
    auto url = Url::parse(endpoint.url);
    if (!url || !url->secure()) throw ParseError("Report-To: endpoint URL must be https: " + endpoint.url);
    if (const auto* v = member(e, "priority"))
      endpoint.priority = static_cast<int>(non_negative_int(*v, "priority", 1 << 30));
    if (const auto* v = member(e, "weight")) {
      endpoint.weight = static_cast<int>(non_negative_int(*v, "weight", 1 << 30));
      if (endpoint.weight == 0) throw ParseError("Report-To: weight must be positive");
    }
    group.endpoints.push_back(std::move(endpoint));
  }
  return group;
}

std::vector<EndpointGroup> parse_report_to_header(std::string_view raw) {
  check_header_size(raw, "Report-To");
  std::string wrapped;
  wrapped.reserve(raw.size() + 2);
  wrapped += '[';
  wrapped += raw;
  wrapped += ']';
  const auto j = parse_json(wrapped, "Report-To");
  if (j.empty()) throw ParseError("Report-To: no groups");
  std::vector<EndpointGroup> groups;
  for (const auto& g : j) groups.push_back(group_from_json(g));
  return groups;
}

ordered_json group_to_json(const EndpointGroup& group) {
  ordered_json j;
  j["group"] = group.name;
  j["max_age"] = group.max_age;
  if (group.include_subdomains) j["include_subdomains"] = true;
  j["endpoints"] = ordered_json::array();
  for (const auto& e : group.endpoints)
    j["endpoints"].push_back({{"url", e.url}, {"priority", e.priority}, {"weight", e.weight}});
  return j;
}

std::string serialize_report_to_header(std::span<const EndpointGroup> groups) {
  std::string out;
  for (const auto& g : groups) {
    if (!out.empty()) out += ", ";
    out += group_to_json(g).dump();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report batches

ordered_json report_to_json(const NelReport& report) {
  const auto& b = report.body;
  ordered_json body;
  body["sampling_fraction"] = b.sampling_fraction;
  body["referrer"] = b.referrer;
  body["server_ip"] = b.server_ip;
  body["protocol"] = b.protocol;
  body["method"] = b.method;
  body["request_headers"] = ordered_json::object();
  for (const auto& [k, v] : b.request_headers) body["request_headers"][k] = v;
  body["response_headers"] = ordered_json::object();
  for (const auto& [k, v] : b.response_headers) body["response_headers"][k] = v;
  body["status_code"] = b.status_code;
  body["elapsed_time"] = b.elapsed_time;
  body["phase"] = std::string(to_string(b.phase));
  body["type"] = b.type;

  ordered_json j;
  j["age"] = report.age;
  j["type"] = report.type;
  j["url"] = report.url;
  j["body"] = std::move(body);
  return j;
}

NelReport report_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ParseError("report must be a JSON object");
  NelReport report;
  report.age = non_negative_int(required(j, "age"), "age", std::numeric_limits<std::int64_t>::max());
  report.type = text(required(j, "type"), "type");
  if (report.type != kNetworkErrorType) throw ParseError("unsupported report type " + report.type);
  report.url = text(required(j, "url"), "url");
  const auto& body = required(j, "body");
  if (!body.is_object()) throw ParseError("body must be a JSON object");
  auto& b = report.body;
  b.sampling_fraction = fraction(required(body, "sampling_fraction"), "sampling_fraction");
  b.referrer = text(required(body, "referrer"), "referrer");
  b.server_ip = text(required(body, "server_ip"), "server_ip");
  b.protocol = text(required(body, "protocol"), "protocol");
  b.method = text(required(body, "method"), "method");
  b.request_headers = header_map(required(body, "request_headers"), "request_headers");
  b.response_headers = header_map(required(body, "response_headers"), "response_headers");
  const auto& status = required(body, "status_code");
  if (!is_integer(status)) throw ParseError("status_code must be an integer");
  b.status_code = status.get<int>();
  b.elapsed_time = non_negative_int(required(body, "elapsed_time"), "elapsed_time",
                                    std::numeric_limits<std::int64_t>::max());
  auto phase = phase_from_string(text(required(body, "phase"), "phase"));
  if (!phase) throw ParseError("unknown phase");
  b.phase = *phase;
  b.type = text(required(body, "type"), "body.type");
  return report;
}

std::string serialize_report_batch(std::span<const NelReport> reports) {
  if (reports.empty()) throw std::invalid_argument("serialize_report_batch: empty batch");
  ordered_json batch = ordered_json::array();
  for (const auto& r : reports) batch.push_back(report_to_json(r));
  return batch.dump();
}

std::vector<NelReport> parse_report_batch(std::string_view body) {
  const auto j = parse_json(body, "report batch");
  if (!j.is_array()) throw ParseError("report batch must be a JSON array");
  std::vector<NelReport> reports;
  reports.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      reports.push_back(report_from_json(j[i]));
    } catch (const ParseError& e) {
      throw ParseError("report " + std::to_string(i) + ": " + e.what(), i);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("report " + std::to_string(i) + ": " + e.what(), i);
    }
  }
  return reports;
}

}  // namespace nellab
