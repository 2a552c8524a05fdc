#include "nellab/collector.h"

#include <arpa/inet.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "nellab/url.h"

namespace nellab {
namespace {

std::string strip_query_and_fragment(const std::string& url) {
  if (url.empty()) return url;
  auto parsed = Url::parse(url);
  if (!parsed) {
    const auto cut = url.find_first_of("?#");
    return cut == std::string::npos ? url : url.substr(0, cut);
  }
  parsed->has_query = parsed->has_fragment = false;
  parsed->query.clear();
  parsed->fragment.clear();
  return parsed->to_string();
}

template <typename T>
T field(const ordered_json& j, const char* name, T fallback) {
  auto it = j.find(name);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("collector config: bad value for ") + name);
  }
}

}  // namespace

std::string_view to_string(IpMode mode) {
  switch (mode) {
    case IpMode::kVolatile:
      return "volatile";
    case IpMode::kTruncate:
      return "truncate";
    case IpMode::kFull:
      return "full";
  }
  return "volatile";
}

std::optional<IpMode> ip_mode_from_string(std::string_view text) {
  if (text == "volatile") return IpMode::kVolatile;
  if (text == "truncate") return IpMode::kTruncate;
  if (text == "full") return IpMode::kFull;
  return std::nullopt;
}

CollectorConfig collector_config_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("collector config must be a JSON object");
  CollectorConfig c;
  c.listen = field<std::string>(j, "listen", c.listen);
  const auto mode = field<std::string>(j, "ip_mode", std::string(to_string(c.ip_mode)));
  auto parsed_mode = ip_mode_from_string(mode);
  if (!parsed_mode) throw ConfigError("collector config: unknown ip_mode '" + mode + "'");
  c.ip_mode = *parsed_mode;
  c.strip_url_query = field<bool>(j, "strip_url_query", c.strip_url_query);
  c.drop_captured_headers = field<bool>(j, "drop_captured_headers", c.drop_captured_headers);
  c.store_user_agent = field<bool>(j, "store_user_agent", c.store_user_agent);
  c.log_path = field<std::string>(j, "log_path", c.log_path);
  if (auto it = j.find("retention_ms"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
      throw ConfigError("collector config: retention_ms must be a non-negative integer or null");
    c.retention = Millis(it->get<std::int64_t>());
  }
  if (auto it = j.find("emit_nel_headers"); it != j.end() && !it->is_null()) {
    try {
      c.emit_nel = policy_from_json(it->at("nel"));
      for (const auto& g : it->at("report_to")) c.emit_report_to.push_back(group_from_json(g));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("collector config: emit_nel_headers: ") + e.what());
    }
    const bool named_group_present = std::any_of(c.emit_report_to.begin(), c.emit_report_to.end(),
                                                 [&](const EndpointGroup& g) { return g.name == c.emit_nel->report_to; });
    if (!named_group_present)
      throw ConfigError("collector config: emit_nel_headers.nel.report_to names no report_to group");
  }
  return c;
}

ordered_json collector_config_to_json(const CollectorConfig& c) {
  ordered_json j;
  j["listen"] = c.listen;
  j["ip_mode"] = std::string(to_string(c.ip_mode));
  j["strip_url_query"] = c.strip_url_query;
  j["drop_captured_headers"] = c.drop_captured_headers;
  j["store_user_agent"] = c.store_user_agent;
  j["retention_ms"] = c.retention ? ordered_json(c.retention->count()) : ordered_json(nullptr);
  if (c.emit_nel) {
    ordered_json emit;
    emit["nel"] = policy_to_json(*c.emit_nel);
    emit["report_to"] = ordered_json::array();
    for (const auto& g : c.emit_report_to) emit["report_to"].push_back(group_to_json(g));
    j["emit_nel_headers"] = std::move(emit);
  }
  if (!c.log_path.empty()) j["log_path"] = c.log_path;
  return j;
}

ordered_json record_to_json(const StoredRecord& r) {
  ordered_json j;
  j["received_at"] = to_ms(r.received_at);
  j["client_ip"] = r.client_ip;
  j["user_agent"] = r.user_agent;
  j["report"] = report_to_json(r.report);
  return j;
}

StoredRecord record_from_json(const ordered_json& j) {
  StoredRecord r;
  try {
    r.received_at = at_ms(j.at("received_at").get<std::int64_t>());
    r.client_ip = j.at("client_ip").get<std::string>();
    r.user_agent = j.at("user_agent").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("record: ") + e.what());
  }
  r.report = report_from_json(j.at("report"));
  return r;
}

std::string truncate_ip(std::string_view ip) {
  const std::string text(ip);
  char out[INET6_ADDRSTRLEN] = {};
  in_addr v4{};
  if (inet_pton(AF_INET, text.c_str(), &v4) == 1) {
    auto* bytes = reinterpret_cast<unsigned char*>(&v4.s_addr);
    bytes[3] = 0;
    inet_ntop(AF_INET, &v4, out, sizeof(out));
    return out;
  }
  in6_addr v6{};
  if (inet_pton(AF_INET6, text.c_str(), &v6) == 1) {
    for (int i = 6; i < 16; ++i) v6.s6_addr[i] = 0;
    inet_ntop(AF_INET6, &v6, out, sizeof(out));
    return out;
  }
  return std::string(kRedacted);
}

NelReport minimize(NelReport report, const CollectorConfig& config) {
  if (config.strip_url_query) {
    report.url = strip_query_and_fragment(report.url);
    report.body.referrer = strip_query_and_fragment(report.body.referrer);
  }
  if (config.drop_captured_headers) {
    report.body.request_headers.clear();
    report.body.response_headers.clear();
  }
  return report;
}

Collector::Collector(CollectorConfig config) : config_(std::move(config)) {
  if (config_.log_path.empty()) return;
  if (std::ifstream in(config_.log_path); in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        records_.push_back(record_from_json(ordered_json::parse(line)));
      } catch (const std::exception& e) {
        throw ConfigError(config_.log_path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  log_.open(config_.log_path, std::ios::app);
  if (!log_) throw ConfigError("cannot open log " + config_.log_path);
}

IngestResult Collector::ingest(std::string_view body, std::string_view client_ip, std::string_view user_agent,
                               Timestamp now) {
  if (body.size() > kMaxUploadBytes) throw RejectError(413, "report batch exceeds 1 MiB");
  std::vector<NelReport> reports;
  try {
    reports = parse_report_batch(body);
  } catch (const ParseError& e) {
    throw RejectError(400, e.what());
  }

  IngestResult result;
  result.response_headers = response_headers();

  std::string stored_ip;
  switch (config_.ip_mode) {
    case IpMode::kVolatile:
      stored_ip = kRedacted;
      break;
    case IpMode::kTruncate:
      stored_ip = truncate_ip(client_ip);
      break;
    case IpMode::kFull:
      stored_ip = client_ip;
      break;
  }
  const std::string stored_agent = config_.store_user_agent ? std::string(user_agent) : std::string(kRedacted);
  const bool zero_success_policy = config_.emit_nel && config_.emit_nel->success_fraction == 0.0;

  std::lock_guard lock(mu_);
  if (config_.ip_mode == IpMode::kVolatile) ++volatile_clients_[std::string(client_ip)];
  for (auto& report : reports) {
    if (zero_success_policy && report.body.type == kResultOk)
      result.warnings.push_back("success report for " + report.url + " under a zero success_fraction policy");
    StoredRecord record{now, minimize(std::move(report), config_), stored_ip, stored_agent};
    if (log_.is_open()) log_ << record_to_json(record).dump() << '\n';
    records_.push_back(std::move(record));
    ++result.accepted;
  }
  if (log_.is_open()) log_.flush();
  return result;
}

std::size_t Collector::purge_expired(Timestamp now) {
  if (!config_.retention) return 0;
  std::lock_guard lock(mu_);
  const auto retention = *config_.retention;
  const auto purged =
      std::erase_if(records_, [&](const StoredRecord& r) { return now - r.received_at > retention; });
  if (purged > 0) rewrite_log_locked();
  return purged;
}

void Collector::rewrite_log_locked() {
  if (config_.log_path.empty()) return;
  log_.close();
  const std::string tmp = config_.log_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& r : records_) out << record_to_json(r).dump() << '\n';
  }
  std::filesystem::rename(tmp, config_.log_path);
  log_.open(config_.log_path, std::ios::app);
}

void Collector::export_records(const ExportFilter& filter, std::ostream& out) const {
  std::lock_guard lock(mu_);
  for (const auto& r : records_) {
    if (filter.from && r.received_at < *filter.from) continue;
    if (filter.to && r.received_at >= *filter.to) continue;
    if (!filter.host.empty() && host_of(r.report.url) != canonical_host(filter.host)) continue;
    out << record_to_json(r).dump() << '\n';
  }
}

std::string Collector::export_ndjson(const ExportFilter& filter) const {
  std::ostringstream out;
  export_records(filter, out);
  return out.str();
}

std::vector<StoredRecord> Collector::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t Collector::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

HeaderMap Collector::response_headers() const {
  HeaderMap headers;
  if (config_.emit_nel) {
    headers["NEL"] = serialize_nel_header(*config_.emit_nel);
    headers["Report-To"] = serialize_report_to_header(config_.emit_report_to);
  }
  return headers;
}

std::size_t Collector::volatile_client_count() const {
  std::lock_guard lock(mu_);
  return volatile_clients_.size();
}

void Collector::flush() {
  std::lock_guard lock(mu_);
  if (log_.is_open()) log_.flush();
}

}  // namespace nellab
