#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nellab/header_codec.h"
#include "nellab/time.h"

namespace nellab {

inline constexpr std::size_t kMaxUploadBytes = 1024 * 1024;
inline constexpr std::string_view kRedacted = "[redacted]";

enum class IpMode { kVolatile, kTruncate, kFull };

std::string_view to_string(IpMode mode);
std::optional<IpMode> ip_mode_from_string(std::string_view text);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CollectorConfig {
  std::string listen = "127.0.0.1:8080";
  IpMode ip_mode = IpMode::kVolatile;
  bool strip_url_query = true;
  bool drop_captured_headers = true;
  bool store_user_agent = false;
  std::optional<Millis> retention;  // nullopt: keep forever
  // Policy the collector serves on its own upload responses.
  std::optional<NelPolicyHeader> emit_nel;
  std::vector<EndpointGroup> emit_report_to;
  // NDJSON log; empty keeps records in memory only.
  std::string log_path;
};

// Throws ConfigError naming the offending field.
CollectorConfig collector_config_from_json(const ordered_json& j);
ordered_json collector_config_to_json(const CollectorConfig& config);

struct StoredRecord {
  Timestamp received_at{};
  NelReport report;
  std::string client_ip;
  std::string user_agent;

  bool operator==(const StoredRecord&) const = default;
};

ordered_json record_to_json(const StoredRecord& record);
StoredRecord record_from_json(const ordered_json& j);

class RejectError : public std::runtime_error {
 public:
  RejectError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct IngestResult {
  std::size_t accepted = 0;
  HeaderMap response_headers;
  std::vector<std::string> warnings;
};

struct ExportFilter {
  std::optional<Timestamp> from;  // inclusive
  std::optional<Timestamp> to;    // exclusive
  std::string host;               // report url host; empty matches all
};

// Zero the last IPv4 octet, keep the top 48 bits of IPv6. Returns the
// redaction marker for anything that is not an IP literal.
std::string truncate_ip(std::string_view ip);

// Idempotent data minimization applied before a report is persisted.
NelReport minimize(NelReport report, const CollectorConfig& config);

// Report collector core, transport-agnostic. Appends go through one mutex so
// the log is a linear order; ingest may be called from many threads.
class Collector {
 public:
  // Loads an existing log when config.log_path names one. Throws ConfigError
  // when the log cannot be opened.
  explicit Collector(CollectorConfig config);

  const CollectorConfig& config() const { return config_; }

  // Throws RejectError(413) for oversized bodies, RejectError(400) when the
  // body is not a valid report batch. Nothing is appended on rejection.
  IngestResult ingest(std::string_view body, std::string_view client_ip, std::string_view user_agent,
                      Timestamp now);

  std::size_t purge_expired(Timestamp now);

  void export_records(const ExportFilter& filter, std::ostream& out) const;
  std::string export_ndjson(const ExportFilter& filter = {}) const;

  std::vector<StoredRecord> records() const;
  std::size_t size() const;

  // NEL / Report-To headers served on upload responses; empty when unset.
  HeaderMap response_headers() const;

  // Client addresses seen since start; memory only, never persisted.
  std::size_t volatile_client_count() const;

  void flush();

 private:
  void rewrite_log_locked();

  CollectorConfig config_;
  mutable std::mutex mu_;
  std::vector<StoredRecord> records_;
  std::map<std::string, std::size_t> volatile_clients_;
  std::ofstream log_;
};

}  // namespace nellab
