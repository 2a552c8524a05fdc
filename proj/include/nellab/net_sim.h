#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nellab/collector.h"
#include "nellab/header_codec.h"
#include "nellab/policy_store.h"
#include "nellab/report_engine.h"
#include "nellab/time.h"

namespace nellab {

// Half-open [start, end).
struct Interval {
  Timestamp start{};
  Timestamp end{};
  bool contains(Timestamp t) const { return start <= t && t < end; }
};

struct PathSpec {
  std::string prefix = "/";
  int status = 200;
  std::string error_type;  // overrides the status-derived result type
  HeaderMap headers;       // layered over the server-wide headers
};

struct ServerSpec {
  std::string host;
  bool secure = true;
  std::vector<std::string> ips;  // addresses it answers on; empty = any
  std::vector<Interval> down;
  HeaderMap headers;
  std::vector<PathSpec> paths;
  std::string protocol = "h2";
  std::int64_t elapsed_ms = 100;
};

struct DnsChange {
  Timestamp at{};
  std::string host;
  std::optional<std::string> ip;  // nullopt: NXDOMAIN from then on
};

struct AgentSpec {
  std::string id;
  ConsentMode consent_mode = ConsentMode::kBypass;
  SubdomainMode subdomain_mode = SubdomainMode::kPermissive;
  ReferrerMode referrer_mode = ReferrerMode::kOriginOnly;
  std::vector<std::string> consent;  // hosts with granted consent
  std::string client_ip = "192.0.2.10";
  std::string user_agent = "Mozilla/5.0 (nel-lab agent)";
};

// Header substitution on responses from `host` to `agent` while active.
struct MitmWindow {
  std::string agent;
  std::string host;
  Interval window;
  HeaderMap headers;
};

struct Visit {
  Timestamp at{};
  std::string agent;
  std::string url;
  std::string referrer;
  HeaderMap request_headers;
};

struct ScenarioConfig {
  std::string name;
  std::string description;
  std::uint64_t seed = 0;
  std::optional<Timestamp> end_at;  // default: last scheduled event + 1 day
  std::vector<AgentSpec> agents;
  std::map<std::string, std::optional<std::string>> dns;  // initial table; null = NXDOMAIN
  std::vector<DnsChange> dns_changes;
  std::vector<ServerSpec> servers;
  std::map<std::string, CollectorConfig> collectors;
  std::vector<MitmWindow> mitm_windows;
  std::vector<Visit> visits;
};

// Throws ConfigError naming the offending entry.
void validate(const ScenarioConfig& config);
ScenarioConfig scenario_config_from_json(const ordered_json& j);
ordered_json scenario_config_to_json(const ScenarioConfig& config);

enum class EventKind {
  kVisit,
  kDnsChange,
  kPolicyInstalled,
  kPolicyRemoved,
  kPolicyIgnored,
  kReportQueued,
  kDeliveryAttempt,
  kReportStored,
  kMetaReportQueued,
  kReportDropped,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view text);

struct TraceEvent {
  Timestamp at{};
  EventKind kind = EventKind::kVisit;
  std::string agent;
  ordered_json detail = ordered_json::object();

  ordered_json to_json() const;
  bool operator==(const TraceEvent& other) const;
};

struct ScenarioTrace {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<TraceEvent> events;

  ordered_json to_json() const;
  static ScenarioTrace from_json(const ordered_json& j);
  // Canonical file form: two-space indented JSON plus trailing newline.
  std::string dump() const;

  std::vector<const TraceEvent*> of_kind(EventKind kind) const;
};

struct TraceDifference {
  std::size_t index = 0;
  std::optional<TraceEvent> left;
  std::optional<TraceEvent> right;
};

// Positional event-level comparison; the header (name, seed) is not compared.
std::vector<TraceDifference> diff_traces(const ScenarioTrace& a, const ScenarioTrace& b);

// Deterministic world: DNS table, origin servers, MitM windows, collectors and
// browser agents, advanced by a virtual clock.
class Simulator {
 public:
  explicit Simulator(ScenarioConfig config);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  ScenarioTrace run();

  // Post-run inspection.
  PolicyStore& store(std::string_view agent);
  const Collector& collector(std::string_view host) const;

 private:
  struct World;
  std::unique_ptr<World> world_;
};

ScenarioTrace run_scenario(const ScenarioConfig& config);

// Scenario library.
std::vector<std::string> builtin_scenario_names();
std::map<std::string, ScenarioConfig> builtin_scenarios();
std::optional<ScenarioConfig> builtin_scenario(std::string_view name);

}  // namespace nellab
