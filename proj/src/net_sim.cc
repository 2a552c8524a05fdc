#include "nellab/net_sim.h"

#include <algorithm>

#include "nellab/url.h"

namespace nellab {
namespace {

constexpr std::string_view kEventNames[] = {
    "visit",           "dns_change",   "policy_installed", "policy_removed",     "policy_ignored",
    "report_queued",   "delivery_attempt", "report_stored", "meta_report_queued", "report_dropped",
};

std::optional<std::string_view> header_value(const HeaderMap& headers, std::string_view name) {
  for (const auto& [k, v] : headers)
    if (iequals(k, name)) return std::string_view(v);
  return std::nullopt;
}

// Overlay `top` on `base`, replacing same-named headers case-insensitively.
HeaderMap overlay(HeaderMap base, const HeaderMap& top) {
  for (const auto& [k, v] : top) {
    std::erase_if(base, [&](const auto& kv) { return iequals(kv.first, k); });
    base[k] = v;
  }
  return base;
}

}  // namespace

std::string_view to_string(EventKind kind) { return kEventNames[static_cast<std::size_t>(kind)]; }

std::optional<EventKind> event_kind_from_string(std::string_view text) {
  for (std::size_t i = 0; i < std::size(kEventNames); ++i)
    if (kEventNames[i] == text) return static_cast<EventKind>(i);
  return std::nullopt;
}

ordered_json TraceEvent::to_json() const {
  ordered_json j;
  j["at"] = to_ms(at);
  j["event"] = std::string(to_string(kind));
  j["agent"] = agent;
  j["detail"] = detail;
  return j;
}

bool TraceEvent::operator==(const TraceEvent& other) const {
  return at == other.at && kind == other.kind && agent == other.agent && detail.dump() == other.detail.dump();
}

ordered_json ScenarioTrace::to_json() const {
  ordered_json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["events"] = ordered_json::array();
  for (const auto& e : events) j["events"].push_back(e.to_json());
  return j;
}

ScenarioTrace ScenarioTrace::from_json(const ordered_json& j) {
  ScenarioTrace trace;
  try {
    trace.scenario = j.at("scenario").get<std::string>();
    trace.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("events")) {
      TraceEvent event;
      event.at = at_ms(e.at("at").get<std::int64_t>());
      auto kind = event_kind_from_string(e.at("event").get<std::string>());
      if (!kind) throw ParseError("unknown trace event " + e.at("event").get<std::string>());
      event.kind = *kind;
      event.agent = e.at("agent").get<std::string>();
      event.detail = e.at("detail");
      trace.events.push_back(std::move(event));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trace: ") + e.what());
  }
  return trace;
}

std::string ScenarioTrace::dump() const { return to_json().dump(2) + "\n"; }

std::vector<const TraceEvent*> ScenarioTrace::of_kind(EventKind kind) const {
  std::vector<const TraceEvent*> out;
  for (const auto& e : events)
    if (e.kind == kind) out.push_back(&e);
  return out;
}

std::vector<TraceDifference> diff_traces(const ScenarioTrace& a, const ScenarioTrace& b) {
  std::vector<TraceDifference> out;
  const auto n = std::max(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < n; ++i) {
    const TraceEvent* left = i < a.events.size() ? &a.events[i] : nullptr;
    const TraceEvent* right = i < b.events.size() ? &b.events[i] : nullptr;
    if (left && right && *left == *right) continue;
    TraceDifference d;
    d.index = i;
    if (left) d.left = *left;
    if (right) d.right = *right;
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct Agent {
  AgentSpec spec;
  PolicyStore store;
  ReportEngine engine;
  std::map<std::string, std::string> last_resolution;

  Agent(AgentSpec s, std::uint64_t seed)
      : spec(std::move(s)),
        store(spec.consent_mode),
        engine(seed, ReportEngineOptions{spec.referrer_mode, spec.subdomain_mode}) {
    for (const auto& host : spec.consent) store.set_consent(host, true);
  }
};

struct Simulator::World {
  ScenarioConfig config;
  std::vector<std::unique_ptr<Agent>> agents;
  std::map<std::string, std::optional<std::string>> dns;
  std::map<std::string, const ServerSpec*> servers;
  std::map<std::string, std::unique_ptr<Collector>> collectors;
  ScenarioTrace trace;
  Timestamp end{};

  explicit World(ScenarioConfig c) : config(std::move(c)) {
    validate(config);
    for (std::size_t i = 0; i < config.agents.size(); ++i)
      agents.push_back(std::make_unique<Agent>(config.agents[i], config.seed + i));
    dns = config.dns;
    for (const auto& s : config.servers) servers[s.host] = &s;
    for (const auto& [host, cfg] : config.collectors) {
      auto copy = cfg;
      copy.log_path.clear();
      collectors[host] = std::make_unique<Collector>(std::move(copy));
    }
    trace.scenario = config.name;
    trace.seed = config.seed;

    Timestamp last{};
    if (!config.visits.empty()) last = std::max(last, config.visits.back().at);
    if (!config.dns_changes.empty()) last = std::max(last, config.dns_changes.back().at);
    for (const auto& w : config.mitm_windows) last = std::max(last, w.window.end);
    end = config.end_at.value_or(saturating_add(last, Millis(kDayMs)));
  }

  Agent& agent(std::string_view id) {
    for (auto& a : agents)
      if (a->spec.id == id) return *a;
    throw ConfigError("unknown agent '" + std::string(id) + "'");
  }

  void emit(Timestamp at, EventKind kind, const std::string& agent, ordered_json detail) {
    trace.events.push_back({at, kind, agent, std::move(detail)});
  }

  bool server_down(const ServerSpec* s, Timestamp t) const {
    return std::any_of(s->down.begin(), s->down.end(), [&](const Interval& i) { return i.contains(t); });
  }

  // Connection failure for `host` at `ip`, if any.
  std::optional<std::string> connect_error(const std::string& host, const std::string& ip, Timestamp t) const {
    auto it = servers.find(host);
    if (it == servers.end()) {
      if (collectors.count(host)) return std::nullopt;
      return "tcp.refused";
    }
    if (server_down(it->second, t)) return "tcp.refused";
    const auto& ips = it->second->ips;
    if (!ips.empty() && std::find(ips.begin(), ips.end(), ip) == ips.end()) return "tcp.address_unreachable";
    return std::nullopt;
  }

  void apply_headers(Agent& a, const std::string& host, bool secure, const HeaderMap& headers, Timestamp t,
                     std::string_view via, bool mitm) {
    auto nel = header_value(headers, "NEL");
    auto report_to = header_value(headers, "Report-To");
    const bool had_policy = a.store.find(host) != nullptr;
    const auto effect = a.store.process_policy_headers(host, secure, nel, report_to, t);
    switch (effect.kind) {
      case StoreEffect::Kind::kInstalled:
      case StoreEffect::Kind::kReplaced: {
        const auto* stored = a.store.find(host);
        emit(t, EventKind::kPolicyInstalled, a.spec.id,
             {{"host", host},
              {"report_to", stored->policy.report_to},
              {"max_age", stored->policy.max_age},
              {"include_subdomains", stored->policy.include_subdomains},
              {"success_fraction", stored->policy.success_fraction},
              {"failure_fraction", stored->policy.failure_fraction},
              {"replaced", effect.kind == StoreEffect::Kind::kReplaced},
              {"via", via},
              {"mitm", mitm}});
        break;
      }
      case StoreEffect::Kind::kRemoved:
        emit(t, EventKind::kPolicyRemoved, a.spec.id,
             {{"host", host}, {"had_policy", had_policy}, {"via", via}, {"mitm", mitm}});
        break;
      case StoreEffect::Kind::kIgnored:
        if (*effect.reason != IgnoreReason::kNoHeader)
          emit(t, EventKind::kPolicyIgnored, a.spec.id,
               {{"host", host}, {"reason", std::string(to_string(*effect.reason))}, {"via", via}});
        break;
    }
  }

  void queue_event(const Agent& a, Timestamp t, const DeliveryTask& task) {
    emit(t, task.is_meta ? EventKind::kMetaReportQueued : EventKind::kReportQueued, a.spec.id,
         {{"task", task.id},
          {"url", task.report.url},
          {"type", task.report.body.type},
          {"phase", std::string(to_string(task.report.body.phase))},
          {"server_ip", task.report.body.server_ip},
          {"sampling_fraction", task.report.body.sampling_fraction},
          {"policy_host", task.policy_host},
          {"group", task.group.name}});
  }

  DeliveryResult upload(Agent& a, const Upload& up) {
    auto url = Url::parse(up.endpoint_url);
    const std::string host = url ? url->host : std::string{};
    auto emit_attempt = [&](const DeliveryResult& r) {
      ordered_json detail{{"endpoint", up.endpoint_url},
                          {"collector", host},
                          {"result", std::string(to_string(r.kind))},
                          {"reports", up.reports.size()},
                          {"tasks", up.task_ids},
                          {"meta", std::any_of(up.is_meta.begin(), up.is_meta.end(), [](bool m) { return m; })}};
      if (!r.ok()) {
        detail["phase"] = std::string(to_string(r.phase));
        detail["error_type"] = r.error_type;
        if (r.status_code) detail["status_code"] = r.status_code;
      }
      emit(up.at, EventKind::kDeliveryAttempt, a.spec.id, std::move(detail));
      return r;
    };

    auto dns_it = dns.find(host);
    if (dns_it == dns.end() || !dns_it->second)
      return emit_attempt(DeliveryResult::unreachable(Phase::kDns, "dns.name_not_resolved"));
    const std::string ip = *dns_it->second;
    if (auto err = connect_error(host, ip, up.at))
      return emit_attempt(DeliveryResult::unreachable(Phase::kConnection, *err, ip));
    auto collector_it = collectors.find(host);
    if (collector_it == collectors.end()) return emit_attempt(DeliveryResult::http_error(404, ip));

    auto& collector = *collector_it->second;
    const auto before = collector.size();
    IngestResult ingested;
    try {
      ingested = collector.ingest(up.body, a.spec.client_ip, a.spec.user_agent, up.at);
    } catch (const RejectError& e) {
      return emit_attempt(DeliveryResult::http_error(e.status(), ip));
    }
    auto result = DeliveryResult::delivered(ip);
    result.response_headers = ingested.response_headers;
    emit_attempt(result);

    const auto records = collector.records();
    for (std::size_t k = 0; k < up.reports.size(); ++k) {
      const auto& stored = records[before + k];
      emit(up.at, EventKind::kReportStored, a.spec.id,
           {{"collector", host},
            {"task", up.task_ids[k]},
            {"meta", static_cast<bool>(up.is_meta[k])},
            {"url", stored.report.url},
            {"type", stored.report.body.type},
            {"phase", std::string(to_string(stored.report.body.phase))},
            {"server_ip", stored.report.body.server_ip},
            {"age", stored.report.age},
            {"client_ip", stored.client_ip}});
    }

    auto server_it = servers.find(host);
    const bool secure = url->secure() && (server_it == servers.end() || server_it->second->secure);
    apply_headers(a, host, secure, ingested.response_headers, up.at, "upload", false);
    return result;
  }

  void deliver(Agent& a, Timestamp t) {
    Transport transport = [&](const Upload& up) { return upload(a, up); };
    // Meta-reports are due immediately; keep draining until nothing is due now.
    for (int guard = 0; guard < 1024; ++guard) {
      auto due = a.engine.next_due();
      if (!due || *due > t) return;
      auto round = a.engine.deliver_due(t, a.store, transport);
      for (const auto& task : round.dropped)
        emit(t, EventKind::kReportDropped, a.spec.id,
             {{"task", task.id},
              {"url", task.report.url},
              {"attempts", task.attempts},
              {"last_endpoint", task.last_endpoint},
              {"meta", task.is_meta}});
      for (const auto& task : round.meta_queued) queue_event(a, t, task);
    }
  }

  void visit(const Visit& v) {
    Agent& a = agent(v.agent);
    const Timestamp t = v.at;
    const auto url = *Url::parse(v.url);
    const std::string& host = url.host;

    RequestOutcome outcome;
    outcome.url = v.url;
    outcome.referrer = v.referrer;
    outcome.request_headers = v.request_headers;
    outcome.event_time = t;

    auto finish = [&] {
      ordered_json detail{{"url", v.url},
                          {"result", outcome.result_type},
                          {"phase", std::string(to_string(outcome.phase))},
                          {"server_ip", outcome.server_ip},
                          {"status_code", outcome.status_code}};
      emit(t, EventKind::kVisit, a.spec.id, std::move(detail));
    };

    auto dns_it = dns.find(host);
    std::optional<std::string> ip = dns_it == dns.end() ? std::nullopt : dns_it->second;
    const ServerSpec* server = servers.count(host) ? servers.at(host) : nullptr;
    if (server) outcome.protocol = server->protocol;

    bool proceed = true;
    if (!ip) {
      outcome.phase = Phase::kDns;
      outcome.result_type = "dns.name_not_resolved";
      proceed = false;
    } else {
      outcome.server_ip = *ip;
      auto last = a.last_resolution.find(host);
      const bool changed = last != a.last_resolution.end() && last->second != *ip;
      a.last_resolution[host] = *ip;
      if (changed) {
        outcome.phase = Phase::kDns;
        outcome.result_type = "dns.address_changed";
        proceed = false;
      } else if (auto err = connect_error(host, *ip, t)) {
        outcome.phase = Phase::kConnection;
        outcome.result_type = *err;
        proceed = false;
      }
    }

    if (proceed) {
      HeaderMap headers = server ? server->headers : HeaderMap{};
      int status = 200;
      std::string error_type;
      if (server) {
        const PathSpec* best = nullptr;
        for (const auto& p : server->paths)
          if (url.path.rfind(p.prefix, 0) == 0 && (!best || p.prefix.size() > best->prefix.size())) best = &p;
        if (best) {
          status = best->status;
          error_type = best->error_type;
          headers = overlay(std::move(headers), best->headers);
        }
        outcome.elapsed_time = server->elapsed_ms;
      }
      bool mitm = false;
      for (const auto& w : config.mitm_windows) {
        if (w.agent == a.spec.id && w.host == host && w.window.contains(t)) {
          headers = overlay(std::move(headers), w.headers);
          mitm = true;
        }
      }
      outcome.phase = Phase::kApplication;
      outcome.status_code = status;
      outcome.response_headers = headers;
      if (!error_type.empty()) outcome.result_type = error_type;
      else if (status >= 400) outcome.result_type = "http.error";

      finish();
      const bool secure = url.secure() && (!server || server->secure);
      apply_headers(a, host, secure, headers, t, "visit", mitm);
    } else {
      finish();
    }

    if (auto task = a.engine.observe(outcome, a.store, t)) queue_event(a, t, *task);
    deliver(a, t);
  }

  void dns_change(const DnsChange& d) {
    dns[d.host] = d.ip;
    emit(d.at, EventKind::kDnsChange, "", {{"host", d.host}, {"ip", d.ip ? ordered_json(*d.ip) : ordered_json(nullptr)}});
  }

  ScenarioTrace run() {
    std::size_t next_dns = 0;
    std::size_t next_visit = 0;
    for (int guard = 0; guard < 10'000'000; ++guard) {
      // Config events: dns changes before visits at equal instants.
      std::optional<Timestamp> cfg_at;
      bool dns_first = false;
      if (next_dns < config.dns_changes.size()) {
        cfg_at = config.dns_changes[next_dns].at;
        dns_first = true;
      }
      if (next_visit < config.visits.size() && (!cfg_at || config.visits[next_visit].at < *cfg_at)) {
        cfg_at = config.visits[next_visit].at;
        dns_first = false;
      }

      std::optional<Timestamp> wake_at;
      for (const auto& a : agents)
        if (auto due = a->engine.next_due(); due && (!wake_at || *due < *wake_at)) wake_at = due;

      if (wake_at && (!cfg_at || *wake_at < *cfg_at)) {
        if (*wake_at > end) break;
        for (auto& a : agents)
          if (auto due = a->engine.next_due(); due && *due == *wake_at) deliver(*a, *wake_at);
        continue;
      }
      if (!cfg_at || *cfg_at > end) break;
      if (dns_first) dns_change(config.dns_changes[next_dns++]);
      else visit(config.visits[next_visit++]);
    }
    return trace;
  }
};

Simulator::Simulator(ScenarioConfig config) : world_(std::make_unique<World>(std::move(config))) {}
Simulator::~Simulator() = default;

ScenarioTrace Simulator::run() { return world_->run(); }

PolicyStore& Simulator::store(std::string_view agent) { return world_->agent(agent).store; }

const Collector& Simulator::collector(std::string_view host) const {
  auto it = world_->collectors.find(canonical_host(host));
  if (it == world_->collectors.end()) throw ConfigError("no collector at " + std::string(host));
  return *it->second;
}

ScenarioTrace run_scenario(const ScenarioConfig& config) { return Simulator(config).run(); }

}  // namespace nellab
