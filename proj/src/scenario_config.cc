#include <set>

#include "nellab/net_sim.h"
#include "nellab/url.h"

namespace nellab {
namespace {

template <typename T>
T get_or(const ordered_json& j, const char* key, const std::string& path, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

template <typename T>
T get_required(const ordered_json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + ": missing " + key);
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

const ordered_json& list(const ordered_json& j, const char* key) {
  static const ordered_json kEmpty = ordered_json::array();
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return kEmpty;
  if (!it->is_array()) throw ConfigError(std::string(key) + ": must be an array");
  return *it;
}

HeaderMap headers_from(const ordered_json& j, const char* key, const std::string& path) {
  HeaderMap out;
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  if (!it->is_object()) throw ConfigError(path + "." + key + ": must be an object");
  for (const auto& [name, value] : it->items()) {
    if (!value.is_string()) throw ConfigError(path + "." + key + "." + name + ": must be a string");
    out[name] = value.get<std::string>();
  }
  return out;
}

ordered_json headers_to(const HeaderMap& headers) {
  ordered_json out = ordered_json::object();
  for (const auto& [k, v] : headers) out[k] = v;
  return out;
}

Timestamp time_of(const ordered_json& j, const char* key, const std::string& path) {
  return at_ms(get_required<std::int64_t>(j, key, path));
}

ordered_json interval_to(const Interval& i) { return {{"start", to_ms(i.start)}, {"end", to_ms(i.end)}}; }

}  // namespace

void validate(const ScenarioConfig& c) {
  std::set<std::string> agent_ids;
  for (std::size_t i = 0; i < c.agents.size(); ++i) {
    const auto& a = c.agents[i];
    const std::string path = "agents[" + std::to_string(i) + "]";
    if (a.id.empty()) throw ConfigError(path + ": empty id");
    if (!agent_ids.insert(a.id).second) throw ConfigError(path + ": duplicate agent id '" + a.id + "'");
  }

  std::set<std::string> known_hosts;
  for (const auto& [host, _] : c.dns) known_hosts.insert(canonical_host(host));
  for (std::size_t i = 0; i < c.dns_changes.size(); ++i) {
    const std::string path = "dns_changes[" + std::to_string(i) + "]";
    if (i > 0 && c.dns_changes[i].at < c.dns_changes[i - 1].at) throw ConfigError(path + ": timestamps decrease");
    known_hosts.insert(canonical_host(c.dns_changes[i].host));
  }

  std::set<std::string> server_hosts;
  for (std::size_t i = 0; i < c.servers.size(); ++i) {
    const auto& s = c.servers[i];
    const std::string path = "servers[" + std::to_string(i) + "]";
    if (s.host.empty()) throw ConfigError(path + ": empty host");
    if (!server_hosts.insert(canonical_host(s.host)).second) throw ConfigError(path + ": duplicate host " + s.host);
    for (std::size_t k = 0; k < s.down.size(); ++k) {
      if (s.down[k].end < s.down[k].start)
        throw ConfigError(path + ".down[" + std::to_string(k) + "]: end precedes start");
      if (k > 0 && s.down[k].start < s.down[k - 1].start)
        throw ConfigError(path + ".down[" + std::to_string(k) + "]: timestamps decrease");
    }
  }

  for (std::size_t i = 0; i < c.mitm_windows.size(); ++i) {
    const auto& w = c.mitm_windows[i];
    const std::string path = "mitm_windows[" + std::to_string(i) + "]";
    if (!agent_ids.count(w.agent)) throw ConfigError(path + ": unknown agent '" + w.agent + "'");
    if (w.window.end < w.window.start) throw ConfigError(path + ": end precedes start");
    if (i > 0 && w.window.start < c.mitm_windows[i - 1].window.start) throw ConfigError(path + ": timestamps decrease");
  }

  for (std::size_t i = 0; i < c.visits.size(); ++i) {
    const auto& v = c.visits[i];
    const std::string path = "visits[" + std::to_string(i) + "]";
    if (i > 0 && v.at < c.visits[i - 1].at) throw ConfigError(path + ": timestamps decrease");
    if (!agent_ids.count(v.agent)) throw ConfigError(path + ": unknown agent '" + v.agent + "'");
    auto url = Url::parse(v.url);
    if (!url) throw ConfigError(path + ": unparseable url '" + v.url + "'");
    if (!known_hosts.count(url->host)) throw ConfigError(path + ": host " + url->host + " missing from dns");
  }
}

ScenarioConfig scenario_config_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
  ScenarioConfig c;
  c.name = get_or<std::string>(j, "name", "scenario", "");
  c.description = get_or<std::string>(j, "description", "scenario", "");
  c.seed = get_or<std::uint64_t>(j, "seed", "scenario", 0);
  if (auto it = j.find("end_at"); it != j.end() && !it->is_null()) c.end_at = time_of(j, "end_at", "scenario");

  const auto& agents = list(j, "agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    const std::string path = "agents[" + std::to_string(i) + "]";
    AgentSpec spec;
    spec.id = get_required<std::string>(a, "id", path);
    const auto consent_mode = get_or<std::string>(a, "consent_mode", path, "bypass");
    const auto subdomain_mode = get_or<std::string>(a, "subdomain_mode", path, "permissive");
    const auto referrer_mode = get_or<std::string>(a, "referrer_mode", path, "origin-only");
    auto cm = consent_mode_from_string(consent_mode);
    auto sm = subdomain_mode_from_string(subdomain_mode);
    auto rm = referrer_mode_from_string(referrer_mode);
    if (!cm) throw ConfigError(path + ".consent_mode: unknown value '" + consent_mode + "'");
    if (!sm) throw ConfigError(path + ".subdomain_mode: unknown value '" + subdomain_mode + "'");
    if (!rm) throw ConfigError(path + ".referrer_mode: unknown value '" + referrer_mode + "'");
    spec.consent_mode = *cm;
    spec.subdomain_mode = *sm;
    spec.referrer_mode = *rm;
    spec.consent = get_or<std::vector<std::string>>(a, "consent", path, {});
    spec.client_ip = get_or<std::string>(a, "client_ip", path, spec.client_ip);
    spec.user_agent = get_or<std::string>(a, "user_agent", path, spec.user_agent);
    c.agents.push_back(std::move(spec));
  }

  if (auto it = j.find("dns"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ConfigError("dns: must be an object");
    for (const auto& [host, ip] : it->items()) {
      if (!ip.is_null() && !ip.is_string()) throw ConfigError("dns." + host + ": must be a string or null");
      c.dns[canonical_host(host)] = ip.is_null() ? std::nullopt : std::optional<std::string>(ip.get<std::string>());
    }
  }

  const auto& changes = list(j, "dns_changes");
  for (std::size_t i = 0; i < changes.size(); ++i) {
    const auto& d = changes[i];
    const std::string path = "dns_changes[" + std::to_string(i) + "]";
    DnsChange change;
    change.at = time_of(d, "at", path);
    change.host = canonical_host(get_required<std::string>(d, "host", path));
    if (auto ip = d.find("ip"); ip != d.end() && !ip->is_null()) {
      if (!ip->is_string()) throw ConfigError(path + ".ip: must be a string or null");
      change.ip = ip->get<std::string>();
    }
    c.dns_changes.push_back(std::move(change));
  }

  const auto& servers = list(j, "servers");
  for (std::size_t i = 0; i < servers.size(); ++i) {
    const auto& s = servers[i];
    const std::string path = "servers[" + std::to_string(i) + "]";
    ServerSpec spec;
    spec.host = canonical_host(get_required<std::string>(s, "host", path));
    spec.secure = get_or<bool>(s, "secure", path, true);
    spec.ips = get_or<std::vector<std::string>>(s, "ips", path, {});
    spec.headers = headers_from(s, "headers", path);
    spec.protocol = get_or<std::string>(s, "protocol", path, spec.protocol);
    spec.elapsed_ms = get_or<std::int64_t>(s, "elapsed_ms", path, spec.elapsed_ms);
    const auto& down = list(s, "down");
    for (std::size_t k = 0; k < down.size(); ++k) {
      const std::string dpath = path + ".down[" + std::to_string(k) + "]";
      spec.down.push_back({time_of(down[k], "start", dpath), time_of(down[k], "end", dpath)});
    }
    const auto& paths = list(s, "paths");
    for (std::size_t k = 0; k < paths.size(); ++k) {
      const std::string ppath = path + ".paths[" + std::to_string(k) + "]";
      PathSpec p;
      p.prefix = get_or<std::string>(paths[k], "prefix", ppath, "/");
      p.status = get_or<int>(paths[k], "status", ppath, 200);
      p.error_type = get_or<std::string>(paths[k], "error_type", ppath, "");
      p.headers = headers_from(paths[k], "headers", ppath);
      spec.paths.push_back(std::move(p));
    }
    c.servers.push_back(std::move(spec));
  }

  if (auto it = j.find("collectors"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ConfigError("collectors: must be an object");
    for (const auto& [host, cfg] : it->items()) {
      try {
        auto parsed = collector_config_from_json(cfg);
        parsed.log_path.clear();  // simulated collectors never touch disk
        c.collectors[canonical_host(host)] = std::move(parsed);
      } catch (const ConfigError& e) {
        throw ConfigError("collectors." + host + ": " + e.what());
      }
    }
  }

  const auto& windows = list(j, "mitm_windows");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    const std::string path = "mitm_windows[" + std::to_string(i) + "]";
    MitmWindow window;
    window.agent = get_required<std::string>(w, "agent", path);
    window.host = canonical_host(get_required<std::string>(w, "host", path));
    window.window = {time_of(w, "start", path), time_of(w, "end", path)};
    window.headers = headers_from(w, "headers", path);
    c.mitm_windows.push_back(std::move(window));
  }

  const auto& visits = list(j, "visits");
  for (std::size_t i = 0; i < visits.size(); ++i) {
    const auto& v = visits[i];
    const std::string path = "visits[" + std::to_string(i) + "]";
    Visit visit;
    visit.at = time_of(v, "at", path);
    visit.agent = get_required<std::string>(v, "agent", path);
    visit.url = get_required<std::string>(v, "url", path);
    visit.referrer = get_or<std::string>(v, "referrer", path, "");
    visit.request_headers = headers_from(v, "request_headers", path);
    c.visits.push_back(std::move(visit));
  }

  validate(c);
  return c;
}

ordered_json scenario_config_to_json(const ScenarioConfig& c) {
  ordered_json j;
  j["name"] = c.name;
  j["description"] = c.description;
  j["seed"] = c.seed;
  j["end_at"] = c.end_at ? ordered_json(to_ms(*c.end_at)) : ordered_json(nullptr);

  j["agents"] = ordered_json::array();
  for (const auto& a : c.agents) {
    j["agents"].push_back({{"id", a.id},
                           {"consent_mode", std::string(to_string(a.consent_mode))},
                           {"subdomain_mode", std::string(to_string(a.subdomain_mode))},
                           {"referrer_mode", std::string(to_string(a.referrer_mode))},
                           {"consent", a.consent},
                           {"client_ip", a.client_ip},
                           {"user_agent", a.user_agent}});
  }

  j["dns"] = ordered_json::object();
  for (const auto& [host, ip] : c.dns) j["dns"][host] = ip ? ordered_json(*ip) : ordered_json(nullptr);

  j["dns_changes"] = ordered_json::array();
  for (const auto& d : c.dns_changes)
    j["dns_changes"].push_back(
        {{"at", to_ms(d.at)}, {"host", d.host}, {"ip", d.ip ? ordered_json(*d.ip) : ordered_json(nullptr)}});

  j["servers"] = ordered_json::array();
  for (const auto& s : c.servers) {
    ordered_json server;
    server["host"] = s.host;
    server["secure"] = s.secure;
    server["ips"] = s.ips;
    server["down"] = ordered_json::array();
    for (const auto& d : s.down) server["down"].push_back(interval_to(d));
    server["headers"] = headers_to(s.headers);
    server["paths"] = ordered_json::array();
    for (const auto& p : s.paths) {
      ordered_json path{{"prefix", p.prefix}, {"status", p.status}};
      if (!p.error_type.empty()) path["error_type"] = p.error_type;
      path["headers"] = headers_to(p.headers);
      server["paths"].push_back(std::move(path));
    }
    server["protocol"] = s.protocol;
    server["elapsed_ms"] = s.elapsed_ms;
    j["servers"].push_back(std::move(server));
  }

  j["collectors"] = ordered_json::object();
  for (const auto& [host, cfg] : c.collectors) j["collectors"][host] = collector_config_to_json(cfg);

  j["mitm_windows"] = ordered_json::array();
  for (const auto& w : c.mitm_windows)
    j["mitm_windows"].push_back({{"agent", w.agent},
                                 {"host", w.host},
                                 {"start", to_ms(w.window.start)},
                                 {"end", to_ms(w.window.end)},
                                 {"headers", headers_to(w.headers)}});

  j["visits"] = ordered_json::array();
  for (const auto& v : c.visits) {
    ordered_json visit{{"at", to_ms(v.at)}, {"agent", v.agent}, {"url", v.url}};
    if (!v.referrer.empty()) visit["referrer"] = v.referrer;
    if (!v.request_headers.empty()) visit["request_headers"] = headers_to(v.request_headers);
    j["visits"].push_back(std::move(visit));
  }
  return j;
}

}  // namespace nellab
