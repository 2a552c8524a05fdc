// nel-lab: run NEL scenarios, serve a report collector, audit NEL headers.
//
// Exit codes: 0 ok, 2 usage/config, 3 network.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "nellab/audit.h"
#include "nellab/collector.h"
#include "nellab/http.h"
#include "nellab/net_sim.h"
#include "nellab/url.h"

namespace {

using namespace nellab;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNetwork = 3;
constexpr std::size_t kFleetWorkers = 8;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json read_json_file(const std::string& path) {
  try {
    return ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct ScenarioArgs {
  std::string target;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_scenario(const ScenarioArgs& args) {
  std::optional<ScenarioConfig> config = builtin_scenario(args.target);
  try {
    if (!config) {
      if (!std::filesystem::is_regular_file(args.target)) {
        std::cerr << "unknown scenario '" << args.target << "'. builtin scenarios:";
        for (const auto& name : builtin_scenario_names()) std::cerr << " " << name;
        std::cerr << "\n";
        return kExitUsage;
      }
      config = scenario_config_from_json(read_json_file(args.target));
    }
    if (args.seed) {
      config->seed = *args.seed;
    } else if (const char* env = std::getenv("NEL_LAB_SEED"); env && *env) {
      config->seed = std::stoull(env);
    }
    const auto trace = run_scenario(*config);
    if (args.out.empty()) {
      std::cout << trace.dump();
    } else {
      std::ofstream out(args.out, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write " + args.out);
      out << trace.dump();
      std::cerr << "wrote " << trace.events.size() << " events to " << args.out << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument&) {
    std::cerr << "config error: NEL_LAB_SEED is not an integer\n";
    return kExitUsage;
  } catch (const std::out_of_range&) {
    std::cerr << "config error: NEL_LAB_SEED is out of range\n";
    return kExitUsage;
  }
}

struct CollectArgs {
  std::string config_path;
  std::string listen;
  std::string ip_mode;
  std::string log_path;
};

int cmd_collect(const CollectArgs& args) {
  CollectorConfig config;
  try {
    config = collector_config_from_json(read_json_file(args.config_path));
    if (!args.listen.empty()) config.listen = args.listen;
    if (!args.ip_mode.empty()) {
      auto mode = ip_mode_from_string(args.ip_mode);
      if (!mode) throw ConfigError("unknown ip mode '" + args.ip_mode + "'");
      config.ip_mode = *mode;
    }
    if (!args.log_path.empty()) config.log_path = args.log_path;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::unique_ptr<Collector> collector;
  std::unique_ptr<CollectorServer> server;
  int port = 0;
  std::string host;
  try {
    std::tie(host, port) = split_listen_address(config.listen);
    collector = std::make_unique<Collector>(config);
    server = std::make_unique<CollectorServer>(*collector);
    port = server->bind(host, port);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "collector listening=" << host << ":" << port << " ip_mode=" << to_string(config.ip_mode)
            << " log=" << (config.log_path.empty() ? "(memory)" : config.log_path) << std::endl;

  std::thread watcher([&] {
    auto last_purge = std::chrono::steady_clock::now();
    while (!g_interrupted) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      if (std::chrono::steady_clock::now() - last_purge > std::chrono::minutes(1)) {
        using namespace std::chrono;
        collector->purge_expired(at_ms(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count()));
        last_purge = steady_clock::now();
      }
    }
    server->stop();
  });
  server->listen();
  g_interrupted = true;
  watcher.join();
  collector->flush();
  std::cout << "collector stopped records=" << collector->size() << std::endl;
  return kExitOk;
}

struct AuditArgs {
  std::string target;
  std::string headers_file;
  std::string fleet;
  std::string host;
  bool json = false;
  std::int64_t long_max_age_days = 30;
};

AuditReport audit_url(const std::string& target, const AuditOptions& options) {
  AuditReport report;
  report.target = target;
  report.host = host_of(target);
  try {
    auto response = fetch_response_headers(target);
    auto final_url = Url::parse(response.final_url);
    report.findings = audit_headers(final_url->host, final_url->secure(), response.headers, options);
  } catch (const NetworkError& e) {
    report.error_phase = e.phase();
    report.error = e.what();
  }
  return report;
}

int cmd_audit(const AuditArgs& args) {
  AuditOptions options;
  options.long_max_age_seconds = args.long_max_age_days * 86400;
  std::vector<AuditReport> reports;

  try {
    if (!args.fleet.empty()) {
      options.fleet = true;
      std::vector<std::string> targets;
      std::istringstream lines(read_file(args.fleet));
      for (std::string line; std::getline(lines, line);) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty() && line.front() != '#') targets.push_back(line);
      }
      reports.resize(targets.size());
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> workers;
      for (std::size_t w = 0; w < std::min(kFleetWorkers, targets.size()); ++w)
        workers.emplace_back([&] {
          for (std::size_t i = next++; i < targets.size(); i = next++) reports[i] = audit_url(targets[i], options);
        });
      for (auto& t : workers) t.join();
    } else if (!args.headers_file.empty()) {
      AuditReport report;
      report.target = args.headers_file;
      report.host = args.host.empty() ? "unknown" : canonical_host(args.host);
      const auto headers = parse_raw_headers(read_file(args.headers_file));
      report.findings = audit_headers(report.host, std::nullopt, headers, options);
      reports.push_back(std::move(report));
    } else if (!args.target.empty()) {
      if (!Url::parse(args.target)) throw ConfigError("audit target must be an http(s) URL: " + args.target);
      reports.push_back(audit_url(args.target, options));
    } else {
      throw ConfigError("audit needs a URL, --headers-file or --fleet");
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  bool network_failure = false;
  for (const auto& r : reports) {
    if (r.error_phase) {
      network_failure = true;
      std::cerr << "network error (" << *r.error_phase << "): " << r.error << "\n";
    }
  }
  if (args.json) {
    if (args.fleet.empty()) {
      std::cout << audit_report_to_json(reports.front()).dump(2) << "\n";
    } else {
      ordered_json all = {{"reports", ordered_json::array()}};
      for (const auto& r : reports) all["reports"].push_back(audit_report_to_json(r));
      std::cout << all.dump(2) << "\n";
    }
  } else {
    for (const auto& r : reports) std::cout << audit_report_to_text(r);
  }
  return network_failure ? kExitNetwork : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nel-lab: Network Error Logging scenarios, collector and header audit"};
  app.require_subcommand(1);

  ScenarioArgs scenario_args;
  auto* scenario = app.add_subcommand("scenario", "Run a builtin scenario or a scenario config file");
  scenario->add_option("target", scenario_args.target, "Builtin name or path to a scenario JSON")->required();
  scenario->add_option("--seed", scenario_args.seed, "RNG seed (falls back to NEL_LAB_SEED)");
  scenario->add_option("--out", scenario_args.out, "Write the trace here instead of stdout");

  CollectArgs collect_args;
  auto* collect = app.add_subcommand("collect", "Serve a report collector until interrupted");
  collect->add_option("--config", collect_args.config_path, "Collector config JSON")->required();
  collect->add_option("--listen", collect_args.listen, "Override listen address (host:port)");
  collect->add_option("--ip-mode", collect_args.ip_mode, "Override ip_mode: volatile | truncate | full");
  collect->add_option("--log", collect_args.log_path, "Override NDJSON log path");

  AuditArgs audit_args;
  auto* audit = app.add_subcommand("audit", "Audit NEL headers of a URL, a header dump, or a fleet list");
  audit->add_option("target", audit_args.target, "URL to fetch");
  audit->add_option("--headers-file", audit_args.headers_file, "Raw response headers to audit");
  audit->add_option("--host", audit_args.host, "Host name to attribute header-file findings to");
  audit->add_option("--fleet", audit_args.fleet, "File with one URL per line");
  audit->add_option("--long-max-age-days", audit_args.long_max_age_days, "LONG_MAX_AGE threshold in days");
  audit->add_flag("--json", audit_args.json, "Emit JSON instead of text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (*scenario) return cmd_scenario(scenario_args);
  if (*collect) return cmd_collect(collect_args);
  return cmd_audit(audit_args);
}
