#include <gtest/gtest.h>

#include <arpa/inet.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "nellab/collector.h"
#include "support/fixtures.h"

namespace nellab {
namespace {

namespace fs = std::filesystem;

NelReport reference_report() { return report_from_json(ordered_json::parse(testing::kReferenceReportJson)); }

std::string batch_of(std::vector<NelReport> reports) { return serialize_report_batch(reports); }

std::string read_all(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("nel-collector-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(std::string_view name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
  static inline int counter_ = 0;
};

// Oracle for /24 zeroing: integer arithmetic on the dotted quad.
std::string zero_last_octet(const std::string& dotted) {
  unsigned a, b, c, d;
  EXPECT_EQ(std::sscanf(dotted.c_str(), "%u.%u.%u.%u", &a, &b, &c, &d), 4);
  const std::uint32_t value = (a << 24 | b << 16 | c << 8 | d) & 0xFFFFFF00u;
  return std::to_string(value >> 24) + "." + std::to_string(value >> 16 & 0xFF) + "." +
         std::to_string(value >> 8 & 0xFF) + "." + std::to_string(value & 0xFF);
}

TEST(Minimize, ReferenceReportUrl) {
  CollectorConfig config;
  auto r = reference_report();
  r.url = "https://www.example.com/?session=abc#top";
  r.body.referrer = "http://example.com/?q=1";
  const auto m = minimize(r, config);
  EXPECT_EQ(m.url, "https://www.example.com/");
  EXPECT_EQ(m.body.referrer, "http://example.com/");
}

TEST(Minimize, PathQueryDropped) {
  CollectorConfig config;
  auto r = reference_report();
  r.url = "https://h.example/p?user=alice";
  EXPECT_EQ(minimize(r, config).url, "https://h.example/p");
}

TEST(Minimize, Idempotent) {
  CollectorConfig config;
  auto r = reference_report();
  r.url = "https://h.example/p?user=alice#x";
  r.body.request_headers = {{"Cookie", "a"}};
  const auto once = minimize(r, config);
  EXPECT_EQ(minimize(once, config), once);
  EXPECT_TRUE(once.body.request_headers.empty());
  EXPECT_EQ(minimize(reference_report(), config), minimize(minimize(reference_report(), config), config));
}

TEST(Minimize, AllOffIsIdentity) {
  CollectorConfig config;
  config.strip_url_query = false;
  config.drop_captured_headers = false;
  auto r = reference_report();
  r.url = "https://h.example/p?user=alice#x";
  r.body.response_headers = {{"ETag", "v"}};
  EXPECT_EQ(minimize(r, config), r);
}

TEST(TruncateIp, V4MatchesOracle) {
  EXPECT_EQ(truncate_ip("203.0.113.77"), "203.0.113.0");
  std::mt19937 gen(7);
  for (int i = 0; i < 1000; ++i) {
    const std::string ip = std::to_string(gen() % 256) + "." + std::to_string(gen() % 256) + "." +
                           std::to_string(gen() % 256) + "." + std::to_string(gen() % 256);
    ASSERT_EQ(truncate_ip(ip), zero_last_octet(ip)) << ip;
  }
}

TEST(TruncateIp, V6KeepsTop48Bits) {
  EXPECT_EQ(truncate_ip("2001:db8:85a3:1234:8a2e:370:7334:1"), "2001:db8:85a3::");
  EXPECT_EQ(truncate_ip("2001:DB8:0:0:0:0:0:42"), "2001:db8::");
  EXPECT_EQ(truncate_ip("garbage"), kRedacted);
}

TEST(Collector, IngestReferenceBatch) {
  Collector c({});
  auto r = reference_report();
  r.url = "https://www.example.com/?utm=1";
  auto result = c.ingest(batch_of({r}), "198.51.100.23", "UA/1", at_ms(5));
  EXPECT_EQ(result.accepted, 1u);
  const auto records = c.records();
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].report.url, "https://www.example.com/");
  EXPECT_EQ(records[0].client_ip, kRedacted);
  EXPECT_EQ(records[0].user_agent, kRedacted);
  EXPECT_EQ(records[0].received_at, at_ms(5));
}

TEST(Collector, TruncateMode) {
  CollectorConfig config;
  config.ip_mode = IpMode::kTruncate;
  Collector c(config);
  c.ingest(batch_of({reference_report()}), "203.0.113.77", "UA", at_ms(0));
  EXPECT_EQ(c.records().at(0).client_ip, "203.0.113.0");
}

TEST(Collector, FullModeAndUserAgent) {
  CollectorConfig config;
  config.ip_mode = IpMode::kFull;
  config.store_user_agent = true;
  Collector c(config);
  c.ingest(batch_of({reference_report()}), "203.0.113.77", "UA/2", at_ms(0));
  EXPECT_EQ(c.records().at(0).client_ip, "203.0.113.77");
  EXPECT_EQ(c.records().at(0).user_agent, "UA/2");
}

TEST(Collector, RejectsMalformedAndOversized) {
  TempDir dir;
  CollectorConfig config;
  config.log_path = dir.file("log.ndjson");
  Collector c(config);
  try {
    c.ingest("[{\"age\":", "192.0.2.1", "", at_ms(0));
    FAIL();
  } catch (const RejectError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  auto good = ordered_json::parse(testing::kReferenceReportJson);
  auto bad = good;
  bad.erase("url");
  try {
    c.ingest(ordered_json::array({good, bad}).dump(), "192.0.2.1", "", at_ms(0));
    FAIL();
  } catch (const RejectError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  std::string huge = "[" + std::string(kMaxUploadBytes, ' ') + "]";
  try {
    c.ingest(huge, "192.0.2.1", "", at_ms(0));
    FAIL();
  } catch (const RejectError& e) {
    EXPECT_EQ(e.status(), 413);
  }
  EXPECT_EQ(c.size(), 0u);
  c.flush();
  EXPECT_EQ(read_all(config.log_path), "");
}

TEST(Collector, PurgeRetention) {
  TempDir dir;
  CollectorConfig config;
  config.retention = Millis(24 * kHourMs);
  config.log_path = dir.file("log.ndjson");
  Collector c(config);
  const auto now = at_ms(100 * kHourMs);
  c.ingest(batch_of({reference_report()}), "192.0.2.1", "", now - Millis(25 * kHourMs));
  c.ingest(batch_of({reference_report()}), "192.0.2.1", "", now - Millis(24 * kHourMs));
  c.ingest(batch_of({reference_report()}), "192.0.2.1", "", now);
  EXPECT_EQ(c.purge_expired(now), 1u);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(line_count(read_all(config.log_path)), 2u);
  // Later ingests still land in the rewritten log.
  c.ingest(batch_of({reference_report()}), "192.0.2.1", "", now);
  EXPECT_EQ(line_count(read_all(config.log_path)), 3u);

  Collector forever({});
  forever.ingest(batch_of({reference_report()}), "192.0.2.1", "", at_ms(0));
  EXPECT_EQ(forever.purge_expired(at_ms(1000 * kYearMs)), 0u);
}

TEST(Collector, ExportFilters) {
  Collector c({});
  EXPECT_EQ(c.export_ndjson(), "");
  auto a = reference_report();
  auto b = reference_report();
  b.url = "https://other.example/x";
  c.ingest(batch_of({a}), "192.0.2.1", "", at_ms(10));
  c.ingest(batch_of({b}), "192.0.2.1", "", at_ms(20));

  const auto all = c.export_ndjson();
  EXPECT_EQ(line_count(all), 2u);
  std::istringstream lines(all);
  std::string first, second;
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(ordered_json::parse(first)["received_at"], 10);
  EXPECT_EQ(ordered_json::parse(second)["received_at"], 20);

  EXPECT_EQ(c.export_ndjson({at_ms(30), std::nullopt, ""}), "");
  EXPECT_EQ(line_count(c.export_ndjson({at_ms(10), at_ms(20), ""})), 1u);
  EXPECT_EQ(line_count(c.export_ndjson({std::nullopt, std::nullopt, "OTHER.example"})), 1u);
  EXPECT_EQ(c.export_ndjson({std::nullopt, std::nullopt, "nobody.example"}), "");
}

TEST(Collector, LogReloadKeepsOrder) {
  TempDir dir;
  CollectorConfig config;
  config.log_path = dir.file("log.ndjson");
  {
    Collector c(config);
    for (int i = 0; i < 5; ++i) {
      auto r = reference_report();
      r.url = "https://h.example/" + std::to_string(i);
      c.ingest(batch_of({r}), "192.0.2.1", "", at_ms(i));
    }
  }
  Collector again(config);
  const auto records = again.records();
  ASSERT_EQ(records.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(records[i].report.url, "https://h.example/" + std::to_string(i));
}

TEST(Collector, CorruptLogIsConfigError) {
  TempDir dir;
  CollectorConfig config;
  config.log_path = dir.file("log.ndjson");
  std::ofstream(config.log_path) << "{not json\n";
  EXPECT_THROW(Collector{config}, ConfigError);
}

TEST(Collector, EmitsConfiguredPolicyHeaders) {
  CollectorConfig config;
  NelPolicyHeader nel;
  nel.report_to = "meta";
  nel.max_age = 600;
  config.emit_nel = nel;
  EndpointGroup g;
  g.name = "meta";
  g.max_age = 600;
  g.endpoints = {{"https://meta.example/r", 1, 1}};
  config.emit_report_to = {g};
  Collector c(config);
  auto result = c.ingest(batch_of({reference_report()}), "192.0.2.1", "", at_ms(0));
  ASSERT_EQ(result.response_headers.count("NEL"), 1u);
  EXPECT_EQ(std::get<NelPolicyHeader>(parse_nel_header(result.response_headers["NEL"])), nel);
  EXPECT_EQ(parse_report_to_header(result.response_headers["Report-To"]), config.emit_report_to);
  EXPECT_TRUE(Collector({}).response_headers().empty());
}

TEST(Collector, SuccessReportUnderZeroSuccessPolicyWarns) {
  CollectorConfig config;
  NelPolicyHeader nel;
  nel.report_to = "g";
  nel.max_age = 600;
  config.emit_nel = nel;
  EndpointGroup g;
  g.name = "g";
  g.max_age = 600;
  g.endpoints = {{"https://c.example/r", 1, 1}};
  config.emit_report_to = {g};
  Collector c(config);
  auto ok = reference_report();
  ok.body.type = "ok";
  auto result = c.ingest(batch_of({ok, reference_report()}), "192.0.2.1", "", at_ms(0));
  EXPECT_EQ(result.accepted, 2u);
  EXPECT_EQ(result.warnings.size(), 1u);
}

TEST(Collector, ConfigJson) {
  auto j = ordered_json::parse(R"({
    "listen": "0.0.0.0:9000", "ip_mode": "truncate", "strip_url_query": false,
    "retention_ms": 86400000,
    "emit_nel_headers": {"nel": {"report_to": "m", "max_age": 60},
                         "report_to": [{"group": "m", "max_age": 60, "endpoints": [{"url": "https://m.example/"}]}]}
  })");
  auto c = collector_config_from_json(j);
  EXPECT_EQ(c.listen, "0.0.0.0:9000");
  EXPECT_EQ(c.ip_mode, IpMode::kTruncate);
  EXPECT_FALSE(c.strip_url_query);
  EXPECT_TRUE(c.drop_captured_headers);
  EXPECT_EQ(c.retention, Millis(86400000));
  ASSERT_TRUE(c.emit_nel.has_value());
  auto back = collector_config_from_json(collector_config_to_json(c));
  EXPECT_EQ(collector_config_to_json(back).dump(), collector_config_to_json(c).dump());

  for (const char* bad : {R"({"ip_mode":"sometimes"})", R"({"retention_ms":-5})", R"({"strip_url_query":"yes"})",
                          R"({"emit_nel_headers":{"nel":{"report_to":"x","max_age":5},"report_to":[]}})", "[]"}) {
    EXPECT_THROW(collector_config_from_json(ordered_json::parse(bad)), ConfigError) << bad;
  }
}

TEST(Collector, ConcurrentIngestIsLinear) {
  TempDir dir;
  CollectorConfig config;
  config.log_path = dir.file("log.ndjson");
  Collector c(config);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 100; ++i) {
        auto r = reference_report();
        r.url = "https://h.example/" + std::to_string(t) + "/" + std::to_string(i);
        c.ingest(batch_of({r, r}), "192.0.2.1", "", at_ms(i));
      }
    });
  for (auto& th : threads) th.join();
  c.flush();
  const auto text = read_all(config.log_path);
  EXPECT_EQ(line_count(text), 1600u);
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) ASSERT_NO_THROW(record_from_json(ordered_json::parse(line)));
  // Both reports of a batch are adjacent.
  const auto records = c.records();
  for (std::size_t i = 0; i < records.size(); i += 2) EXPECT_EQ(records[i].report.url, records[i + 1].report.url);
}

TEST(Collector, StripQueryPropertyOverRandomUrls) {
  Collector c({});
  std::mt19937 gen(3);
  const char* alphabet = "abc/?#&=.%";
  for (int i = 0; i < 2000; ++i) {
    std::string tail;
    for (int k = 0; k < 12; ++k) tail += alphabet[gen() % 10];
    auto r = reference_report();
    r.url = "https://h.example/" + tail;
    r.body.referrer = "https://ref.example/" + tail;
    c.ingest(batch_of({r}), "192.0.2.1", "", at_ms(i));
  }
  for (const auto& rec : c.records()) {
    ASSERT_EQ(rec.report.url.find('?'), std::string::npos) << rec.report.url;
    ASSERT_EQ(rec.report.body.referrer.find('?'), std::string::npos);
    ASSERT_EQ(rec.report.url.find('#'), std::string::npos);
  }
}

// Feeds the shared volatile log that the acceptance binary scans.
TEST(Collector, VolatileModeNeverPersistsClientIp) {
  CollectorConfig config;
  config.ip_mode = IpMode::kVolatile;
  config.store_user_agent = true;
  config.log_path = testing::volatile_log_path("collector_test");
  fs::create_directories(fs::path(config.log_path).parent_path());
  Collector c(config);
  for (auto ip : testing::kVolatileClientIps) {
    auto r = reference_report();
    r.body.server_ip = "2001:DB8:0:0:0:0:0:42";
    c.ingest(batch_of({r}), ip, "agent", at_ms(0));
  }
  c.flush();
  EXPECT_EQ(c.volatile_client_count(), testing::kVolatileClientIps.size());
  const auto text = read_all(config.log_path);
  for (auto ip : testing::kVolatileClientIps) EXPECT_EQ(text.find(ip), std::string::npos) << ip;
}

}  // namespace
}  // namespace nellab
