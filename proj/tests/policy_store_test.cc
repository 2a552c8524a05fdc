#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "nellab/policy_store.h"
#include "support/store_property.h"

namespace nellab {
namespace {

std::string nel(std::string_view group, std::int64_t max_age, bool subdomains = false) {
  NelPolicyHeader h;
  h.report_to = std::string(group);
  h.max_age = max_age;
  h.include_subdomains = subdomains;
  return serialize_nel_header(h);
}

std::string report_to(std::string_view group, std::string_view url = "https://collector.example/r") {
  EndpointGroup g;
  g.name = std::string(group);
  g.max_age = 86400;
  g.endpoints.push_back({std::string(url), 1, 1});
  const std::vector<EndpointGroup> groups{g};
  return serialize_report_to_header(groups);
}

StoreEffect install(PolicyStore& s, std::string_view host, std::int64_t max_age, bool sub, Timestamp now,
                    std::string_view group = "g") {
  const auto n = nel(group, max_age, sub);
  const auto r = report_to(group);
  return s.process_policy_headers(host, true, n, r, now);
}

StoreEffect remove(PolicyStore& s, std::string_view host, Timestamp now) {
  return s.process_policy_headers(host, true, std::string_view(R"({"max_age":0})"), std::nullopt, now);
}

using Kind = StoreEffect::Kind;

TEST(PolicyStore, InstallThenReplace) {
  PolicyStore s;
  EXPECT_EQ(install(s, "a.example", 60, false, at_ms(0), "first").kind, Kind::kInstalled);
  EXPECT_EQ(install(s, "a.example", 60, false, at_ms(10), "second").kind, Kind::kReplaced);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.find("a.example")->policy.report_to, "second");
  EXPECT_EQ(s.find("a.example")->received_at, at_ms(10));
  EXPECT_EQ(s.find("a.example")->expires_at, at_ms(10 + 60 * kSecondMs));
}

TEST(PolicyStore, RemovalDeletesPriorPolicy) {
  PolicyStore s;
  install(s, "bank.example", 3153600000, true, at_ms(0));
  EXPECT_EQ(remove(s, "bank.example", at_ms(5)).kind, Kind::kRemoved);
  EXPECT_FALSE(s.lookup("bank.example", at_ms(6)).has_value());
  EXPECT_FALSE(s.lookup("www.bank.example", at_ms(6)).has_value());
  // Nothing stored: still reported as removed.
  EXPECT_EQ(remove(s, "bank.example", at_ms(7)).kind, Kind::kRemoved);
}

TEST(PolicyStore, IgnoredReasons) {
  PolicyStore s;
  const auto n = nel("g", 60);
  const auto r = report_to("g");
  auto reason = [](StoreEffect e) { return e.reason.value(); };
  EXPECT_EQ(reason(s.process_policy_headers("h.example", false, n, r, at_ms(0))), IgnoreReason::kInsecure);
  EXPECT_EQ(reason(s.process_policy_headers("h.example", true, std::nullopt, r, at_ms(0))), IgnoreReason::kNoHeader);
  EXPECT_EQ(reason(s.process_policy_headers("h.example", true, std::string_view("{"), r, at_ms(0))),
            IgnoreReason::kMalformedNel);
  EXPECT_EQ(reason(s.process_policy_headers("h.example", true, n, std::nullopt, at_ms(0))),
            IgnoreReason::kMissingReportTo);
  EXPECT_EQ(reason(s.process_policy_headers("h.example", true, n, std::string_view("[oops"), at_ms(0))),
            IgnoreReason::kMalformedReportTo);
  const auto other = report_to("other");
  EXPECT_EQ(reason(s.process_policy_headers("h.example", true, n, other, at_ms(0))), IgnoreReason::kUnknownGroup);
  EXPECT_TRUE(s.empty());
}

TEST(PolicyStore, InsecureRemovalIsIgnored) {
  PolicyStore s;
  install(s, "h.example", 60, false, at_ms(0));
  auto e = s.process_policy_headers("h.example", false, std::string_view(R"({"max_age":0})"), std::nullopt, at_ms(1));
  EXPECT_EQ(e.kind, Kind::kIgnored);
  EXPECT_NE(s.find("h.example"), nullptr);
}

TEST(PolicyStore, HostIsCanonicalized) {
  PolicyStore s;
  install(s, "WWW.Example.COM.", 60, false, at_ms(0));
  ASSERT_NE(s.find("www.example.com"), nullptr);
  EXPECT_TRUE(s.lookup("www.EXAMPLE.com", at_ms(1)).has_value());
}

TEST(PolicyStore, SubdomainMatching) {
  PolicyStore s;
  install(s, "b.example", 60, true, at_ms(0));
  auto m = s.lookup("a.b.example", at_ms(1));
  ASSERT_TRUE(m.has_value());
  EXPECT_TRUE(m->via_subdomain);
  EXPECT_EQ(m->matched_host, "b.example");

  PolicyStore t;
  install(t, "b.example", 60, false, at_ms(0));
  EXPECT_FALSE(t.lookup("a.b.example", at_ms(1)).has_value());
}

TEST(PolicyStore, MostSpecificWins) {
  PolicyStore s;
  install(s, "b.example", 60, true, at_ms(0), "outer");
  install(s, "a.b.example", 60, false, at_ms(0), "inner");
  auto m = s.lookup("a.b.example", at_ms(1));
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->policy.policy.report_to, "inner");
  EXPECT_FALSE(m->via_subdomain);
  // a.b.example lacks include_subdomains, so its children fall through to b.example.
  auto child = s.lookup("x.a.b.example", at_ms(1));
  ASSERT_TRUE(child.has_value());
  EXPECT_EQ(child->matched_host, "b.example");
}

TEST(PolicyStore, NoSiblingOrChildMatches) {
  PolicyStore s;
  install(s, "a.b.example", 60, true, at_ms(0));
  EXPECT_FALSE(s.lookup("b.example", at_ms(1)).has_value());
  EXPECT_FALSE(s.lookup("c.b.example", at_ms(1)).has_value());
  EXPECT_FALSE(s.lookup("xa.b.example", at_ms(1)).has_value());
}

TEST(PolicyStore, ExpiryBoundaries) {
  PolicyStore s;
  install(s, "h.example", 1, false, at_ms(0));
  EXPECT_TRUE(s.lookup("h.example", at_ms(999)).has_value());
  EXPECT_FALSE(s.lookup("h.example", at_ms(1000)).has_value());
  EXPECT_TRUE(s.empty());  // lazily evicted

  install(s, "h.example", 1, false, at_ms(0));
  EXPECT_EQ(s.evict_expired(at_ms(1001)), 1u);
  EXPECT_EQ(s.evict_expired(at_ms(1001)), 0u);
}

TEST(PolicyStore, CenturyLifetimeRetained) {
  PolicyStore s;
  const std::int64_t century_s = 100LL * 365 * 86400;
  install(s, "h.example", century_s, false, at_ms(0));
  EXPECT_EQ(s.evict_expired(at_ms(10 * kYearMs)), 0u);
  EXPECT_TRUE(s.lookup("h.example", at_ms(10 * kYearMs)).has_value());
  EXPECT_EQ(to_ms(s.find("h.example")->expires_at), century_s * 1000);
}

TEST(PolicyStore, MaximalLifetimeRepresentable) {
  PolicyStore s;
  install(s, "h.example", kMaxAgeLimitSeconds, false, at_ms(5));
  const auto* p = s.find("h.example");
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(to_ms(p->expires_at), 5 + kMaxAgeLimitSeconds * 1000);
  EXPECT_GT(p->expires_at, p->received_at);
}

TEST(PolicyStore, ExpiryNearClockEndSaturates) {
  PolicyStore s;
  const auto late = at_ms(std::numeric_limits<std::int64_t>::max() - 10);
  install(s, "h.example", kMaxAgeLimitSeconds, false, late);
  EXPECT_EQ(s.find("h.example")->expires_at, kFarFuture);
}

TEST(PolicyStore, ClearBrowsingData) {
  PolicyStore s;
  EXPECT_EQ(s.clear_browsing_data(), 0u);
  for (auto h : {"a.example", "b.example", "c.example"}) install(s, h, 60, true, at_ms(0));
  EXPECT_EQ(s.clear_browsing_data(), 3u);
  for (auto h : {"a.example", "x.b.example", "c.example"}) EXPECT_FALSE(s.lookup(h, at_ms(1)).has_value());
}

TEST(PolicyStore, ConsentGate) {
  PolicyStore s(ConsentMode::kEnforce);
  EXPECT_EQ(install(s, "h.example", 60, false, at_ms(0)).reason, IgnoreReason::kNoConsent);
  EXPECT_TRUE(s.empty());
  s.set_consent("h.example", true);
  EXPECT_EQ(install(s, "h.example", 60, false, at_ms(1)).kind, Kind::kInstalled);
  s.set_consent("h.example", false);
  EXPECT_EQ(s.find("h.example"), nullptr);

  // Removal needs no consent.
  EXPECT_EQ(remove(s, "h.example", at_ms(2)).kind, Kind::kRemoved);

  PolicyStore bypass(ConsentMode::kBypass);
  bypass.set_consent("h.example", false);
  EXPECT_EQ(install(bypass, "h.example", 60, false, at_ms(0)).kind, Kind::kInstalled);
  bypass.set_consent("h.example", false);
  EXPECT_NE(bypass.find("h.example"), nullptr);
}

TEST(PolicyStore, ClearAlsoDropsConsent) {
  PolicyStore s(ConsentMode::kEnforce);
  s.set_consent("h.example", true);
  s.clear_browsing_data();
  EXPECT_FALSE(s.has_consent("h.example"));
}

TEST(PolicyStore, SnapshotRoundTrip) {
  PolicyStore s;
  install(s, "a.example", 60, true, at_ms(3), "x");
  install(s, "b.example", kMaxAgeLimitSeconds, false, at_ms(4), "y");
  PolicyStore t;
  t.import_snapshot(s.export_snapshot());
  EXPECT_EQ(t.entries(), s.entries());
  EXPECT_EQ(t.export_snapshot().dump(), s.export_snapshot().dump());

  PolicyStore enforce(ConsentMode::kEnforce);
  EXPECT_THROW(enforce.import_snapshot(s.export_snapshot()), ParseError);
}

TEST(PolicyStore, Superdomains) {
  EXPECT_EQ(superdomains("a.b.c"), (std::vector<std::string>{"b.c", "c"}));
  EXPECT_TRUE(superdomains("localhost").empty());
}

class StoreProperty : public ::testing::TestWithParam<ConsentMode> {};

TEST_P(StoreProperty, RandomizedSequencesMatchModel) {
  ASSERT_EQ(testing::host_universe().size(), 3u + 9u + 27u + 81u);
  constexpr int kCases = 10000;
  constexpr int kOpsPerCase = 24;
  testing::PropertyStats stats;
  const auto failure = testing::check_store_properties(GetParam(), kCases, kOpsPerCase, 20240601, &stats);
  EXPECT_FALSE(failure.has_value()) << *failure;
  EXPECT_EQ(stats.cases, static_cast<std::size_t>(kCases));
  EXPECT_EQ(stats.lookups_checked, static_cast<std::size_t>(kCases) * kOpsPerCase);
  EXPECT_GT(stats.subdomain_hits, 0u);
}

TEST(StoreOracle, SuffixWalk) {
  std::map<std::string, testing::ModelEntry> model{{"b.c", {"x", true, 100}}, {"a.b.c", {"y", false, 100}}};
  EXPECT_EQ(testing::oracle_lookup(model, "a.b.c", 0)->first, "a.b.c");
  EXPECT_EQ(testing::oracle_lookup(model, "z.a.b.c", 0)->first, "b.c");
  EXPECT_FALSE(testing::oracle_lookup(model, "c", 0));
  EXPECT_FALSE(testing::oracle_lookup(model, "b.c", 100));
}

INSTANTIATE_TEST_SUITE_P(Modes, StoreProperty, ::testing::Values(ConsentMode::kBypass, ConsentMode::kEnforce),
                         [](const auto& info) { return std::string(to_string(info.param)); });

}  // namespace
}  // namespace nellab
