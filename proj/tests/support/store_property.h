#pragma once

// Randomized operation sequences against PolicyStore, checked step by step
// against a plain map model and a brute-force suffix-walk lookup. Shared by
// the gtest suite and the acceptance binary.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nellab/policy_store.h"

namespace nellab::testing {

struct ModelEntry {
  std::string tag;
  bool subdomains = false;
  std::int64_t expires_ms = 0;
};

// Splits on dots from the left and tries every suffix, independent of the
// store's own suffix routine.
inline std::optional<std::pair<std::string, ModelEntry>> oracle_lookup(const std::map<std::string, ModelEntry>& model,
                                                                        const std::string& host, std::int64_t now) {
  std::vector<std::string> labels;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= host.size(); ++i) {
    if (i == host.size() || host[i] == '.') {
      labels.push_back(host.substr(start, i - start));
      start = i + 1;
    }
  }
  for (std::size_t skip = 0; skip < labels.size(); ++skip) {
    std::string candidate;
    for (std::size_t k = skip; k < labels.size(); ++k) candidate += (k > skip ? "." : "") + labels[k];
    auto it = model.find(candidate);
    if (it == model.end() || it->second.expires_ms <= now) continue;
    if (skip == 0 || it->second.subdomains) return *it;
  }
  return std::nullopt;
}

// All label chains of length 1..4 over {a, b, c}: 120 hosts.
inline std::vector<std::string> host_universe() {
  std::vector<std::string> out;
  std::vector<std::string> layer{""};
  for (int depth = 0; depth < 4; ++depth) {
    std::vector<std::string> next;
    for (const auto& suffix : layer)
      for (const char* label : {"a", "b", "c"}) next.push_back(suffix.empty() ? label : std::string(label) + "." + suffix);
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

struct PropertyStats {
  std::size_t cases = 0;
  std::size_t lookups_checked = 0;
  std::size_t subdomain_hits = 0;
};

inline StoreEffect property_install(PolicyStore& s, const std::string& host, std::int64_t max_age, bool sub,
                                    std::int64_t now, const std::string& group) {
  NelPolicyHeader h;
  h.report_to = group;
  h.max_age = max_age;
  h.include_subdomains = sub;
  EndpointGroup g;
  g.name = group;
  g.max_age = 86400;
  g.endpoints.push_back({"https://collector.example/r", 1, 1});
  const std::vector<EndpointGroup> groups{g};
  const auto nel = serialize_nel_header(h);
  const auto rt = serialize_report_to_header(groups);
  return s.process_policy_headers(host, true, nel, rt, at_ms(now));
}

inline void property_remove(PolicyStore& s, const std::string& host, std::int64_t now) {
  s.process_policy_headers(host, true, std::string_view(R"({"max_age":0})"), std::nullopt, at_ms(now));
}

// Returns a description of the first violated property, or nullopt.
inline std::optional<std::string> check_store_properties(ConsentMode mode, int cases, int ops_per_case,
                                                         std::uint64_t seed, PropertyStats* stats = nullptr) {
  const auto hosts = host_universe();
  const std::int64_t ages[] = {1, 5, 60, 3600, 100LL * 365 * 86400};
  std::mt19937_64 gen(seed);
  PropertyStats local;
  PropertyStats& st = stats ? *stats : local;

  for (int c = 0; c < cases; ++c) {
    PolicyStore store(mode);
    std::map<std::string, ModelEntry> model;
    std::set<std::string> consent;
    std::map<std::string, std::int64_t> absent_since;  // host -> time a lookup first saw it expired
    std::int64_t now = 0;
    int tag = 0;

    auto fail = [&](int op, const std::string& what) -> std::optional<std::string> {
      std::ostringstream os;
      os << "case " << c << " op " << op << ": " << what;
      return os.str();
    };

    for (int op = 0; op < ops_per_case; ++op) {
      const auto& host = hosts[gen() % hosts.size()];
      switch (gen() % 7) {
        case 0:
        case 1: {
          const auto age = ages[gen() % std::size(ages)];
          const bool sub = gen() % 2;
          const std::string t = "t" + std::to_string(tag++);
          const auto effect = property_install(store, host, age, sub, now, t);
          const bool allowed = mode == ConsentMode::kBypass || consent.count(host);
          if (allowed) {
            if (effect.kind == StoreEffect::Kind::kIgnored) return fail(op, "install ignored for " + host);
            model[host] = {t, sub, now + age * 1000};
            absent_since.erase(host);
            const auto* entry = store.find(host);
            if (!entry || entry->policy.report_to != t) return fail(op, "last writer lost at " + host);
          } else if (effect.reason != IgnoreReason::kNoConsent) {
            return fail(op, "install without consent not refused at " + host);
          }
          break;
        }
        case 2: {
          property_remove(store, host, now);
          const auto once = store.export_snapshot().dump();
          property_remove(store, host, now);
          if (store.export_snapshot().dump() != once) return fail(op, "second removal changed the store");
          model.erase(host);
          break;
        }
        case 3:
          now += static_cast<std::int64_t>(gen() % 4000);
          break;
        case 4: {
          const bool grant = gen() % 2;
          store.set_consent(host, grant);
          if (grant) {
            consent.insert(host);
          } else {
            consent.erase(host);
            if (mode == ConsentMode::kEnforce) model.erase(host);
          }
          break;
        }
        case 5:
          store.evict_expired(at_ms(now));
          break;
        default:
          break;
      }

      const auto& probe = hosts[gen() % hosts.size()];
      const auto got = store.lookup(probe, at_ms(now));
      const auto want = oracle_lookup(model, probe, now);
      ++st.lookups_checked;
      if (got.has_value() != want.has_value()) return fail(op, "lookup presence differs for " + probe);
      if (got) {
        if (got->matched_host != want->first) return fail(op, "matched " + got->matched_host + " not " + want->first);
        if (got->policy.policy.report_to != want->second.tag) return fail(op, "wrong policy for " + probe);
        if (got->via_subdomain != (want->first != probe)) return fail(op, "via_subdomain wrong for " + probe);
        st.subdomain_hits += got->via_subdomain;
      }

      for (const auto& [h, since] : absent_since)
        if (store.find(h) != nullptr) return fail(op, "expired entry came back: " + h);
      if (auto it = model.find(probe); it != model.end() && it->second.expires_ms <= now) {
        absent_since[probe] = now;
        model.erase(it);
      }

      const auto entries = store.entries();
      std::set<std::string> seen, live_store, live_model;
      for (const auto& e : entries) {
        if (!seen.insert(e.host).second) return fail(op, "duplicate entry for " + e.host);
        if (to_ms(e.expires_at) > now) live_store.insert(e.host);
      }
      for (const auto& [h, e] : model)
        if (e.expires_ms > now) live_model.insert(h);
      if (live_store != live_model) return fail(op, "live set differs from model");

      if (mode == ConsentMode::kEnforce)
        for (const auto& e : entries)
          if (!store.has_consent(e.host)) return fail(op, "entry without consent: " + e.host);
    }
    ++st.cases;
  }
  return std::nullopt;
}

}  // namespace nellab::testing
