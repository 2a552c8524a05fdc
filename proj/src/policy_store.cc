#include "nellab/policy_store.h"

#include <algorithm>

#include "nellab/url.h"

namespace nellab {

const EndpointGroup* StoredPolicy::report_group() const {
  auto it = std::find_if(groups.begin(), groups.end(),
                         [&](const EndpointGroup& g) { return g.name == policy.report_to; });
  return it == groups.end() ? nullptr : &*it;
}

std::string_view to_string(ConsentMode mode) { return mode == ConsentMode::kEnforce ? "enforce" : "bypass"; }

std::optional<ConsentMode> consent_mode_from_string(std::string_view text) {
  if (text == "enforce") return ConsentMode::kEnforce;
  if (text == "bypass") return ConsentMode::kBypass;
  return std::nullopt;
}

std::string_view to_string(IgnoreReason reason) {
  switch (reason) {
    case IgnoreReason::kInsecure:
      return "insecure";
    case IgnoreReason::kNoHeader:
      return "no_header";
    case IgnoreReason::kMalformedNel:
      return "malformed_nel";
    case IgnoreReason::kMissingReportTo:
      return "missing_report_to";
    case IgnoreReason::kMalformedReportTo:
      return "malformed_report_to";
    case IgnoreReason::kUnknownGroup:
      return "unknown_group";
    case IgnoreReason::kNoConsent:
      return "no_consent";
  }
  return "unknown";
}

std::string_view to_string(StoreEffect::Kind kind) {
  switch (kind) {
    case StoreEffect::Kind::kInstalled:
      return "installed";
    case StoreEffect::Kind::kReplaced:
      return "replaced";
    case StoreEffect::Kind::kRemoved:
      return "removed";
    case StoreEffect::Kind::kIgnored:
      return "ignored";
  }
  return "ignored";
}

std::vector<std::string> superdomains(std::string_view host) {
  std::vector<std::string> out;
  auto dot = host.find('.');
  while (dot != std::string_view::npos) {
    host.remove_prefix(dot + 1);
    if (host.empty()) break;
    out.emplace_back(host);
    dot = host.find('.');
  }
  return out;
}

StoreEffect PolicyStore::process_policy_headers(std::string_view raw_host, bool secure,
                                                std::optional<std::string_view> nel,
                                                std::optional<std::string_view> report_to, Timestamp now) {
  if (!secure) return StoreEffect::ignored(IgnoreReason::kInsecure);
  if (!nel) return StoreEffect::ignored(IgnoreReason::kNoHeader);
  const std::string host = canonical_host(raw_host);

  NelHeaderValue parsed;
  try {
    parsed = parse_nel_header(*nel);
  } catch (const ParseError&) {
    return StoreEffect::ignored(IgnoreReason::kMalformedNel);
  }

  if (std::holds_alternative<PolicyRemoval>(parsed)) {
    policies_.erase(host);
    return {StoreEffect::Kind::kRemoved, std::nullopt};
  }

  if (mode_ == ConsentMode::kEnforce && !has_consent(host)) return StoreEffect::ignored(IgnoreReason::kNoConsent);
  if (!report_to) return StoreEffect::ignored(IgnoreReason::kMissingReportTo);

  StoredPolicy entry;
  entry.host = host;
  entry.policy = std::get<NelPolicyHeader>(std::move(parsed));
  try {
    entry.groups = parse_report_to_header(*report_to);
  } catch (const ParseError&) {
    return StoreEffect::ignored(IgnoreReason::kMalformedReportTo);
  }
  if (!entry.report_group()) return StoreEffect::ignored(IgnoreReason::kUnknownGroup);
  entry.received_at = now;
  entry.expires_at = saturating_add(now, Millis(entry.policy.max_age * kSecondMs));

  auto [it, inserted] = policies_.insert_or_assign(host, std::move(entry));
  return {inserted ? StoreEffect::Kind::kInstalled : StoreEffect::Kind::kReplaced, std::nullopt};
}

std::optional<PolicyMatch> PolicyStore::lookup(std::string_view raw_host, Timestamp now) {
  const std::string host = canonical_host(raw_host);
  auto live = [&](const std::string& key) -> StoredPolicy* {
    auto it = policies_.find(key);
    if (it == policies_.end()) return nullptr;
    if (it->second.expires_at <= now) {
      policies_.erase(it);
      return nullptr;
    }
    return &it->second;
  };

  if (auto* exact = live(host)) return PolicyMatch{*exact, host, false};
  for (const auto& suffix : superdomains(host)) {
    auto* entry = live(suffix);
    if (entry && entry->policy.include_subdomains) return PolicyMatch{*entry, suffix, true};
  }
  return std::nullopt;
}

std::size_t PolicyStore::clear_browsing_data() {
  const auto dropped = policies_.size();
  policies_.clear();
  consent_.clear();
  return dropped;
}

void PolicyStore::set_consent(std::string_view raw_host, bool granted) {
  const std::string host = canonical_host(raw_host);
  consent_.insert_or_assign(host, granted);
  if (!granted && mode_ == ConsentMode::kEnforce) policies_.erase(host);
}

bool PolicyStore::has_consent(std::string_view raw_host) const {
  auto it = consent_.find(canonical_host(raw_host));
  return it != consent_.end() && it->second;
}

std::size_t PolicyStore::evict_expired(Timestamp now) {
  return std::erase_if(policies_, [&](const auto& kv) { return kv.second.expires_at <= now; });
}

const StoredPolicy* PolicyStore::find(std::string_view host) const {
  auto it = policies_.find(canonical_host(host));
  return it == policies_.end() ? nullptr : &it->second;
}

std::vector<StoredPolicy> PolicyStore::entries() const {
  std::vector<StoredPolicy> out;
  out.reserve(policies_.size());
  for (const auto& [_, p] : policies_) out.push_back(p);
  return out;
}

ordered_json stored_policy_to_json(const StoredPolicy& p) {
  ordered_json j;
  j["host"] = p.host;
  j["policy"] = policy_to_json(p.policy);
  j["groups"] = ordered_json::array();
  for (const auto& g : p.groups) j["groups"].push_back(group_to_json(g));
  j["received_at"] = to_ms(p.received_at);
  j["expires_at"] = to_ms(p.expires_at);
  return j;
}

StoredPolicy stored_policy_from_json(const ordered_json& j) {
  try {
    StoredPolicy p;
    p.host = canonical_host(j.at("host").get<std::string>());
    p.policy = policy_from_json(j.at("policy"));
    for (const auto& g : j.at("groups")) p.groups.push_back(group_from_json(g));
    p.received_at = at_ms(j.at("received_at").get<std::int64_t>());
    p.expires_at = at_ms(j.at("expires_at").get<std::int64_t>());
    if (p.expires_at < p.received_at) throw ParseError("expires_at precedes received_at");
    if (!p.report_group()) throw ParseError("policy names an absent group");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("stored policy: ") + e.what());
  }
}

ordered_json PolicyStore::export_snapshot() const {
  ordered_json out = ordered_json::array();
  for (const auto& [_, p] : policies_) out.push_back(stored_policy_to_json(p));
  return out;
}

void PolicyStore::import_snapshot(const ordered_json& snapshot) {
  if (!snapshot.is_array()) throw ParseError("snapshot must be a JSON array");
  std::map<std::string, StoredPolicy, std::less<>> loaded;
  for (const auto& item : snapshot) {
    auto p = stored_policy_from_json(item);
    if (mode_ == ConsentMode::kEnforce && !has_consent(p.host))
      throw ParseError("snapshot holds a policy for " + p.host + " without consent");
    if (!loaded.emplace(p.host, p).second) throw ParseError("duplicate host in snapshot: " + p.host);
  }
  policies_ = std::move(loaded);
}

}  // namespace nellab
