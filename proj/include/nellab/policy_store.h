#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nellab/header_codec.h"
#include "nellab/time.h"

namespace nellab {

struct StoredPolicy {
  std::string host;
  NelPolicyHeader policy;
  std::vector<EndpointGroup> groups;
  Timestamp received_at{};
  Timestamp expires_at{};

  // The group the policy reports to. Installation guarantees it exists.
  const EndpointGroup* report_group() const;

  bool operator==(const StoredPolicy&) const = default;
};

struct PolicyMatch {
  StoredPolicy policy;
  std::string matched_host;
  bool via_subdomain = false;
};

enum class ConsentMode { kBypass, kEnforce };

std::string_view to_string(ConsentMode mode);
std::optional<ConsentMode> consent_mode_from_string(std::string_view text);

// Why a header pair did not change the store.
enum class IgnoreReason {
  kInsecure,
  kNoHeader,
  kMalformedNel,
  kMissingReportTo,
  kMalformedReportTo,
  kUnknownGroup,
  kNoConsent,
};

std::string_view to_string(IgnoreReason reason);

struct StoreEffect {
  enum class Kind { kInstalled, kReplaced, kRemoved, kIgnored };
  Kind kind = Kind::kIgnored;
  std::optional<IgnoreReason> reason;  // set iff kind == kIgnored

  static StoreEffect ignored(IgnoreReason r) { return {Kind::kIgnored, r}; }
  bool operator==(const StoreEffect&) const = default;
};

std::string_view to_string(StoreEffect::Kind kind);

// Browser-side NEL policy cache. One entry per host; the last valid header
// wins. Single writer: callers serialize mutation.
class PolicyStore {
 public:
  explicit PolicyStore(ConsentMode mode = ConsentMode::kBypass) : mode_(mode) {}

  ConsentMode consent_mode() const { return mode_; }

  // Header processing for one response. Never throws on header content.
  StoreEffect process_policy_headers(std::string_view host, bool secure, std::optional<std::string_view> nel,
                                     std::optional<std::string_view> report_to, Timestamp now);

  // Exact host first, then the most specific superdomain carrying
  // include_subdomains. Expired entries encountered are evicted.
  std::optional<PolicyMatch> lookup(std::string_view host, Timestamp now);

  std::size_t clear_browsing_data();
  void set_consent(std::string_view host, bool granted);
  bool has_consent(std::string_view host) const;
  std::size_t evict_expired(Timestamp now);

  std::size_t size() const { return policies_.size(); }
  bool empty() const { return policies_.empty(); }
  // Raw entry access, ignoring expiry.
  const StoredPolicy* find(std::string_view host) const;
  std::vector<StoredPolicy> entries() const;

  // Snapshot: JSON array of StoredPolicy objects, sorted by host.
  ordered_json export_snapshot() const;
  // Replaces the store content. Throws ParseError on malformed input.
  void import_snapshot(const ordered_json& snapshot);

 private:
  ConsentMode mode_;
  std::map<std::string, StoredPolicy, std::less<>> policies_;
  std::map<std::string, bool, std::less<>> consent_;
};

ordered_json stored_policy_to_json(const StoredPolicy& p);
StoredPolicy stored_policy_from_json(const ordered_json& j);

// Proper label suffixes of `host`, most specific first:
// "a.b.example" -> {"b.example", "example"}.
std::vector<std::string> superdomains(std::string_view host);

}  // namespace nellab
