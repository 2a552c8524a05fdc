#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nellab/header_codec.h"
#include "nellab/policy_store.h"
#include "nellab/time.h"

namespace nellab {

// What the agent observed for one fetch.
struct RequestOutcome {
  std::string url;
  std::string referrer;
  std::string method = "GET";
  std::string protocol = "h2";
  std::string server_ip;
  int status_code = 0;
  std::int64_t elapsed_time = 0;  // ms
  Phase phase = Phase::kApplication;
  std::string result_type{kResultOk};
  Timestamp event_time{};
  HeaderMap request_headers;
  HeaderMap response_headers;

  bool is_success() const { return result_type == kResultOk; }
};

enum class ReferrerMode { kStripPath, kOriginOnly, kFull };
enum class SubdomainMode { kPermissive, kStrict };

std::string_view to_string(ReferrerMode mode);
std::optional<ReferrerMode> referrer_mode_from_string(std::string_view text);
std::string_view to_string(SubdomainMode mode);
std::optional<SubdomainMode> subdomain_mode_from_string(std::string_view text);

std::string apply_referrer_restriction(std::string_view referrer, ReferrerMode mode);

// Copies the headers the policy asked for, keyed by the policy's spelling.
std::pair<HeaderMap, HeaderMap> capture_headers(const RequestOutcome& outcome, const NelPolicyHeader& policy);

// Uniform reals in [0, 1) from a seeded mt19937_64. The 53-bit mantissa
// construction is spelled out so draws are identical across standard
// libraries.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : gen_(seed) {}
  double next() {
    ++draws_;
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  std::uint64_t draws() const { return draws_; }

 private:
  std::mt19937_64 gen_;
  std::uint64_t draws_ = 0;
};

struct DeliveryTask {
  std::uint64_t id = 0;
  NelReport report;
  Timestamp event_time{};
  std::string policy_host;  // host whose policy admitted the report
  EndpointGroup group;      // snapshot of the admitting policy's group
  int attempts = 0;
  Timestamp next_attempt_at{};
  bool is_meta = false;
  // Endpoint indices that failed since the group was last exhausted.
  std::vector<std::size_t> failed_endpoints;
  std::string last_endpoint;
  // Collector hosts already reported about along this meta-report chain.
  std::vector<std::string> chain;
};

struct DeliveryResult {
  enum class Kind { kDelivered, kUnreachable, kHttpError };
  Kind kind = Kind::kDelivered;
  int status_code = 0;
  Phase phase = Phase::kConnection;
  std::string error_type;
  std::string server_ip;
  HeaderMap response_headers;

  static DeliveryResult delivered(std::string server_ip = {});
  static DeliveryResult unreachable(Phase phase, std::string error_type, std::string server_ip = {});
  static DeliveryResult http_error(int status_code, std::string server_ip = {});

  bool ok() const { return kind == Kind::kDelivered; }
};

std::string_view to_string(DeliveryResult::Kind kind);

// One upload handed to the transport.
struct Upload {
  std::string endpoint_url;
  std::string group;
  std::string body;  // report batch
  Timestamp at{};
  std::vector<NelReport> reports;
  std::vector<std::uint64_t> task_ids;
  std::vector<bool> is_meta;
};

using Transport = std::function<DeliveryResult(const Upload&)>;

struct DeliveryAttempt {
  Timestamp at{};
  std::string endpoint_url;
  DeliveryResult result;
  std::vector<std::uint64_t> task_ids;
};

struct DeliveryRound {
  std::vector<DeliveryAttempt> attempts;
  std::vector<DeliveryTask> dropped;
  std::vector<DeliveryTask> meta_queued;
};

struct ReportEngineOptions {
  ReferrerMode referrer_mode = ReferrerMode::kOriginOnly;
  SubdomainMode subdomain_mode = SubdomainMode::kPermissive;
  int max_attempts = 3;
  Millis base_backoff{60 * kSecondMs};
};

// Per-agent report pipeline: sampling, queueing, failover delivery and
// meta-reports about unreachable collectors.
class ReportEngine {
 public:
  explicit ReportEngine(std::uint64_t seed, ReportEngineOptions options = {})
      : options_(options), rng_(seed) {}

  // Samples the outcome against the governing policy; queues and returns the
  // task when admitted.
  std::optional<DeliveryTask> observe(const RequestOutcome& outcome, PolicyStore& store, Timestamp now);

  // Uploads every task due at `now`. The transport may mutate `store`
  // (collector responses carry their own policies).
  DeliveryRound deliver_due(Timestamp now, PolicyStore& store, const Transport& transport);

  Millis backoff(int attempts) const;
  std::optional<Timestamp> next_due() const;
  const std::deque<DeliveryTask>& queue() const { return queue_; }
  const ReportEngineOptions& options() const { return options_; }
  UniformSource& rng() { return rng_; }

 private:
  std::optional<DeliveryTask> admit(const RequestOutcome& outcome, PolicyStore& store, Timestamp now, bool is_meta,
                                    std::vector<std::string> chain);
  std::size_t choose_endpoint(const DeliveryTask& task);

  ReportEngineOptions options_;
  UniformSource rng_;
  std::deque<DeliveryTask> queue_;
  std::uint64_t next_id_ = 1;
};

}  // namespace nellab
