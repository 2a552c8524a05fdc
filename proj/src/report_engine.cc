#include "nellab/report_engine.h"

#include <algorithm>

#include "nellab/url.h"

namespace nellab {

std::string_view to_string(ReferrerMode mode) {
  switch (mode) {
    case ReferrerMode::kStripPath:
      return "strip-path";
    case ReferrerMode::kOriginOnly:
      return "origin-only";
    case ReferrerMode::kFull:
      return "full";
  }
  return "origin-only";
}

std::optional<ReferrerMode> referrer_mode_from_string(std::string_view text) {
  if (text == "strip-path") return ReferrerMode::kStripPath;
  if (text == "origin-only") return ReferrerMode::kOriginOnly;
  if (text == "full") return ReferrerMode::kFull;
  return std::nullopt;
}

std::string_view to_string(SubdomainMode mode) { return mode == SubdomainMode::kStrict ? "strict" : "permissive"; }

std::optional<SubdomainMode> subdomain_mode_from_string(std::string_view text) {
  if (text == "strict") return SubdomainMode::kStrict;
  if (text == "permissive") return SubdomainMode::kPermissive;
  return std::nullopt;
}

std::string apply_referrer_restriction(std::string_view referrer, ReferrerMode mode) {
  if (referrer.empty() || mode == ReferrerMode::kFull) return std::string(referrer);
  auto url = Url::parse(referrer);
  if (!url) return {};
  if (mode == ReferrerMode::kOriginOnly) return url->origin() + "/";
  return url->origin() + url->path;
}

std::pair<HeaderMap, HeaderMap> capture_headers(const RequestOutcome& outcome, const NelPolicyHeader& policy) {
  auto pick = [](const HeaderMap& exchanged, const std::vector<std::string>& wanted) {
    HeaderMap out;
    for (const auto& name : wanted) {
      auto it = std::find_if(exchanged.begin(), exchanged.end(),
                             [&](const auto& kv) { return iequals(kv.first, name); });
      if (it != exchanged.end()) out[name] = it->second;
    }
    return out;
  };
  return {pick(outcome.request_headers, policy.request_headers),
          pick(outcome.response_headers, policy.response_headers)};
}

DeliveryResult DeliveryResult::delivered(std::string server_ip) {
  DeliveryResult r;
  r.kind = Kind::kDelivered;
  r.phase = Phase::kApplication;
  r.status_code = 200;
  r.server_ip = std::move(server_ip);
  return r;
}

DeliveryResult DeliveryResult::unreachable(Phase phase, std::string error_type, std::string server_ip) {
  DeliveryResult r;
  r.kind = Kind::kUnreachable;
  r.phase = phase;
  r.error_type = std::move(error_type);
  r.server_ip = std::move(server_ip);
  return r;
}

DeliveryResult DeliveryResult::http_error(int status_code, std::string server_ip) {
  DeliveryResult r;
  r.kind = Kind::kHttpError;
  r.phase = Phase::kApplication;
  r.status_code = status_code;
  r.error_type = "http.error";
  r.server_ip = std::move(server_ip);
  return r;
}

std::string_view to_string(DeliveryResult::Kind kind) {
  switch (kind) {
    case DeliveryResult::Kind::kDelivered:
      return "delivered";
    case DeliveryResult::Kind::kUnreachable:
      return "unreachable";
    case DeliveryResult::Kind::kHttpError:
      return "http_error";
  }
  return "unreachable";
}

Millis ReportEngine::backoff(int attempts) const {
  return options_.base_backoff * (std::int64_t{1} << std::max(0, attempts - 1));
}

std::optional<Timestamp> ReportEngine::next_due() const {
  std::optional<Timestamp> earliest;
  for (const auto& t : queue_)
    if (!earliest || t.next_attempt_at < *earliest) earliest = t.next_attempt_at;
  return earliest;
}

std::optional<DeliveryTask> ReportEngine::observe(const RequestOutcome& outcome, PolicyStore& store, Timestamp now) {
  return admit(outcome, store, now, false, {});
}

std::optional<DeliveryTask> ReportEngine::admit(const RequestOutcome& outcome, PolicyStore& store, Timestamp now,
                                                bool is_meta, std::vector<std::string> chain) {
  auto url = Url::parse(outcome.url);
  if (!url || !url->secure()) return std::nullopt;
  auto match = store.lookup(url->host, now);
  if (!match) return std::nullopt;
  if (match->via_subdomain && options_.subdomain_mode == SubdomainMode::kStrict && outcome.phase != Phase::kDns)
    return std::nullopt;

  const auto& policy = match->policy.policy;
  const double fraction = outcome.is_success() ? policy.success_fraction : policy.failure_fraction;
  if (!(rng_.next() < fraction)) return std::nullopt;

  const EndpointGroup* group = match->policy.report_group();
  if (!group) return std::nullopt;

  DeliveryTask task;
  task.id = next_id_++;
  task.event_time = outcome.event_time;
  task.policy_host = match->matched_host;
  task.group = *group;
  task.next_attempt_at = now;
  task.is_meta = is_meta;
  task.chain = std::move(chain);

  auto& report = task.report;
  report.url = outcome.url;
  auto& body = report.body;
  body.sampling_fraction = fraction;
  body.referrer = apply_referrer_restriction(outcome.referrer, options_.referrer_mode);
  body.server_ip = outcome.server_ip;
  body.protocol = outcome.protocol;
  body.method = outcome.method;
  std::tie(body.request_headers, body.response_headers) = capture_headers(outcome, policy);
  body.status_code = outcome.phase == Phase::kDns ? 0 : outcome.status_code;
  body.elapsed_time = outcome.elapsed_time;
  body.phase = outcome.phase;
  body.type = outcome.result_type;

  queue_.push_back(task);
  return task;
}

std::size_t ReportEngine::choose_endpoint(const DeliveryTask& task) {
  const auto& endpoints = task.group.endpoints;
  auto failed = [&](std::size_t i) {
    return std::find(task.failed_endpoints.begin(), task.failed_endpoints.end(), i) != task.failed_endpoints.end();
  };
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < endpoints.size(); ++i)
    if (!failed(i)) live.push_back(i);
  if (live.empty())
    for (std::size_t i = 0; i < endpoints.size(); ++i) live.push_back(i);

  int best = endpoints[live.front()].priority;
  for (auto i : live) best = std::min(best, endpoints[i].priority);
  std::vector<std::size_t> candidates;
  std::int64_t total_weight = 0;
  for (auto i : live) {
    if (endpoints[i].priority != best) continue;
    candidates.push_back(i);
    total_weight += endpoints[i].weight;
  }
  if (candidates.size() == 1) return candidates.front();

  double point = rng_.next() * static_cast<double>(total_weight);
  for (auto i : candidates) {
    point -= endpoints[i].weight;
    if (point < 0) return i;
  }
  return candidates.back();
}

DeliveryRound ReportEngine::deliver_due(Timestamp now, PolicyStore& store, const Transport& transport) {
  DeliveryRound round;
  std::vector<DeliveryResult> final_failures;  // parallel to round.dropped

  struct Batch {
    std::string endpoint_url;
    std::string group;
    std::vector<std::pair<std::uint64_t, std::size_t>> members;  // task id, endpoint index
  };
  std::vector<Batch> batches;
  for (auto& task : queue_) {
    if (task.next_attempt_at > now) continue;
    const auto index = choose_endpoint(task);
    const auto& url = task.group.endpoints[index].url;
    auto it = std::find_if(batches.begin(), batches.end(), [&](const Batch& b) { return b.endpoint_url == url; });
    if (it == batches.end()) {
      batches.push_back({url, task.group.name, {}});
      it = std::prev(batches.end());
    }
    it->members.emplace_back(task.id, index);
  }

  auto find_task = [&](std::uint64_t id) {
    return std::find_if(queue_.begin(), queue_.end(), [&](const DeliveryTask& t) { return t.id == id; });
  };

  for (const auto& batch : batches) {
    Upload upload;
    upload.endpoint_url = batch.endpoint_url;
    upload.group = batch.group;
    upload.at = now;
    for (const auto& [id, _] : batch.members) {
      auto it = find_task(id);
      NelReport report = it->report;
      report.age = std::max<std::int64_t>(0, (now - it->event_time).count());
      upload.reports.push_back(std::move(report));
      upload.task_ids.push_back(id);
      upload.is_meta.push_back(it->is_meta);
    }
    upload.body = serialize_report_batch(upload.reports);

    DeliveryResult result = transport(upload);
    round.attempts.push_back({now, batch.endpoint_url, result, upload.task_ids});

    for (const auto& [id, index] : batch.members) {
      auto it = find_task(id);
      it->last_endpoint = batch.endpoint_url;
      if (result.ok()) {
        queue_.erase(it);
        continue;
      }
      ++it->attempts;
      it->failed_endpoints.push_back(index);
      if (it->failed_endpoints.size() >= it->group.endpoints.size()) it->failed_endpoints.clear();
      if (it->attempts >= options_.max_attempts) {
        round.dropped.push_back(std::move(*it));
        final_failures.push_back(result);
        queue_.erase(it);
      } else {
        it->next_attempt_at = now + backoff(it->attempts);
      }
    }
  }

  // Meta-reports are queued due now but uploaded by the next call.
  for (std::size_t k = 0; k < round.dropped.size(); ++k) {
    const auto& task = round.dropped[k];
    const auto& failure = final_failures[k];
    auto upload_url = Url::parse(task.last_endpoint);
    if (!upload_url) continue;
    const std::string& collector = upload_url->host;
    if (std::find(task.chain.begin(), task.chain.end(), collector) != task.chain.end()) continue;

    RequestOutcome outcome;
    outcome.url = task.last_endpoint;
    outcome.method = "POST";
    outcome.protocol = "http/1.1";
    outcome.server_ip = failure.server_ip;
    outcome.phase = failure.phase;
    outcome.status_code = failure.kind == DeliveryResult::Kind::kHttpError ? failure.status_code : 0;
    outcome.result_type = failure.error_type.empty() ? "unknown" : failure.error_type;
    outcome.event_time = now;

    auto chain = task.chain;
    chain.push_back(collector);
    if (auto meta = admit(outcome, store, now, true, std::move(chain))) round.meta_queued.push_back(*meta);
  }
  return round;
}

}  // namespace nellab
