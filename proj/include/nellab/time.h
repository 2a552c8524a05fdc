#pragma once

#include <chrono>
#include <cstdint>
#include <limits>

namespace nellab {

// Simulator and store time source. Never reads the wall clock; callers pass
// `now` explicitly so every computation is replayable.
struct VirtualClock {
  using duration = std::chrono::milliseconds;
  using rep = duration::rep;
  using period = duration::period;
  using time_point = std::chrono::time_point<VirtualClock, duration>;
  static constexpr bool is_steady = true;
};

using Millis = std::chrono::milliseconds;
using Timestamp = VirtualClock::time_point;

constexpr Timestamp at_ms(std::int64_t ms) { return Timestamp(Millis(ms)); }
constexpr std::int64_t to_ms(Timestamp t) { return t.time_since_epoch().count(); }

constexpr Timestamp kFarFuture = Timestamp(Millis(std::numeric_limits<std::int64_t>::max()));

// t + d, clamped to kFarFuture instead of overflowing. Lifetimes of several
// centuries are legal policy values.
constexpr Timestamp saturating_add(Timestamp t, Millis d) {
  const auto base = to_ms(t);
  const auto delta = d.count();
  if (delta > 0 && base > std::numeric_limits<std::int64_t>::max() - delta) return kFarFuture;
  return t + d;
}

constexpr std::int64_t kSecondMs = 1000;
constexpr std::int64_t kMinuteMs = 60 * kSecondMs;
constexpr std::int64_t kHourMs = 60 * kMinuteMs;
constexpr std::int64_t kDayMs = 24 * kHourMs;
constexpr std::int64_t kYearMs = 365 * kDayMs;

}  // namespace nellab
