#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace narrator {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// Source of wall-clock time; injectable so transcripts can be replayed byte-for-byte.
using Clock = std::function<Timestamp()>;

Timestamp system_now();

/// A clock that starts at `start` and advances by `step` on every call.
Clock stepping_clock(Timestamp start, std::chrono::milliseconds step = std::chrono::milliseconds{1});

/// ISO-8601 UTC with millisecond precision, e.g. "2025-06-15T09:30:00.000Z".
std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(std::string_view text);

}  // namespace narrator
