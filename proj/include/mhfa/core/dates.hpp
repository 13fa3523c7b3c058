#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace mhfa {

/// Calendar day. Arithmetic is in whole days.
using Date = std::chrono::sys_days;

/// Parses `YYYY-MM-DD`. Returns nullopt on any malformed or impossible date.
std::optional<Date> parse_date(std::string_view text);

std::string format_date(Date d);

/// Start of the week containing `d` when weeks begin on `anchor`.
Date week_start(Date d, std::chrono::weekday anchor);

/// Parses a weekday name ("monday", "Mon", ...). Case-insensitive.
std::optional<std::chrono::weekday> parse_weekday(std::string_view text);

/// RFC 3339 UTC timestamp with millisecond precision, e.g. 2024-01-01T08:00:00.000Z.
std::string format_rfc3339(std::chrono::system_clock::time_point tp);
std::optional<std::chrono::system_clock::time_point> parse_rfc3339(std::string_view text);

}  // namespace mhfa
