#pragma once

#include <chrono>
#include <string>

namespace trapkit {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// "YYYY-MM-DDTHH:MM:SS.mmmZ"
std::string format_iso8601(Timestamp t);
/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z"; throws std::invalid_argument otherwise.
Timestamp parse_iso8601(const std::string& s);
/// Accepts "YYYY-MM-DD".
std::chrono::year_month_day parse_date(const std::string& s);
std::string format_date(std::chrono::year_month_day d);

inline Timestamp from_unix_millis(long long ms) { return Timestamp{std::chrono::milliseconds{ms}}; }
inline long long to_unix_millis(Timestamp t) { return t.time_since_epoch().count(); }

}  // namespace trapkit
