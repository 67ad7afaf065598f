#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace popscope {

/// Calendar day in UTC.
using Date = std::chrono::sys_days;
/// UTC instant at one-second resolution.
using Timestamp = std::chrono::sys_seconds;

std::optional<Date> try_parse_date(std::string_view text);
/// Parses `YYYY-MM-DD`; throws InvalidArgument on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date day);

/// `YYYY-MM-DD HH:MM:SS`, the layout used inside corpus lines.
std::string format_timestamp(Timestamp ts);
std::optional<Timestamp> try_parse_timestamp(std::string_view text);

/// `YYYY-MM-DDTHH:MM:SSZ`. The parser also accepts fractional seconds.
std::string format_iso8601(Timestamp ts);
std::optional<Timestamp> try_parse_iso8601(std::string_view text);

Date day_of(Timestamp ts);

/// Every day in [start, end], inclusive. Empty when start > end.
std::vector<Date> days_between(Date start, Date end);

}  // namespace popscope
