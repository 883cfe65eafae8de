#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace swinvrnn {

using TimePoint = std::chrono::sys_seconds;

// Inclusive time interval.
struct TimeRange {
  TimePoint first;
  TimePoint last;

  static TimeRange years(int first_year, int last_year);
  bool contains(TimePoint t) const { return t >= first && t <= last; }
};

// Evenly spaced time stamps `start + i * step_hours` for i in [0, count).
struct TimeAxis {
  TimePoint start{};
  int step_hours = 6;
  std::int64_t count = 0;

  TimePoint at(std::int64_t index) const;
  // Index of `t`, or -1 when t is off-axis or out of range.
  std::int64_t index_of(TimePoint t) const;
  // First and one-past-last index inside `range`.
  std::pair<std::int64_t, std::int64_t> span_of(const TimeRange& range) const;
};

// ISO-8601 week of year (1..53).
int iso_week(TimePoint t);
// Climatology bucket in [0, 52): ISO week with week 53 folded into week 52.
int climatology_week_index(TimePoint t);

TimePoint make_time(int year, unsigned month, unsigned day, int hour = 0);
std::string format_time(TimePoint t);
// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS][Z]` and the space separated form.
TimePoint parse_time(std::string_view text);

// CF-style time coordinate units, e.g. "hours since 1979-01-01".
struct CfTimeUnits {
  std::chrono::seconds unit{3600};
  TimePoint epoch{};

  static CfTimeUnits parse(std::string_view text);
  TimePoint to_time(double value) const;
};

}  // namespace swinvrnn
