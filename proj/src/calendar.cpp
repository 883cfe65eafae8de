#include "swinvrnn/calendar.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

using namespace std::chrono;

TimeRange TimeRange::years(int first_year, int last_year) {
  if (last_year < first_year) {
    throw ConfigError("empty year range " + std::to_string(first_year) + ".." +
                      std::to_string(last_year));
  }
  return {make_time(first_year, 1, 1), make_time(last_year + 1, 1, 1) - seconds{1}};
}

TimePoint TimeAxis::at(std::int64_t index) const {
  return start + hours{static_cast<std::int64_t>(step_hours) * index};
}

std::int64_t TimeAxis::index_of(TimePoint t) const {
  const auto step = seconds{hours{step_hours}}.count();
  const auto offset = (t - start).count();
  if (offset < 0 || offset % step != 0) return -1;
  const auto idx = offset / step;
  return idx < count ? idx : -1;
}

std::pair<std::int64_t, std::int64_t> TimeAxis::span_of(const TimeRange& range) const {
  std::int64_t lo = count;
  std::int64_t hi = 0;
  // Axes are short enough (tens of thousands of stamps) for a direct scan.
  for (std::int64_t i = 0; i < count; ++i) {
    if (range.contains(at(i))) {
      lo = std::min(lo, i);
      hi = i + 1;
    }
  }
  if (hi <= lo) return {0, 0};
  return {lo, hi};
}

int iso_week(TimePoint t) {
  const sys_days day = floor<days>(t);
  const weekday wd{day};
  const unsigned iso_wd = wd.iso_encoding();  // Mon=1 .. Sun=7
  const sys_days thursday = day - days{iso_wd - 1} + days{3};
  const year_month_day ymd{thursday};
  const sys_days jan1 = sys_days{ymd.year() / January / 1};
  return static_cast<int>((thursday - jan1).count() / 7 + 1);
}

int climatology_week_index(TimePoint t) {
  const int week = iso_week(t);
  return std::min(week, 52) - 1;
}

TimePoint make_time(int year, unsigned month, unsigned day, int hour) {
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) throw ConfigError("invalid calendar date");
  return sys_days{ymd} + hours{hour};
}

std::string format_time(TimePoint t) {
  const sys_days day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(hms.hours().count()),
                static_cast<long long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
  int value = 0;
  if (pos + len > text.size()) throw ConfigError("malformed time stamp '" + std::string(whole) + "'");
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
  if (ec != std::errc{} || ptr != text.data() + pos + len) {
    throw ConfigError("malformed time stamp '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

TimePoint parse_time(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == 'Z')) text.remove_suffix(1);
  const int y = parse_int(text, 0, 4, text);
  const int mo = parse_int(text, 5, 2, text);
  const int d = parse_int(text, 8, 2, text);
  if (text.size() > 4 && text[4] != '-') throw ConfigError("malformed time stamp '" + std::string(text) + "'");
  TimePoint t = make_time(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  if (text.size() > 10) {
    if (text[10] != 'T' && text[10] != ' ') throw ConfigError("malformed time stamp '" + std::string(text) + "'");
    const int hh = parse_int(text, 11, 2, text);
    int mm = 0;
    int ss = 0;
    if (text.size() >= 16) mm = parse_int(text, 14, 2, text);
    if (text.size() >= 19) ss = parse_int(text, 17, 2, text);
    t += hours{hh} + minutes{mm} + seconds{ss};
  }
  return t;
}

CfTimeUnits CfTimeUnits::parse(std::string_view text) {
  const auto pos = text.find(" since ");
  if (pos == std::string_view::npos) {
    throw IoError("unsupported time units '" + std::string(text) + "'");
  }
  const std::string_view unit = text.substr(0, pos);
  CfTimeUnits out;
  if (unit == "hours" || unit == "hour" || unit == "h") {
    out.unit = hours{1};
  } else if (unit == "days" || unit == "day") {
    out.unit = days{1};
  } else if (unit == "minutes" || unit == "minute") {
    out.unit = minutes{1};
  } else if (unit == "seconds" || unit == "second" || unit == "s") {
    out.unit = seconds{1};
  } else {
    throw IoError("unsupported time unit '" + std::string(unit) + "'");
  }
  out.epoch = parse_time(text.substr(pos + 7));
  return out;
}

TimePoint CfTimeUnits::to_time(double value) const {
  const double secs = value * static_cast<double>(unit.count());
  return epoch + seconds{static_cast<std::int64_t>(std::llround(secs))};
}

}  // namespace swinvrnn
