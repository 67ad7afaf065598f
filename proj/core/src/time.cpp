#include "popscope/time.hpp"

#include <charconv>
#include <cstdio>

#include "popscope/error.hpp"

namespace popscope {
namespace {

using namespace std::chrono;

bool read_fixed(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto res = std::from_chars(text.data() + pos, text.data() + pos + width, out);
  return res.ec == std::errc{};
}

std::optional<Date> read_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  if (!read_fixed(text, 0, 4, y) || !read_fixed(text, 5, 2, m) || !read_fixed(text, 8, 2, d)) {
    return std::nullopt;
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

std::optional<seconds> read_clock(std::string_view text) {
  int h = 0, mi = 0, s = 0;
  if (text.size() < 8 || text[2] != ':' || text[5] != ':') return std::nullopt;
  if (!read_fixed(text, 0, 2, h) || !read_fixed(text, 3, 2, mi) || !read_fixed(text, 6, 2, s)) {
    return std::nullopt;
  }
  if (h > 23 || mi > 59 || s > 59) return std::nullopt;
  return hours{h} + minutes{mi} + seconds{s};
}

}  // namespace

std::optional<Date> try_parse_date(std::string_view text) {
  if (text.size() != 10) return std::nullopt;
  return read_date(text);
}

Date parse_date(std::string_view text) {
  auto d = try_parse_date(text);
  if (!d) throw InvalidArgument("expected a YYYY-MM-DD date, got '" + std::string(text) + "'");
  return *d;
}

std::string format_date(Date day) {
  year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_timestamp(Timestamp ts) {
  auto day = floor<days>(ts);
  hh_mm_ss clock{ts - day};
  char buf[16];
  std::snprintf(buf, sizeof buf, " %02d:%02d:%02d", static_cast<int>(clock.hours().count()),
                static_cast<int>(clock.minutes().count()),
                static_cast<int>(clock.seconds().count()));
  return format_date(day) + buf;
}

std::optional<Timestamp> try_parse_timestamp(std::string_view text) {
  if (text.size() != 19 || text[10] != ' ') return std::nullopt;
  auto d = read_date(text.substr(0, 10));
  auto c = read_clock(text.substr(11));
  if (!d || !c) return std::nullopt;
  return Timestamp{*d} + *c;
}

std::string format_iso8601(Timestamp ts) {
  std::string out = format_timestamp(ts);
  out[10] = 'T';
  return out + "Z";
}

std::optional<Timestamp> try_parse_iso8601(std::string_view text) {
  if (text.size() < 20 || text[10] != 'T' || text.back() != 'Z') return std::nullopt;
  auto d = read_date(text.substr(0, 10));
  auto c = read_clock(text.substr(11, 8));
  if (!d || !c) return std::nullopt;
  auto rest = text.substr(19, text.size() - 20);
  if (!rest.empty()) {
    if (rest[0] != '.' || rest.size() < 2) return std::nullopt;
    for (char ch : rest.substr(1)) {
      if (ch < '0' || ch > '9') return std::nullopt;
    }
  }
  return Timestamp{*d} + *c;
}

Date day_of(Timestamp ts) { return floor<days>(ts); }

std::vector<Date> days_between(Date start, Date end) {
  std::vector<Date> out;
  for (Date d = start; d <= end; d += days{1}) out.push_back(d);
  return out;
}

}  // namespace popscope
