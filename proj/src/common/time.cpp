#include "narrator/time.hpp"

#include <charconv>
#include <cstdio>
#include <memory>

#include "narrator/error.hpp"

namespace narrator {

using namespace std::chrono;

Timestamp system_now() { return time_point_cast<milliseconds>(system_clock::now()); }

Clock stepping_clock(Timestamp start, milliseconds step) {
  auto next = std::make_shared<Timestamp>(start);
  return [next, step] {
    const Timestamp now = *next;
    *next += step;
    return now;
  };
}

std::string format_timestamp(Timestamp t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()), static_cast<int>(hms.subseconds().count()));
  return buf;
}

namespace {

int field(std::string_view text, std::size_t pos, std::size_t len) {
  int value = 0;
  const char* first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len) {
    throw ParseError("bad timestamp: " + std::string(text));
  }
  return value;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS.mmmZ
  if (text.size() != 24 || text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
      text[16] != ':' || text[19] != '.' || text[23] != 'Z') {
    throw ParseError("bad timestamp: " + std::string(text));
  }
  const year_month_day ymd{year{field(text, 0, 4)}, month{static_cast<unsigned>(field(text, 5, 2))},
                           day{static_cast<unsigned>(field(text, 8, 2))}};
  if (!ymd.ok()) throw ParseError("bad timestamp: " + std::string(text));
  return sys_days{ymd} + hours{field(text, 11, 2)} + minutes{field(text, 14, 2)} +
         seconds{field(text, 17, 2)} + milliseconds{field(text, 20, 3)};
}

}  // namespace narrator
