#include "trapkit/timeutil.hpp"

#include <cstdio>
#include <stdexcept>

namespace trapkit {

namespace chr = std::chrono;

std::string format_iso8601(Timestamp t) {
  const auto day = chr::floor<chr::days>(t);
  const chr::year_month_day ymd{day};
  const chr::hh_mm_ss hms{t - day};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()), static_cast<long>(hms.subseconds().count()));
  return buf;
}

chr::year_month_day parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%d-%u-%u%n", &y, &m, &d, &consumed) != 3 || consumed != static_cast<int>(s.size()))
    throw std::invalid_argument("expected YYYY-MM-DD: " + s);
  const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) throw std::invalid_argument("invalid calendar date: " + s);
  return ymd;
}

std::string format_date(chr::year_month_day d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

Timestamp parse_iso8601(const std::string& s) {
  if (s.size() < 20 || s[10] != 'T' || s.back() != 'Z') throw std::invalid_argument("expected ISO-8601 UTC: " + s);
  const auto ymd = parse_date(s.substr(0, 10));
  int hh = 0, mm = 0, ss = 0;
  int consumed = 0;
  const std::string clock = s.substr(11, s.size() - 12);
  if (std::sscanf(clock.c_str(), "%2d:%2d:%2d%n", &hh, &mm, &ss, &consumed) != 3 || consumed != 8)
    throw std::invalid_argument("bad time of day: " + s);
  if (hh > 23 || mm > 59 || ss > 60) throw std::invalid_argument("bad time of day: " + s);
  long ms = 0;
  if (clock.size() > 8) {
    if (clock[8] != '.' || clock.size() == 9) throw std::invalid_argument("bad fraction: " + s);
    long scale = 100;
    for (std::size_t i = 9; i < clock.size(); ++i) {
      if (clock[i] < '0' || clock[i] > '9') throw std::invalid_argument("bad fraction: " + s);
      ms += (clock[i] - '0') * scale;
      scale /= 10;
    }
  }
  return chr::sys_days{ymd} + chr::hours{hh} + chr::minutes{mm} + chr::seconds{ss} + chr::milliseconds{ms};
}

}  // namespace trapkit
