#include "emplace/date.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "emplace/error.hpp"

namespace emplace {

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                        std::chrono::day{day}};
  if (!ymd.ok()) {
    throw DataError("invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) +
                    "-" + std::to_string(day));
  }
  return Date(static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
}

namespace {

int parse_field(std::string_view s, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("unparseable date '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

Date Date::parse(std::string_view iso) {
  if (iso.size() < 10 || iso[4] != '-' || iso[7] != '-' ||
      (iso.size() > 10 && iso[10] != 'T' && iso[10] != ' ')) {
    throw DataError("unparseable date '" + std::string(iso) + "'");
  }
  const int y = parse_field(iso.substr(0, 4), iso);
  const int m = parse_field(iso.substr(5, 2), iso);
  const int d = parse_field(iso.substr(8, 2), iso);
  if (m < 1 || d < 1) throw DataError("unparseable date '" + std::string(iso) + "'");
  return from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

std::string Date::iso() const {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace emplace
