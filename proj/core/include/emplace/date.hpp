#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace emplace {

/// Calendar date at day resolution, stored as a proleptic-Gregorian day
/// number (days since 1970-01-01).
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t day_number) : days_(day_number) {}

  static Date from_ymd(int year, unsigned month, unsigned day);
  /// Accepts "YYYY-MM-DD" optionally followed by a time part ("T..." or " ..."),
  /// which is ignored.
  static Date parse(std::string_view iso);

  std::int32_t day_number() const noexcept { return days_; }
  std::string iso() const;

  friend constexpr std::int32_t operator-(Date a, Date b) noexcept { return a.days_ - b.days_; }
  friend constexpr Date operator+(Date a, std::int32_t days) noexcept { return Date(a.days_ + days); }
  friend constexpr auto operator<=>(Date, Date) = default;

 private:
  std::int32_t days_ = 0;
};

}  // namespace emplace
