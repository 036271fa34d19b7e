#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace boardcast {

/**
 * Calendar date stored as a day count since 1970-01-01 (proleptic
 * Gregorian). Day arithmetic is exact integer arithmetic, which is what
 * the rolling-window and horizon logic needs.
 */
class Date {
 public:
  Date() : days_(0) {}

  static Date from_ymd(int year, int month, int day);
  static Date parse(std::string_view iso);  // "YYYY-MM-DD"

  /// ISO-8601 "YYYY-MM-DD".
  std::string to_string() const;

  int year() const;
  int month() const;
  int day() const;

  std::int32_t day_number() const { return days_; }
  static Date from_day_number(std::int32_t n) {
    Date d;
    d.days_ = n;
    return d;
  }

  Date operator+(int days) const { return from_day_number(days_ + days); }
  Date operator-(int days) const { return from_day_number(days_ - days); }
  int operator-(Date other) const { return days_ - other.days_; }
  Date& operator++() {
    ++days_;
    return *this;
  }

  auto operator<=>(const Date&) const = default;

 private:
  std::int32_t days_;
};

}  // namespace boardcast
