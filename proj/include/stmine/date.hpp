#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "stmine/error.hpp"

namespace stmine {

// Calendar date backed by std::chrono::sys_days.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days d) : days_(d) {}
  Date(int y, unsigned m, unsigned d)
      : days_(std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}}) {}

  // Strict "YYYY-mm-dd": ten characters, digits and dashes, a real calendar day.
  static std::optional<Date> parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t from, std::size_t n) -> std::optional<int> {
      int v = 0;
      for (std::size_t i = from; i < from + n; ++i) {
        if (s[i] < '0' || s[i] > '9') return std::nullopt;
        v = v * 10 + (s[i] - '0');
      }
      return v;
    };
    auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
    if (!y || !m || !d) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{unsigned(*m)},
                                    std::chrono::day{unsigned(*d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date(std::chrono::sys_days{ymd});
  }

  static Date parse_or_throw(std::string_view s, const char* code = "InvalidDate") {
    auto d = parse(s);
    if (!d) fail(code, "invalid date '" + std::string(s) + "', expected YYYY-mm-dd");
    return *d;
  }

  std::chrono::sys_days days() const { return days_; }
  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  int year() const { return int(ymd().year()); }
  unsigned month() const { return unsigned(ymd().month()); }
  unsigned day() const { return unsigned(ymd().day()); }

  Date operator+(int n) const { return Date(days_ + std::chrono::days{n}); }
  Date operator-(int n) const { return Date(days_ - std::chrono::days{n}); }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
    return buf;
  }

  // "YYYY-mm"
  std::string month_label() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", year(), month());
    return buf;
  }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace stmine
