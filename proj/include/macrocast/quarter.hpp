#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace macrocast {

// Calendar quarter. Ordering follows the calendar.
struct QuarterDate {
  int year = 1970;
  int quarter = 1;  // 1..4

  friend constexpr auto operator<=>(const QuarterDate&, const QuarterDate&) = default;

  // Number of quarters since year 0, Q1. Used for arithmetic and as a dense key.
  constexpr int ordinal() const { return year * 4 + (quarter - 1); }
  static constexpr QuarterDate from_ordinal(int ord) {
    int y = ord >= 0 ? ord / 4 : -((-ord + 3) / 4);
    return QuarterDate{y, ord - y * 4 + 1};
  }

  constexpr QuarterDate next() const { return plus(1); }
  constexpr QuarterDate prev() const { return plus(-1); }
  constexpr QuarterDate plus(int quarters) const { return from_ordinal(ordinal() + quarters); }

  // "YYYYQn"
  std::string to_string() const;
  // Accepts "YYYYQn" (case-insensitive Q). Throws DataError on anything else.
  static QuarterDate parse(std::string_view text);
};

// Signed distance b - a in quarters.
constexpr int quarters_between(QuarterDate a, QuarterDate b) { return b.ordinal() - a.ordinal(); }

// Calendar month, used only while ingesting monthly series.
struct MonthDate {
  int year = 1970;
  int month = 1;  // 1..12

  friend constexpr auto operator<=>(const MonthDate&, const MonthDate&) = default;

  constexpr int ordinal() const { return year * 12 + (month - 1); }
  static constexpr MonthDate from_ordinal(int ord) {
    int y = ord >= 0 ? ord / 12 : -((-ord + 11) / 12);
    return MonthDate{y, ord - y * 12 + 1};
  }
  constexpr QuarterDate quarter() const { return QuarterDate{year, (month - 1) / 3 + 1}; }

  // "YYYY-MM"
  std::string to_string() const;
  static MonthDate parse(std::string_view text);
};

}  // namespace macrocast
