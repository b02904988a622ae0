#include "macrocast/quarter.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>

#include "macrocast/error.hpp"

namespace macrocast {

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string QuarterDate::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04dQ%d", year, quarter);
  return buf;
}

QuarterDate QuarterDate::parse(std::string_view text) {
  std::string_view s = trim(text);
  if (s.size() == 6 && (s[4] == 'Q' || s[4] == 'q')) {
    int y = 0, q = 0;
    if (parse_int(s.substr(0, 4), y) && parse_int(s.substr(5, 1), q) && q >= 1 && q <= 4) {
      return QuarterDate{y, q};
    }
  }
  throw DataError("unparseable quarter date '" + std::string(text) + "' (expected YYYYQn)");
}

std::string MonthDate::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

MonthDate MonthDate::parse(std::string_view text) {
  std::string_view s = trim(text);
  if (s.size() == 7 && s[4] == '-') {
    int y = 0, m = 0;
    if (parse_int(s.substr(0, 4), y) && parse_int(s.substr(5, 2), m) && m >= 1 && m <= 12) {
      return MonthDate{y, m};
    }
  }
  throw DataError("unparseable month date '" + std::string(text) + "' (expected YYYY-MM)");
}

}  // namespace macrocast
