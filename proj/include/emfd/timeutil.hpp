#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace emfd {

using Timestamp = std::chrono::sys_seconds;
using BinDuration = std::chrono::duration<std::int64_t, std::ratio<900>>;

/// Length of one aggregation bin in hours.
inline constexpr double kBinHours = 0.25;

/// Floor to the enclosing 15-minute boundary.
inline Timestamp align_bin(Timestamp t) {
  return std::chrono::floor<BinDuration>(t);
}

inline bool is_bin_aligned(Timestamp t) { return align_bin(t) == t; }

namespace detail {

inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)`. Fractional seconds are
/// floored. Returns nullopt for anything else.
inline std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  int Y, M, D, h, m, sec;
  if (!detail::read_digits(s, 0, 4, Y) || s.size() < 20 || s[4] != '-' ||
      !detail::read_digits(s, 5, 2, M) || s[7] != '-' || !detail::read_digits(s, 8, 2, D) ||
      (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || !detail::read_digits(s, 11, 2, h) ||
      s[13] != ':' || !detail::read_digits(s, 14, 2, m) || s[16] != ':' ||
      !detail::read_digits(s, 17, 2, sec)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) return std::nullopt;
  }
  if (pos >= s.size()) return std::nullopt;
  int offset_minutes = 0;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh, om;
    if (!detail::read_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !detail::read_digits(s, pos + 4, 2, om) || oh > 23 || om > 59) {
      return std::nullopt;
    }
    offset_minutes = (oh * 60 + om) * (s[pos] == '-' ? -1 : 1);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;
  if (h > 23 || m > 59 || sec > 60) return std::nullopt;
  year_month_day ymd{year{Y}, month{static_cast<unsigned>(M)}, day{static_cast<unsigned>(D)}};
  if (!ymd.ok()) return std::nullopt;
  Timestamp t = sys_days{ymd} + hours{h} + minutes{m} + seconds{sec};
  return t - minutes{offset_minutes};
}

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
inline std::string format_rfc3339(Timestamp t) {
  using namespace std::chrono;
  auto day_start = floor<days>(t);
  year_month_day ymd{day_start};
  hh_mm_ss tod{t - day_start};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

/// Hour of day (0-23) after applying a UTC offset in hours.
inline int local_hour(Timestamp t, double utc_offset_hours) {
  using namespace std::chrono;
  auto shifted = t + seconds{static_cast<std::int64_t>(std::llround(utc_offset_hours * 3600.0))};
  auto day_start = floor<days>(shifted);
  return static_cast<int>(duration_cast<hours>(shifted - day_start).count());
}

}  // namespace emfd
