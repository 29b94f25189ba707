#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "supertracy/errors.hpp"

namespace supertracy {

// UTC instants are carried as epoch seconds. The corpus only needs
// minute resolution; all conversions use proleptic Gregorian math so no
// locale or timezone state is involved.

// Days from civil date, epoch 1970-01-01 (Howard Hinnant's algorithm).
inline int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline void civil_from_days(int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

inline int64_t utc_seconds(int y, int mo, int d, int h = 0, int mi = 0, int s = 0) {
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

// ISO-8601 Zulu formatting: 2024-07-01T13:05:00Z
inline std::string format_iso8601(int64_t epoch_seconds) {
    int64_t days = epoch_seconds / 86400;
    int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                  static_cast<int>(rem % 60));
    return buf;
}

namespace detail {
inline bool parse_int(const std::string& s, size_t pos, size_t len, int& out) {
    if (pos + len > s.size()) return false;
    int v = 0;
    for (size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}
}  // namespace detail

// Accepted input formats (the documented date-format table):
//   day-first   "dd-mm-yyyy HH:MM"        e.g. 01-07-2024 13:05
//   ISO-8601    "yyyy-mm-ddTHH:MM:SSZ"    seconds and Z optional
// Returns epoch seconds; throws SchemaMismatch on anything else.
inline int64_t parse_timestamp(const std::string& raw) {
    using detail::parse_int;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    // day-first: dd-mm-yyyy HH:MM
    if (raw.size() >= 16 && raw[2] == '-' && raw[5] == '-' && raw[10] == ' ' && raw[13] == ':') {
        if (parse_int(raw, 0, 2, d) && parse_int(raw, 3, 2, mo) && parse_int(raw, 6, 4, y) &&
            parse_int(raw, 11, 2, h) && parse_int(raw, 14, 2, mi)) {
            if (raw.size() >= 19 && raw[16] == ':') parse_int(raw, 17, 2, se);
            return utc_seconds(y, mo, d, h, mi, se);
        }
    }
    // ISO: yyyy-mm-ddTHH:MM[:SS][Z]
    if (raw.size() >= 16 && raw[4] == '-' && raw[7] == '-' && (raw[10] == 'T' || raw[10] == ' ') &&
        raw[13] == ':') {
        if (parse_int(raw, 0, 4, y) && parse_int(raw, 5, 2, mo) && parse_int(raw, 8, 2, d) &&
            parse_int(raw, 11, 2, h) && parse_int(raw, 14, 2, mi)) {
            if (raw.size() >= 19 && raw[16] == ':') parse_int(raw, 17, 2, se);
            return utc_seconds(y, mo, d, h, mi, se);
        }
    }
    throw SchemaMismatch("unparseable timestamp: " + raw);
}

}  // namespace supertracy
