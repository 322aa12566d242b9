#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pheno/common.hpp"

namespace pheno {

// Season-day index convention: t = 1 is October 1 of the season start year,
// t runs to kSeasonLength (274), which is July 1 in non-leap years and
// June 30 when the window crosses a leap day.
inline constexpr int kSeasonLength = 274;
inline constexpr int kHoursPerDay = 24;

// ---------------------------------------------------------------------------
// Civil-date arithmetic (proleptic Gregorian), exact for all years.

struct CivilDate {
  int year = 0;
  int month = 0;  // 1..12
  int day = 0;    // 1..31

  friend bool operator==(const CivilDate&, const CivilDate&) = default;
};

// Days since 1970-01-01.
constexpr std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
                       static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr std::int64_t days_from_civil(const CivilDate& c) {
  return days_from_civil(c.year, c.month, c.day);
}

constexpr CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m),
          static_cast<int>(d)};
}

constexpr bool is_leap_year(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline std::string format_date(const CivilDate& c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", c.year, c.month, c.day);
  return buf;
}

// Parses strict ISO-8601 calendar dates (YYYY-MM-DD).
inline CivilDate parse_date(std::string_view s) {
  auto fail = [&] {
    throw Error("invalid ISO-8601 date: '" + std::string(s) + "'");
  };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail();
  auto num = [&](int from, int to) {
    int v = 0;
    for (int i = from; i < to; ++i) {
      if (s[i] < '0' || s[i] > '9') fail();
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  CivilDate c{num(0, 4), num(5, 7), num(8, 10)};
  if (c.month < 1 || c.month > 12 || c.day < 1) fail();
  // Round-trip check rejects impossible days (e.g. Feb 30).
  if (civil_from_days(days_from_civil(c)) != c) fail();
  return c;
}

// ---------------------------------------------------------------------------
// Season calendar: October 1 of the start year is season day 1.

inline std::int64_t season_start_serial(int season_start_year) {
  return days_from_civil(season_start_year, 10, 1);
}

// Converts a calendar date inside the season window to its season-day index.
// Throws when the date is outside [Oct 1, Oct 1 + S - 1].
inline int doy_to_season_index(const CivilDate& date, int season_start_year,
                               int season_length = kSeasonLength) {
  const std::int64_t start = season_start_serial(season_start_year);
  const std::int64_t offset = days_from_civil(date) - start;
  if (offset < 0 || offset >= season_length) {
    const CivilDate last = civil_from_days(start + season_length - 1);
    throw Error("date " + format_date(date) + " outside season window [" +
                format_date(civil_from_days(start)) + ", " + format_date(last) +
                "]");
  }
  return static_cast<int>(offset) + 1;
}

inline CivilDate season_index_to_date(int t, int season_start_year,
                                      int season_length = kSeasonLength) {
  if (t < 1 || t > season_length) {
    throw Error("season index " + std::to_string(t) + " outside [1, " +
                std::to_string(season_length) + "]");
  }
  return civil_from_days(season_start_serial(season_start_year) + t - 1);
}

// ---------------------------------------------------------------------------
// Core data types. All immutable after construction and safe to share across
// workers.

// One season of hourly temperatures, S rows by 24 columns, degrees Celsius.
// Ingestion enforces S == kSeasonLength; in-memory construction accepts any
// positive length so miniature seasons can be built for numerical checks.
class SeasonSeries {
 public:
  SeasonSeries(int season_start_year, int length = kSeasonLength)
      : start_year_(season_start_year),
        length_(length),
        temps_(static_cast<std::size_t>(length) * kHoursPerDay, 0.0) {
    if (length < 1) throw Error("season length must be positive");
  }

  int season_start_year() const { return start_year_; }
  int length() const { return length_; }

  std::span<const double> day(int t) const {
    return {temps_.data() + static_cast<std::size_t>(t - 1) * kHoursPerDay,
            kHoursPerDay};
  }
  double at(int t, int hour) const {
    return temps_[static_cast<std::size_t>(t - 1) * kHoursPerDay + hour];
  }
  void set(int t, int hour, double v) {
    temps_[static_cast<std::size_t>(t - 1) * kHoursPerDay + hour] = v;
  }
  std::span<const double> flat() const { return temps_; }
  const double* data() const { return temps_.data(); }

  // Finiteness always; the plausibility band [-60, 60] C applies on ingestion.
  void validate(bool range_check) const {
    for (int t = 1; t <= length_; ++t) {
      for (int h = 0; h < kHoursPerDay; ++h) {
        const double v = at(t, h);
        if (!std::isfinite(v)) {
          throw Error("non-finite temperature at season day " +
                      std::to_string(t) + " hour " + std::to_string(h));
        }
        if (range_check && (v < -60.0 || v > 60.0)) {
          throw Error("temperature " + std::to_string(v) +
                      " C outside plausible range [-60, 60] at season day " +
                      std::to_string(t) + " hour " + std::to_string(h));
        }
      }
    }
  }

 private:
  int start_year_;
  int length_;
  std::vector<double> temps_;
};

struct BloomRecord {
  std::string location_id;
  std::string variety;
  int season_start_year = 0;
  int bloom_day = 0;  // season-day index in [1, S]

  void validate(int season_length = kSeasonLength) const {
    if (location_id.empty()) throw Error("bloom record with empty location_id");
    if (variety.empty()) throw Error("bloom record with empty variety");
    if (bloom_day < 1 || bloom_day > season_length) {
      throw Error("bloom day " + std::to_string(bloom_day) + " outside [1, " +
                  std::to_string(season_length) + "] for location " +
                  location_id);
    }
  }
};

struct Location {
  std::string location_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string variety;

  void validate() const {
    if (location_id.empty()) throw Error("location with empty id");
    if (variety.empty()) throw Error("location " + location_id + " missing variety");
    if (!(latitude >= -90.0 && latitude <= 90.0)) {
      throw Error("location " + location_id + ": latitude " +
                  std::to_string(latitude) + " outside [-90, 90]");
    }
    if (!(longitude >= -180.0 && longitude <= 180.0)) {
      throw Error("location " + location_id + ": longitude " +
                  std::to_string(longitude) + " outside [-180, 180]");
    }
  }
};

struct Sample {
  SeasonSeries series;
  BloomRecord bloom;
};

// Paired (season, bloom) samples plus the location table. Every sample's
// location_id resolves in the table and (location_id, season_start_year) is
// unique.
class Dataset {
 public:
  void add_location(Location loc) {
    loc.validate();
    if (by_id_.count(loc.location_id)) {
      throw Error("duplicate location_id " + loc.location_id);
    }
    by_id_.emplace(loc.location_id, locations_.size());
    locations_.push_back(std::move(loc));
  }

  void add_sample(Sample s) {
    s.bloom.validate(s.series.length());
    if (!by_id_.count(s.bloom.location_id)) {
      throw Error("sample references unknown location_id " +
                  s.bloom.location_id);
    }
    if (s.bloom.season_start_year != s.series.season_start_year()) {
      throw Error("sample season year mismatch for location " +
                  s.bloom.location_id);
    }
    const auto key = std::make_pair(s.bloom.location_id, s.bloom.season_start_year);
    if (!keys_.insert(key).second) {
      throw Error("duplicate (location, season) pair: " + s.bloom.location_id +
                  ", " + std::to_string(s.bloom.season_start_year));
    }
    samples_.push_back(std::move(s));
  }

  const std::vector<Sample>& samples() const { return samples_; }
  const std::vector<Location>& locations() const { return locations_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  const Location& location(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw Error("unknown location_id " + id);
    return locations_[it->second];
  }
  bool has_location(const std::string& id) const { return by_id_.count(id) > 0; }

  const std::string& variety_of(const Sample& s) const {
    return location(s.bloom.location_id).variety;
  }

  std::vector<int> distinct_years() const {
    std::set<int> ys;
    for (const auto& s : samples_) ys.insert(s.bloom.season_start_year);
    return {ys.begin(), ys.end()};
  }
  std::vector<std::string> distinct_location_ids() const {
    std::set<std::string> ids;
    for (const auto& s : samples_) ids.insert(s.bloom.location_id);
    return {ids.begin(), ids.end()};
  }

 private:
  std::vector<Sample> samples_;
  std::vector<Location> locations_;
  std::map<std::string, std::size_t> by_id_;
  std::set<std::pair<std::string, int>> keys_;
};

// ---------------------------------------------------------------------------

struct DailyStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

inline DailyStats daily_stats(std::span<const double> day_temps) {
  if (day_temps.size() != kHoursPerDay) {
    throw Error("daily_stats expects 24 hourly values, got " +
                std::to_string(day_temps.size()));
  }
  DailyStats s{day_temps[0], day_temps[0], 0.0};
  double sum = 0.0;
  for (double v : day_temps) {
    if (!std::isfinite(v)) throw Error("daily_stats: non-finite temperature");
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
  }
  s.mean = sum / kHoursPerDay;
  return s;
}

}  // namespace pheno
