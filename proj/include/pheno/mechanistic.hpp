#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pheno/chill_tables.hpp"
#include "pheno/domain.hpp"
#include "pheno/parallel.hpp"

namespace pheno {

// Shared three-parameter set of the classical models: chill requirement,
// forcing requirement (GDH), and base temperature.
struct MechanisticParams {
  double chill_req = 0.0;
  double forcing_req = 0.0;
  double base_temp = 0.0;

  void validate() const {
    if (!(chill_req > 0.0)) throw Error("chill requirement must be > 0");
    if (!(forcing_req > 0.0)) throw Error("forcing requirement must be > 0");
    if (!std::isfinite(base_temp)) throw Error("base temperature must be finite");
  }
  friend bool operator==(const MechanisticParams&, const MechanisticParams&) = default;
};

enum class ChillModelKind { ChillHours, Utah, ChillDays };

inline const char* to_string(ChillModelKind k) {
  switch (k) {
    case ChillModelKind::ChillHours: return "chill-hours";
    case ChillModelKind::Utah: return "utah";
    case ChillModelKind::ChillDays: return "chill-days";
  }
  return "?";
}

inline ChillModelKind chill_model_from_string(const std::string& s) {
  if (s == "chill-hours") return ChillModelKind::ChillHours;
  if (s == "utah") return ChillModelKind::Utah;
  if (s == "chill-days") return ChillModelKind::ChillDays;
  throw ConfigError("unknown chill model '" + s +
                    "' (expected chill-hours, utah or chill-days)");
}

inline constexpr double kChillHoursUpperDefault = 7.2;

// Hours of the day spent in the chilling band [0 C, upper_threshold].
inline double chill_hours(std::span<const double> day_temps,
                          double upper_threshold = kChillHoursUpperDefault) {
  int n = 0;
  for (double t : day_temps) {
    if (t >= 0.0 && t <= upper_threshold) ++n;
  }
  return static_cast<double>(n);
}

// Utah chill units for one day: sum of hourly effectiveness weights.
// May be negative on warm days.
inline double utah_chill(std::span<const double> day_temps) {
  double u = 0.0;
  for (double t : day_temps) u += tables::utah_hour_weight(t);
  return u;
}

// Chill Days daily contribution, returned as a non-negative magnitude
// accumulating toward the chill requirement.
inline double chill_days(double day_min, double day_max, double day_mean,
                         double base_temp) {
  if (!(day_min <= day_mean && day_mean <= day_max)) {
    throw Error("chill_days: requires min <= mean <= max");
  }
  if (!std::isfinite(day_min) || !std::isfinite(day_max) ||
      !std::isfinite(day_mean)) {
    throw Error("chill_days: non-finite input");
  }
  return -tables::chill_days_cd(day_min, day_max, day_mean, base_temp);
}

// Growing Degree Hours for one day: sum over hours of max(0, temp - base).
inline double gdh_forcing(std::span<const double> day_temps, double base_temp) {
  double f = 0.0;
  for (double t : day_temps) {
    const double d = t - base_temp;
    if (d > 0.0) f += d;
  }
  return f;
}

struct HardPredictOptions {
  // Floors the cumulative Utah sum at zero so the chill requirement stays
  // well-posed in warm climates. Only the Utah model can go negative.
  bool floor_negative_chill = true;
};

// Daily chill contributions for a whole season under one model.
inline std::vector<double> chill_daily_units(const SeasonSeries& series,
                                             ChillModelKind kind,
                                             double base_temp) {
  std::vector<double> u(static_cast<std::size_t>(series.length()));
  for (int t = 1; t <= series.length(); ++t) {
    switch (kind) {
      case ChillModelKind::ChillHours:
        u[t - 1] = chill_hours(series.day(t));
        break;
      case ChillModelKind::Utah:
        u[t - 1] = utah_chill(series.day(t));
        break;
      case ChillModelKind::ChillDays: {
        const DailyStats d = daily_stats(series.day(t));
        u[t - 1] = chill_days(d.min, d.max, d.mean, base_temp);
        break;
      }
    }
  }
  return u;
}

inline std::vector<double> forcing_daily_units(const SeasonSeries& series,
                                               double base_temp) {
  std::vector<double> f(static_cast<std::size_t>(series.length()));
  for (int t = 1; t <= series.length(); ++t) {
    f[t - 1] = gdh_forcing(series.day(t), base_temp);
  }
  return f;
}

// Two-stage accumulation walk over precomputed daily units. Chill accumulates
// until its requirement is met on day t_c; forcing accumulates from t_c + 1
// and the first day with F >= forcing_req blooms. nullopt = season ends with
// the forcing requirement unmet (NoBloom).
inline std::optional<int> hard_bloom_walk(std::span<const double> chill_units,
                                          std::span<const double> forcing_units,
                                          double chill_req, double forcing_req,
                                          bool floor_negative_chill) {
  const int S = static_cast<int>(chill_units.size());
  double c_acc = 0.0;
  double f_acc = 0.0;
  bool chill_met = false;
  for (int t = 1; t <= S; ++t) {
    if (!chill_met) {
      c_acc += chill_units[t - 1];
      if (floor_negative_chill && c_acc < 0.0) c_acc = 0.0;
      if (c_acc >= chill_req) {
        chill_met = true;
        if (f_acc >= forcing_req) return t;  // forcing_req <= 0 blooms at once
      }
    } else {
      f_acc += forcing_units[t - 1];
      if (f_acc >= forcing_req) return t;
    }
  }
  return std::nullopt;
}

inline std::optional<int> predict_bloom_hard(const SeasonSeries& series,
                                             const MechanisticParams& params,
                                             ChillModelKind kind,
                                             const HardPredictOptions& opts = {}) {
  const std::vector<double> chill = chill_daily_units(series, kind, params.base_temp);
  const std::vector<double> forcing = forcing_daily_units(series, params.base_temp);
  return hard_bloom_walk(chill, forcing, params.chill_req, params.forcing_req,
                         opts.floor_negative_chill);
}

// NoBloom scores as the last season day in all metric computations.
inline int bloom_day_or_end(std::optional<int> day, int season_length) {
  return day.value_or(season_length);
}

// ---------------------------------------------------------------------------
// Grid-search calibration.

struct GridSpec {
  std::vector<double> chill_req;
  std::vector<double> forcing_req;
  std::vector<double> base_temp;

  void validate() const {
    auto check = [](const std::vector<double>& axis, const char* name) {
      if (axis.empty()) throw ConfigError(std::string("grid axis ") + name + " is empty");
      for (std::size_t i = 1; i < axis.size(); ++i) {
        if (!(axis[i - 1] < axis[i])) {
          throw ConfigError(std::string("grid axis ") + name + " must be strictly increasing");
        }
      }
    };
    check(chill_req, "chill_req");
    check(forcing_req, "forcing_req");
    check(base_temp, "base_temp");
  }
  std::size_t size() const {
    return chill_req.size() * forcing_req.size() * base_temp.size();
  }
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  }
  return v;
}

// Desk-scale defaults; ranges are configuration, not model substance.
inline GridSpec default_grid(ChillModelKind kind) {
  GridSpec g;
  switch (kind) {
    case ChillModelKind::ChillHours: g.chill_req = linspace(100.0, 2000.0, 20); break;
    case ChillModelKind::Utah:       g.chill_req = linspace(100.0, 2000.0, 20); break;
    case ChillModelKind::ChillDays:  g.chill_req = linspace(10.0, 400.0, 20); break;
  }
  g.forcing_req = linspace(1000.0, 20000.0, 20);
  for (int t = 0; t <= 15; ++t) g.base_temp.push_back(static_cast<double>(t));
  return g;
}

enum class Grouping { PerLocation, PerVariety };

inline const char* to_string(Grouping g) {
  return g == Grouping::PerLocation ? "per-location" : "per-variety";
}
inline Grouping grouping_from_string(const std::string& s) {
  if (s == "per-location" || s == "location") return Grouping::PerLocation;
  if (s == "per-variety" || s == "variety") return Grouping::PerVariety;
  throw ConfigError("unknown grouping '" + s + "' (expected location or variety)");
}

inline const std::string& group_key(const Dataset& data, const Sample& s,
                                    Grouping grouping) {
  return grouping == Grouping::PerLocation ? s.bloom.location_id
                                           : data.variety_of(s);
}

struct GroupFit {
  MechanisticParams params;
  double train_mse = 0.0;
  int n_samples = 0;
};

struct GridSearchResult {
  std::map<std::string, GroupFit> fits;
  std::vector<std::string> warnings;
};

// Exhaustive grid search minimizing training MSE per group. Ties break to the
// lexicographically smallest (chill_req, forcing_req, base_temp), so the
// result does not depend on dataset row order or on the number of workers.
inline GridSearchResult grid_search(const Dataset& train, ChillModelKind kind,
                                    const GridSpec& grid, Grouping grouping,
                                    int jobs = 1,
                                    const HardPredictOptions& opts = {}) {
  if (train.empty()) throw Error("grid_search: empty training set");
  grid.validate();

  // Group sample indices, keyed deterministically.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train.samples().size(); ++i) {
    groups[group_key(train, train.samples()[i], grouping)].push_back(i);
  }

  GridSearchResult result;
  // Location-table entries that contributed no sample are reported, never
  // silently dropped.
  if (grouping == Grouping::PerLocation) {
    for (const auto& loc : train.locations()) {
      if (!groups.count(loc.location_id)) {
        result.warnings.push_back("group '" + loc.location_id +
                                  "' has no training samples; skipped");
      }
    }
  } else {
    std::set<std::string> varieties;
    for (const auto& loc : train.locations()) varieties.insert(loc.variety);
    for (const auto& v : varieties) {
      if (!groups.count(v)) {
        result.warnings.push_back("group '" + v + "' has no training samples; skipped");
      }
    }
  }

  const auto& samples = train.samples();
  const std::size_t n_points = grid.size();

  for (const auto& [key, idxs] : groups) {
    // Daily units per sample: chill per base temperature only for ChillDays,
    // forcing per base temperature always.
    const std::size_t n_tb = grid.base_temp.size();
    std::vector<std::vector<double>> chill_by_tb(
        kind == ChillModelKind::ChillDays ? n_tb : 1);
    std::vector<std::vector<double>> forcing_by_tb(n_tb);

    std::vector<int> season_len(idxs.size());
    std::vector<int> observed(idxs.size());
    std::vector<std::size_t> day_offset(idxs.size());
    std::size_t total_days = 0;
    for (std::size_t k = 0; k < idxs.size(); ++k) {
      const Sample& s = samples[idxs[k]];
      season_len[k] = s.series.length();
      observed[k] = s.bloom.bloom_day;
      day_offset[k] = total_days;
      total_days += static_cast<std::size_t>(s.series.length());
    }
    for (std::size_t tb_i = 0; tb_i < n_tb; ++tb_i) {
      forcing_by_tb[tb_i].resize(total_days);
      if (kind == ChillModelKind::ChillDays) chill_by_tb[tb_i].resize(total_days);
      for (std::size_t k = 0; k < idxs.size(); ++k) {
        const Sample& s = samples[idxs[k]];
        const double tb = grid.base_temp[tb_i];
        const auto f = forcing_daily_units(s.series, tb);
        std::copy(f.begin(), f.end(), forcing_by_tb[tb_i].begin() + day_offset[k]);
        if (kind == ChillModelKind::ChillDays) {
          const auto c = chill_daily_units(s.series, kind, tb);
          std::copy(c.begin(), c.end(), chill_by_tb[tb_i].begin() + day_offset[k]);
        }
      }
    }
    if (kind != ChillModelKind::ChillDays) {
      chill_by_tb[0].resize(total_days);
      for (std::size_t k = 0; k < idxs.size(); ++k) {
        const Sample& s = samples[idxs[k]];
        const auto c = chill_daily_units(s.series, kind, 0.0);
        std::copy(c.begin(), c.end(), chill_by_tb[0].begin() + day_offset[k]);
      }
    }

    // Squared errors are exact integers, so the per-point SSE is independent
    // of sample order and of how points are distributed over workers.
    std::vector<double> sse(n_points);
    parallel_for(n_points, jobs, [&](std::size_t p) {
      const std::size_t n_bf = grid.forcing_req.size();
      const std::size_t bc_i = p / (n_bf * n_tb);
      const std::size_t bf_i = (p / n_tb) % n_bf;
      const std::size_t tb_i = p % n_tb;
      const double bc = grid.chill_req[bc_i];
      const double bf = grid.forcing_req[bf_i];
      const auto& chill = chill_by_tb[kind == ChillModelKind::ChillDays ? tb_i : 0];
      const auto& forcing = forcing_by_tb[tb_i];
      double acc = 0.0;
      for (std::size_t k = 0; k < idxs.size(); ++k) {
        std::span<const double> cu{chill.data() + day_offset[k],
                                   static_cast<std::size_t>(season_len[k])};
        std::span<const double> fu{forcing.data() + day_offset[k],
                                   static_cast<std::size_t>(season_len[k])};
        const auto day = hard_bloom_walk(cu, fu, bc, bf, opts.floor_negative_chill);
        const double e = bloom_day_or_end(day, season_len[k]) - observed[k];
        acc += e * e;
      }
      sse[p] = acc;
    });

    // Grid points are enumerated in lexicographic (chill, forcing, base)
    // order; the first strict minimum is the tie-break winner.
    std::size_t best = 0;
    for (std::size_t p = 1; p < n_points; ++p) {
      if (sse[p] < sse[best]) best = p;
    }
    const std::size_t n_bf = grid.forcing_req.size();
    GroupFit fit;
    fit.params.chill_req = grid.chill_req[best / (n_bf * n_tb)];
    fit.params.forcing_req = grid.forcing_req[(best / n_tb) % n_bf];
    fit.params.base_temp = grid.base_temp[best % n_tb];
    fit.train_mse = sse[best] / static_cast<double>(idxs.size());
    fit.n_samples = static_cast<int>(idxs.size());
    result.fits.emplace(key, fit);
  }
  return result;
}

}  // namespace pheno
