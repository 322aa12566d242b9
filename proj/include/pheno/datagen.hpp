#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/domain.hpp"
#include "pheno/mechanistic.hpp"

namespace pheno {

inline constexpr double kPi = 3.14159265358979323846;

// Deterministic Gaussian stream built on splitmix64; standard-library
// distributions are implementation-defined, which would break bit-exact
// regeneration across toolchains.
class GaussStream {
 public:
  explicit GaussStream(std::uint64_t seed) : stream_(seed) {}

  double next_u01() {  // (0, 1]
    return static_cast<double>((stream_.next() >> 11) + 1) * 0x1.0p-53;
  }
  double next_gauss() {
    const double u1 = next_u01();
    const double u2 = next_u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  // Modulo bias is irrelevant here, determinism is not.
  std::uint64_t next_below(std::uint64_t n) { return stream_.next() % n; }

 private:
  SplitMix stream_;
};

struct ClimateSpec {
  double mean_temp = 9.0;           // annual mean, degrees C
  double seasonal_amplitude = 10.0; // peak-to-mean summer/winter swing
  double diurnal_amplitude = 4.0;   // peak-to-mean day/night swing
  double daily_noise_std = 2.0;
  double hourly_noise_std = 0.5;
  double location_offset_range = 2.0;  // per-location uniform offset, +-range
  std::uint64_t seed = 1;

  void validate() const {
    if (seasonal_amplitude < 0.0 || diurnal_amplitude < 0.0) {
      throw ConfigError("climate amplitudes must be >= 0");
    }
    if (daily_noise_std < 0.0 || hourly_noise_std < 0.0) {
      throw ConfigError("climate noise stds must be >= 0");
    }
    if (location_offset_range < 0.0) {
      throw ConfigError("location offset range must be >= 0");
    }
    if (!std::isfinite(mean_temp)) throw ConfigError("mean temperature not finite");
  }
};

struct OracleSpec {
  ChillModelKind kind = ChillModelKind::Utah;
  MechanisticParams params;
  double jitter_std = 0.0;  // bloom-day observation noise, days

  void validate() const {
    params.validate();
    if (jitter_std < 0.0) throw ConfigError("jitter std must be >= 0");
  }
};

// Day-of-year on the generator's 365-day basis; season day 1 is October 1.
inline int datagen_day_of_year(int season_day) {
  return (274 - 1 + season_day - 1) % 365 + 1;
}

// temps[t][h] = mean + offset
//   + seasonal * cos(2 pi (doy - 196) / 365)   (peak mid July)
//   - diurnal * cos(2 pi (h - 14) / 24)        (warmest at 14:00)
//   + N(0, daily) + N(0, hourly)
inline SeasonSeries gen_season(const ClimateSpec& spec, double location_offset,
                               int season_start_year, std::uint64_t year_seed,
                               int season_length = kSeasonLength) {
  spec.validate();
  SeasonSeries series(season_start_year, season_length);
  GaussStream rng(mix_seed(year_seed, "season-temps"));
  for (int t = 1; t <= season_length; ++t) {
    const int doy = datagen_day_of_year(t);
    const double seasonal =
        spec.seasonal_amplitude * std::cos(2.0 * kPi * (doy - 196) / 365.0);
    const double day_noise = spec.daily_noise_std * rng.next_gauss();
    const double base = spec.mean_temp + location_offset + seasonal + day_noise;
    for (int h = 0; h < kHoursPerDay; ++h) {
      const double diurnal =
          spec.diurnal_amplitude * std::cos(2.0 * kPi * (h - 14) / 24.0);
      series.set(t, h, base - diurnal + spec.hourly_noise_std * rng.next_gauss());
    }
  }
  return series;
}

struct LocationTruth {
  std::string location_id;
  double climate_offset = 0.0;
  MechanisticParams params;  // the generating parameters for this location
};

struct GenResult {
  Dataset data;
  std::vector<LocationTruth> truth;
};

// Per-location linear drift of the oracle parameters with the location's
// climate offset; all-zero slopes give a homogeneous oracle.
struct HeteroSpec {
  double chill_req_per_degc = 0.0;
  double forcing_req_per_degc = 0.0;
  double base_temp_per_degc = 0.0;

  bool homogeneous() const {
    return chill_req_per_degc == 0.0 && forcing_req_per_degc == 0.0 &&
           base_temp_per_degc == 0.0;
  }
};

inline std::string datagen_location_id(int index, int n_locations) {
  int width = 1;
  for (int n = n_locations; n >= 10; n /= 10) ++width;
  std::string digits = std::to_string(index + 1);
  return "L" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') +
         digits;
}

inline constexpr int kNoBloomRetries = 8;

// Generates one season per (location, year) and labels it with the oracle's
// bloom day plus rounded Gaussian jitter clamped into [1, S]. Seasons the
// oracle leaves bloom-free are regenerated 2 C colder (same noise stream) up
// to kNoBloomRetries times, so every emitted sample is a bloom event.
inline GenResult gen_dataset_with_truth(const ClimateSpec& climate,
                                        const OracleSpec& oracle, int n_locations,
                                        const std::vector<int>& years,
                                        const HeteroSpec& hetero = {}) {
  climate.validate();
  oracle.validate();
  if (n_locations < 1) throw ConfigError("n_locations must be >= 1");
  if (years.empty()) throw ConfigError("years must be non-empty");

  GenResult out;
  for (int li = 0; li < n_locations; ++li) {
    const std::string id = datagen_location_id(li, n_locations);
    GaussStream loc_rng(mix_seed(mix_seed(climate.seed, "location"), li));
    const double offset =
        (2.0 * loc_rng.next_u01() - 1.0) * climate.location_offset_range;

    MechanisticParams true_params = oracle.params;
    true_params.chill_req += hetero.chill_req_per_degc * offset;
    true_params.forcing_req += hetero.forcing_req_per_degc * offset;
    true_params.base_temp += hetero.base_temp_per_degc * offset;
    true_params.validate();

    Location loc;
    loc.location_id = id;
    loc.latitude = 40.0 - 1.5 * offset;  // warmer offsets sit farther south
    loc.longitude = -110.0 + 0.8 * li;
    loc.variety = "V1";
    out.data.add_location(loc);
    out.truth.push_back({id, offset, true_params});

    for (int year : years) {
      const std::uint64_t pair_seed = mix_seed(climate.seed, li, year);
      SeasonSeries series(year, 1);
      std::optional<int> day;
      bool found = false;
      for (int attempt = 0; attempt <= kNoBloomRetries; ++attempt) {
        series = gen_season(climate, offset - 2.0 * attempt, year, pair_seed);
        day = predict_bloom_hard(series, true_params, oracle.kind);
        if (day) {
          found = true;
          break;
        }
      }
      if (!found) {
        throw Error("no-bloom retry budget exhausted for location " + id +
                    ", season " + std::to_string(year));
      }

      int label = *day;
      if (oracle.jitter_std > 0.0) {
        GaussStream jitter_rng(mix_seed(pair_seed, "jitter"));
        label += static_cast<int>(
            std::lround(oracle.jitter_std * jitter_rng.next_gauss()));
        label = std::clamp(label, 1, series.length());
      }

      Sample s{std::move(series), BloomRecord{id, loc.variety, year, label}};
      out.data.add_sample(std::move(s));
    }
  }
  return out;
}

inline Dataset gen_dataset(const ClimateSpec& climate, const OracleSpec& oracle,
                           int n_locations, const std::vector<int>& years) {
  return gen_dataset_with_truth(climate, oracle, n_locations, years).data;
}

}  // namespace pheno
