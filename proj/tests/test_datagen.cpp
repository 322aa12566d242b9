#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/datagen.hpp"
#include "pheno/domain.hpp"
#include "pheno/mechanistic.hpp"

using namespace pheno;

TEST_CASE("gauss stream is deterministic and well scaled", "[datagen]") {
  GaussStream a(31), b(31), c(32);
  bool identical = true, all_in_range = true;
  for (int i = 0; i < 200; ++i) {
    const double x = a.next_u01();
    if (x != b.next_u01()) identical = false;
    if (!(x > 0.0 && x <= 1.0)) all_in_range = false;
  }
  CHECK(identical);
  CHECK(all_in_range);
  CHECK(a.next_gauss() != c.next_gauss());

  GaussStream g(7);
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = g.next_gauss();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(var == Catch::Approx(1.0).margin(0.05));

  GaussStream h(9);
  for (int i = 0; i < 100; ++i) CHECK(h.next_below(7) < 7);
}

TEST_CASE("day-of-year mapping starts october first", "[datagen]") {
  CHECK(datagen_day_of_year(1) == 274);
  CHECK(datagen_day_of_year(92) == 365);  // december 31
  CHECK(datagen_day_of_year(93) == 1);    // january 1
  CHECK(datagen_day_of_year(274) == 182); // july 1
}

TEST_CASE("noise-free climate collapses to its closed form", "[datagen]") {
  ClimateSpec spec;
  spec.mean_temp = 9.0;
  spec.seasonal_amplitude = 0.0;
  spec.diurnal_amplitude = 0.0;
  spec.daily_noise_std = 0.0;
  spec.hourly_noise_std = 0.0;

  const SeasonSeries ss = gen_season(spec, 1.5, 2000, 42, 30);
  for (int t = 1; t <= 30; ++t) {
    for (int h = 0; h < kHoursPerDay; ++h) {
      CHECK(ss.at(t, h) == 10.5);
    }
  }

  // With only the deterministic terms, each cell follows the documented
  // cosine structure exactly.
  spec.seasonal_amplitude = 10.0;
  spec.diurnal_amplitude = 4.0;
  const SeasonSeries sd = gen_season(spec, 0.0, 2000, 42, 10);
  for (int t = 1; t <= 10; ++t) {
    const int doy = datagen_day_of_year(t);
    for (int h = 0; h < kHoursPerDay; ++h) {
      const double expect =
          9.0 + 10.0 * std::cos(2.0 * kPi * (doy - 196) / 365.0) -
          4.0 * std::cos(2.0 * kPi * (h - 14) / 24.0);
      CHECK(sd.at(t, h) == Catch::Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("season generation is seed deterministic", "[datagen]") {
  ClimateSpec spec;
  const SeasonSeries a = gen_season(spec, 0.3, 2001, 99, 60);
  const SeasonSeries b = gen_season(spec, 0.3, 2001, 99, 60);
  const SeasonSeries c = gen_season(spec, 0.3, 2001, 100, 60);
  bool same = true, differs = false;
  for (int t = 1; t <= 60; ++t) {
    for (int h = 0; h < kHoursPerDay; ++h) {
      if (a.at(t, h) != b.at(t, h)) same = false;
      if (a.at(t, h) != c.at(t, h)) differs = true;
    }
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("ensemble statistics match the climate spec", "[datagen]") {
  ClimateSpec spec;
  spec.mean_temp = 8.0;
  spec.daily_noise_std = 2.0;
  spec.hourly_noise_std = 0.5;

  // Fixed cell (day 20, hour 3): across independent seasons its value is
  // Gaussian around the deterministic part with std sqrt(2^2 + 0.5^2).
  const int t = 20, h = 3;
  const int doy = datagen_day_of_year(t);
  const double det = 8.0 + 10.0 * std::cos(2.0 * kPi * (doy - 196) / 365.0) -
                     4.0 * std::cos(2.0 * kPi * (h - 14) / 24.0);
  const double sigma = std::sqrt(4.0 + 0.25);

  const int n = 1000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const SeasonSeries ss = gen_season(spec, 0.0, 2000, 5000 + i, 25);
    const double x = ss.at(t, h);
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  CHECK(std::abs(mean - det) < 3.0 * sigma / std::sqrt(static_cast<double>(n)));
  CHECK(sd == Catch::Approx(sigma).epsilon(0.15));
}

TEST_CASE("jitter-free labels reproduce the oracle exactly", "[datagen]") {
  ClimateSpec climate;
  climate.mean_temp = 8.0;
  climate.seed = 11;
  OracleSpec oracle;
  oracle.kind = ChillModelKind::Utah;
  oracle.params = {700.0, 1800.0, 4.0};
  oracle.jitter_std = 0.0;

  const GenResult gen =
      gen_dataset_with_truth(climate, oracle, 3, {2000, 2001, 2002, 2003});
  REQUIRE(gen.data.size() == 12);
  REQUIRE(gen.truth.size() == 3);

  std::map<std::string, MechanisticParams> true_params;
  for (const auto& lt : gen.truth) true_params[lt.location_id] = lt.params;

  for (const Sample& s : gen.data.samples()) {
    const auto day =
        predict_bloom_hard(s.series, true_params.at(s.bloom.location_id), oracle.kind);
    REQUIRE(day.has_value());
    CHECK(*day == s.bloom.bloom_day);
  }

  // Homogeneous oracle: every location's truth carries the oracle parameters.
  for (const auto& lt : gen.truth) {
    CHECK(lt.params == oracle.params);
    CHECK(std::abs(lt.climate_offset) <= climate.location_offset_range);
  }
}

TEST_CASE("generation is reproducible end to end", "[datagen]") {
  ClimateSpec climate;
  climate.mean_temp = 8.5;
  climate.seed = 77;
  OracleSpec oracle;
  oracle.params = {600.0, 2000.0, 4.0};
  oracle.jitter_std = 1.0;

  const GenResult a = gen_dataset_with_truth(climate, oracle, 2, {2000, 2001});
  const GenResult b = gen_dataset_with_truth(climate, oracle, 2, {2000, 2001});
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const Sample& sa = a.data.samples()[i];
    const Sample& sb = b.data.samples()[i];
    CHECK(sa.bloom.bloom_day == sb.bloom.bloom_day);
    bool same = true;
    for (int t = 1; t <= sa.series.length() && same; ++t) {
      for (int h = 0; h < kHoursPerDay; ++h) {
        if (sa.series.at(t, h) != sb.series.at(t, h)) {
          same = false;
          break;
        }
      }
    }
    CHECK(same);
  }

  climate.seed = 78;
  const GenResult c = gen_dataset_with_truth(climate, oracle, 2, {2000, 2001});
  bool label_differs = false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (a.data.samples()[i].bloom.bloom_day != c.data.samples()[i].bloom.bloom_day) {
      label_differs = true;
    }
  }
  CHECK(label_differs);
}

TEST_CASE("single location and year produce one sample", "[datagen]") {
  ClimateSpec climate;
  climate.mean_temp = 8.0;
  OracleSpec oracle;
  oracle.params = {500.0, 1500.0, 4.0};
  const Dataset d = gen_dataset(climate, oracle, 1, {2005});
  REQUIRE(d.size() == 1);
  CHECK(d.samples()[0].bloom.location_id == "L1");
  CHECK(d.samples()[0].bloom.season_start_year == 2005);
  CHECK(d.locations().size() == 1);
}

TEST_CASE("location ids are zero padded to a stable width", "[datagen]") {
  CHECK(datagen_location_id(0, 1) == "L1");
  CHECK(datagen_location_id(0, 9) == "L1");
  CHECK(datagen_location_id(0, 10) == "L01");
  CHECK(datagen_location_id(9, 10) == "L10");
  CHECK(datagen_location_id(0, 100) == "L001");
  CHECK(datagen_location_id(99, 100) == "L100");
  CHECK(datagen_location_id(5, 25) == "L06");
}

TEST_CASE("warmer climates bloom earlier when chill is abundant", "[datagen]") {
  OracleSpec oracle;
  oracle.kind = ChillModelKind::Utah;
  oracle.params = {300.0, 2500.0, 4.0};

  auto median_bloom = [&](double mean_temp) {
    ClimateSpec climate;
    climate.mean_temp = mean_temp;
    climate.location_offset_range = 0.5;
    climate.seed = 101;
    std::vector<int> years;
    for (int y = 1900; y < 1900 + 40; ++y) years.push_back(y);
    const Dataset d = gen_dataset(climate, oracle, 5, years);
    std::vector<int> days;
    for (const Sample& s : d.samples()) days.push_back(s.bloom.bloom_day);
    std::sort(days.begin(), days.end());
    return days[days.size() / 2];
  };

  const int cold = median_bloom(6.0);
  const int mid = median_bloom(8.0);
  const int warm = median_bloom(10.0);
  CHECK(cold > mid);
  CHECK(mid > warm);
}

TEST_CASE("grid search recovers the generating oracle exactly", "[datagen]") {
  ClimateSpec climate;
  climate.mean_temp = 8.0;
  climate.seed = 21;
  OracleSpec oracle;
  oracle.kind = ChillModelKind::Utah;
  oracle.params = {700.0, 1800.0, 4.0};

  const Dataset d = gen_dataset(climate, oracle, 2, {2000, 2001, 2002});

  GridSpec grid;
  grid.chill_req = {500.0, 700.0, 900.0};
  grid.forcing_req = {1200.0, 1800.0, 2400.0};
  grid.base_temp = {2.0, 4.0, 6.0};
  // Single variety pools every sample into one group.
  const GridSearchResult r =
      grid_search(d, ChillModelKind::Utah, grid, Grouping::PerVariety);
  REQUIRE(r.fits.count("V1") == 1);
  CHECK(r.fits.at("V1").params == oracle.params);
  CHECK(r.fits.at("V1").train_mse == 0.0);
}

TEST_CASE("heterogeneous slopes tilt the per-location truth", "[datagen]") {
  ClimateSpec climate;
  climate.mean_temp = 8.0;
  climate.location_offset_range = 2.0;
  climate.seed = 13;
  OracleSpec oracle;
  oracle.params = {700.0, 1800.0, 4.0};

  HeteroSpec hetero;
  CHECK(hetero.homogeneous());
  hetero.chill_req_per_degc = 50.0;
  hetero.forcing_req_per_degc = -100.0;
  CHECK_FALSE(hetero.homogeneous());

  const GenResult gen =
      gen_dataset_with_truth(climate, oracle, 4, {2000, 2001}, hetero);
  bool some_offset_nonzero = false;
  for (const auto& lt : gen.truth) {
    CHECK(lt.params.chill_req ==
          Catch::Approx(700.0 + 50.0 * lt.climate_offset).margin(1e-12));
    CHECK(lt.params.forcing_req ==
          Catch::Approx(1800.0 - 100.0 * lt.climate_offset).margin(1e-12));
    CHECK(lt.params.base_temp == 4.0);
    if (lt.climate_offset != 0.0) some_offset_nonzero = true;
  }
  CHECK(some_offset_nonzero);
}

TEST_CASE("no-bloom seasons are regenerated colder", "[datagen]") {
  // A warm, noise-free climate accumulates no Utah chill at first; the
  // retry loop cools it until the oracle blooms.
  ClimateSpec climate;
  climate.mean_temp = 16.0;
  climate.seasonal_amplitude = 0.0;
  climate.diurnal_amplitude = 0.0;
  climate.daily_noise_std = 0.0;
  climate.hourly_noise_std = 0.0;
  climate.location_offset_range = 0.0;
  OracleSpec oracle;
  oracle.kind = ChillModelKind::Utah;
  oracle.params = {100.0, 100.0, 4.0};

  const GenResult gen = gen_dataset_with_truth(climate, oracle, 1, {2000});
  REQUIRE(gen.data.size() == 1);
  const Sample& s = gen.data.samples()[0];
  // The stored series is colder than the spec says: a retry happened.
  CHECK(s.series.at(1, 0) < 15.0);
  const auto day = predict_bloom_hard(s.series, oracle.params, oracle.kind);
  REQUIRE(day.has_value());
  CHECK(*day == s.bloom.bloom_day);
}

TEST_CASE("retry budget exhaustion is reported", "[datagen]") {
  ClimateSpec climate;
  climate.mean_temp = 50.0;  // even 8 retries colder stays chill-free
  climate.seasonal_amplitude = 0.0;
  climate.daily_noise_std = 0.0;
  climate.hourly_noise_std = 0.0;
  climate.location_offset_range = 0.0;
  OracleSpec oracle;
  oracle.kind = ChillModelKind::Utah;
  oracle.params = {100.0, 100.0, 4.0};

  CHECK_THROWS_WITH(gen_dataset_with_truth(climate, oracle, 1, {2000}),
                    Catch::Matchers::ContainsSubstring("retry budget") &&
                        Catch::Matchers::ContainsSubstring("L1"));
}

TEST_CASE("spec validation rejects bad inputs", "[datagen]") {
  ClimateSpec climate;
  climate.daily_noise_std = -1.0;
  OracleSpec oracle;
  oracle.params = {500.0, 1500.0, 4.0};
  CHECK_THROWS_AS(gen_dataset(climate, oracle, 1, {2000}), ConfigError);

  climate.daily_noise_std = 2.0;
  oracle.jitter_std = -0.5;
  CHECK_THROWS_AS(gen_dataset(climate, oracle, 1, {2000}), ConfigError);

  oracle.jitter_std = 0.0;
  CHECK_THROWS_AS(gen_dataset(climate, oracle, 0, {2000}), ConfigError);
  CHECK_THROWS_AS(gen_dataset(climate, oracle, 1, {}), ConfigError);
}

TEST_CASE("jittered labels stay within the season", "[datagen]") {
  ClimateSpec climate;
  climate.mean_temp = 8.0;
  climate.seed = 3;
  OracleSpec oracle;
  oracle.params = {700.0, 1800.0, 4.0};
  oracle.jitter_std = 30.0;  // extreme jitter exercises the clamp

  const GenResult gen = gen_dataset_with_truth(climate, oracle, 3, {2000, 2001});
  for (const Sample& s : gen.data.samples()) {
    CHECK(s.bloom.bloom_day >= 1);
    CHECK(s.bloom.bloom_day <= s.series.length());
  }

  // Jitter moves at least one label off the clean oracle day.
  OracleSpec clean = oracle;
  clean.jitter_std = 0.0;
  const GenResult ref = gen_dataset_with_truth(climate, clean, 3, {2000, 2001});
  bool moved = false;
  for (std::size_t i = 0; i < gen.data.size(); ++i) {
    if (gen.data.samples()[i].bloom.bloom_day != ref.data.samples()[i].bloom.bloom_day) {
      moved = true;
    }
  }
  CHECK(moved);
}
