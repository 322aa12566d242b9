#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/datagen.hpp"
#include "pheno/domain.hpp"
#include "pheno/hybrid.hpp"
#include "pheno/mechanistic.hpp"
#include "pheno/parallel.hpp"

namespace pheno {

// Setting 1 splits years within each location, Setting 2 the same but models
// are grouped per variety, Setting 3 additionally holds out whole locations.
enum class Setting { TemporalPerLocation, TemporalPerVariety, Spatiotemporal };

inline const char* to_string(Setting s) {
  switch (s) {
    case Setting::TemporalPerLocation: return "temporal-per-location";
    case Setting::TemporalPerVariety: return "temporal-per-variety";
    case Setting::Spatiotemporal: return "spatiotemporal";
  }
  return "?";
}

inline Setting setting_from_string(const std::string& s) {
  if (s == "1" || s == "temporal" || s == "temporal-per-location") {
    return Setting::TemporalPerLocation;
  }
  if (s == "2" || s == "temporal-per-variety") return Setting::TemporalPerVariety;
  if (s == "3" || s == "spatiotemporal") return Setting::Spatiotemporal;
  throw ConfigError("unknown setting '" + s +
                    "' (expected 1, 2, 3 or their names)");
}

// The grouping each protocol trains under.
inline Grouping default_grouping(Setting s) {
  return s == Setting::TemporalPerLocation ? Grouping::PerLocation
                                           : Grouping::PerVariety;
}

struct SplitSpec {
  Setting setting = Setting::TemporalPerLocation;
  double train_year_fraction = 0.75;
  double holdout_location_fraction = 0.25;  // Setting 3 only
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train_year_fraction > 0.0 && train_year_fraction < 1.0)) {
      throw ConfigError("train year fraction must lie in (0, 1)");
    }
    if (!(holdout_location_fraction > 0.0 && holdout_location_fraction < 1.0)) {
      throw ConfigError("holdout location fraction must lie in (0, 1)");
    }
  }
};

namespace detail {

// Seeded Fisher-Yates; std::shuffle is implementation-defined.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::uint64_t seed) {
  GaussStream rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.next_below(i))]);
  }
}

inline Dataset subset(const Dataset& data, const std::function<bool(const Sample&)>& keep) {
  Dataset out;
  std::set<std::string> needed;
  for (const auto& s : data.samples()) {
    if (keep(s)) needed.insert(s.bloom.location_id);
  }
  for (const auto& loc : data.locations()) {
    if (needed.count(loc.location_id)) out.add_location(loc);
  }
  for (const auto& s : data.samples()) {
    if (keep(s)) out.add_sample(s);
  }
  return out;
}

}  // namespace detail

// Partitions season years (and, for Setting 3, locations) by seeded shuffle.
// The held-out count is max(1, round(fraction * n)).
inline std::pair<Dataset, Dataset> make_split(const Dataset& data,
                                              const SplitSpec& spec) {
  spec.validate();
  std::vector<int> years = data.distinct_years();
  if (years.size() < 2) throw Error("make_split: need at least 2 distinct years");

  const auto holdout_count = [](double fraction, std::size_t n) {
    const auto k = static_cast<std::size_t>(
        std::lround(fraction * static_cast<double>(n)));
    return std::max<std::size_t>(1, k);
  };

  const std::size_t n_test_years =
      holdout_count(1.0 - spec.train_year_fraction, years.size());
  if (n_test_years >= years.size()) {
    throw Error("make_split: no training years left");
  }
  detail::deterministic_shuffle(years, mix_seed(spec.seed, "years"));
  std::set<int> test_years(years.begin(),
                           years.begin() + static_cast<std::ptrdiff_t>(n_test_years));

  std::set<std::string> held_locations;
  if (spec.setting == Setting::Spatiotemporal) {
    std::vector<std::string> locs = data.distinct_location_ids();
    if (locs.size() < 2) {
      throw Error("make_split: setting 3 needs at least 2 locations");
    }
    const std::size_t n_held =
        holdout_count(spec.holdout_location_fraction, locs.size());
    if (n_held >= locs.size()) throw Error("make_split: no training locations left");
    detail::deterministic_shuffle(locs, mix_seed(spec.seed, "locations"));
    held_locations.insert(locs.begin(),
                          locs.begin() + static_cast<std::ptrdiff_t>(n_held));
  }

  Dataset train = detail::subset(data, [&](const Sample& s) {
    return !test_years.count(s.bloom.season_start_year) &&
           !held_locations.count(s.bloom.location_id);
  });
  // Setting 3 scores only the held-out locations; Settings 1 and 2 score all
  // locations on the held-out years.
  Dataset test = detail::subset(data, [&](const Sample& s) {
    if (!test_years.count(s.bloom.season_start_year)) return false;
    if (spec.setting == Setting::Spatiotemporal) {
      return held_locations.count(s.bloom.location_id) > 0;
    }
    return true;
  });
  if (train.empty() || test.empty()) {
    throw Error("make_split: a side of the split came out empty");
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Repeated-seed evaluation.

// A fitted model maps the test set to one integer bloom day per sample, in
// sample order.
using PredictFn = std::function<std::vector<int>(const Dataset&)>;
// A fitter builds a fitted model from a training set and a seed.
using FitFn = std::function<PredictFn(const Dataset&, std::uint64_t)>;

struct PredPair {
  std::string location_id;
  std::string variety;
  int season_start_year = 0;
  int observed = 0;
  int predicted = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double mae = 0.0;
  int n_test = 0;
  std::vector<PredPair> pairs;
};

struct EvalReport {
  std::string model;
  Setting setting = Setting::TemporalPerLocation;
  int n_seeds = 0;
  std::vector<SeedResult> per_seed;
  double mean_mae = 0.0;
  double se_mae = 0.0;  // sample std over per-seed MAEs / sqrt(n)
  std::vector<std::string> warnings;
};

// Aggregate mean and standard error over the successful seeds; failures are
// recorded per seed and surfaced as warnings, never dropped silently.
inline void finalize_report(EvalReport& report) {
  std::vector<double> maes;
  for (const auto& sr : report.per_seed) {
    if (sr.ok) {
      maes.push_back(sr.mae);
    } else {
      report.warnings.push_back("seed " + std::to_string(sr.seed) +
                                " failed: " + sr.error);
    }
  }
  if (maes.empty()) {
    report.warnings.push_back("all seeds failed; no aggregate MAE");
    report.mean_mae = std::numeric_limits<double>::quiet_NaN();
    report.se_mae = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double sum = 0.0;
  for (double m : maes) sum += m;
  report.mean_mae = sum / static_cast<double>(maes.size());
  if (maes.size() == 1) {
    report.se_mae = 0.0;
    return;
  }
  double ss = 0.0;
  for (double m : maes) ss += (m - report.mean_mae) * (m - report.mean_mae);
  const double sample_std = std::sqrt(ss / static_cast<double>(maes.size() - 1));
  report.se_mae = sample_std / std::sqrt(static_cast<double>(maes.size()));
}

inline EvalReport evaluate(const FitFn& fit, const Dataset& data,
                           const SplitSpec& spec, int n_seeds,
                           const std::string& model_name = "model",
                           int jobs = 1) {
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  EvalReport report;
  report.model = model_name;
  report.setting = spec.setting;
  report.n_seeds = n_seeds;
  report.per_seed.resize(static_cast<std::size_t>(n_seeds));

  parallel_for(static_cast<std::size_t>(n_seeds), jobs, [&](std::size_t i) {
    SeedResult& sr = report.per_seed[i];
    sr.seed = spec.seed + i;
    try {
      SplitSpec seed_spec = spec;
      seed_spec.seed = sr.seed;
      auto [train, test] = make_split(data, seed_spec);
      const PredictFn predict = fit(train, sr.seed);
      const std::vector<int> preds = predict(test);
      if (preds.size() != test.size()) {
        throw Error("fitted model returned " + std::to_string(preds.size()) +
                    " predictions for " + std::to_string(test.size()) +
                    " test samples");
      }
      double abs_sum = 0.0;
      sr.pairs.reserve(preds.size());
      for (std::size_t k = 0; k < preds.size(); ++k) {
        const Sample& s = test.samples()[k];
        abs_sum += std::abs(preds[k] - s.bloom.bloom_day);
        sr.pairs.push_back({s.bloom.location_id, test.variety_of(s),
                            s.bloom.season_start_year, s.bloom.bloom_day,
                            preds[k]});
      }
      sr.n_test = static_cast<int>(preds.size());
      sr.mae = abs_sum / static_cast<double>(preds.size());
      sr.ok = true;
    } catch (const std::exception& e) {
      sr.ok = false;
      sr.error = e.what();
    }
  });
  finalize_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// Standard fitters.

// Grid-search calibration; predictions fall back to season end for NoBloom.
inline FitFn mechanistic_fitter(ChillModelKind kind, GridSpec grid,
                                Grouping grouping, int jobs = 1,
                                HardPredictOptions opts = {}) {
  return [=](const Dataset& train, std::uint64_t) -> PredictFn {
    auto result = grid_search(train, kind, grid, grouping, jobs, opts);
    auto fits = std::make_shared<std::map<std::string, GroupFit>>(
        std::move(result.fits));
    return [=](const Dataset& test) {
      std::vector<int> preds;
      preds.reserve(test.size());
      for (const auto& s : test.samples()) {
        const auto& key = group_key(test, s, grouping);
        auto it = fits->find(key);
        if (it == fits->end()) {
          throw Error("no calibrated parameters for group '" + key + "'");
        }
        const auto day = predict_bloom_hard(s.series, it->second.params, kind, opts);
        preds.push_back(bloom_day_or_end(day, s.series.length()));
      }
      return preds;
    };
  };
}

inline FitFn hybrid_fitter(TrainConfig cfg, Grouping grouping,
                           bool ablation = false) {
  return [=](const Dataset& train, std::uint64_t seed) -> PredictFn {
    TrainResult result = ablation ? train_ablation_utah(train, seed, cfg, grouping)
                                  : pheno::train(train, seed, cfg, grouping);
    auto groups = std::make_shared<std::map<std::string, GroupTrain>>(
        std::move(result.groups));
    return [=](const Dataset& test) {
      std::vector<int> preds;
      preds.reserve(test.size());
      for (const auto& s : test.samples()) {
        const auto& key = group_key(test, s, grouping);
        auto it = groups->find(key);
        if (it == groups->end()) {
          throw Error("no trained parameters for group '" + key + "'");
        }
        preds.push_back(predict_bloom_soft(forward(s.series, it->second.params)));
      }
      return preds;
    };
  };
}

// Per-group constant predictor at the training median; reference point for
// "does the model beat a trivial statistic".
inline FitFn median_fitter(Grouping grouping) {
  return [=](const Dataset& train, std::uint64_t) -> PredictFn {
    auto medians = std::make_shared<std::map<std::string, int>>();
    std::map<std::string, std::vector<int>> days;
    for (const auto& s : train.samples()) {
      days[group_key(train, s, grouping)].push_back(s.bloom.bloom_day);
    }
    for (auto& [key, v] : days) {
      std::sort(v.begin(), v.end());
      (*medians)[key] = v[(v.size() - 1) / 2];  // lower median, integer day
    }
    return [=](const Dataset& test) {
      std::vector<int> preds;
      preds.reserve(test.size());
      for (const auto& s : test.samples()) {
        const auto& key = group_key(test, s, grouping);
        auto it = medians->find(key);
        if (it == medians->end()) {
          throw Error("no training median for group '" + key + "'");
        }
        preds.push_back(it->second);
      }
      return preds;
    };
  };
}

// ---------------------------------------------------------------------------
// Figure-data exports.

struct DensityRow {
  double temp_bin = 0.0;      // left edge, 0.5 C bins of the daily mean temp
  double response_bin = 0.0;  // left edge, 0.01 bins of the chill response
  double density = 0.0;       // normalized within the temp bin
};

inline std::vector<DensityRow> export_response_density(const HybridParams& params,
                                                       const Dataset& test) {
  if (test.empty()) throw Error("export_response_density: empty test set");
  params.validate();
  std::map<std::pair<long, long>, long> counts;
  std::map<long, long> totals;
  for (const auto& s : test.samples()) {
    for (int t = 1; t <= s.series.length(); ++t) {
      const auto hours = s.series.day(t);
      double mean = 0.0;
      for (double v : hours) mean += v;
      mean /= kHoursPerDay;
      const double r = params.daily_chill(hours);
      const long tb = static_cast<long>(std::floor(mean / 0.5));
      const long rb = static_cast<long>(std::floor(r / 0.01));
      counts[{tb, rb}] += 1;
      totals[tb] += 1;
    }
  }
  std::vector<DensityRow> rows;
  rows.reserve(counts.size());
  for (const auto& [key, n] : counts) {
    DensityRow row;
    row.temp_bin = static_cast<double>(key.first) * 0.5;
    row.response_bin = static_cast<double>(key.second) * 0.01;
    row.density = static_cast<double>(n) / static_cast<double>(totals.at(key.first));
    rows.push_back(row);
  }
  return rows;
}

struct ScatterRow {
  std::uint64_t seed = 0;
  std::string location_id;
  std::string variety;
  int season_start_year = 0;
  int observed = 0;
  int predicted = 0;
  int residual = 0;  // predicted - observed
};

inline std::vector<ScatterRow> export_scatter(const EvalReport& report) {
  std::vector<ScatterRow> rows;
  for (const auto& sr : report.per_seed) {
    if (!sr.ok) continue;
    for (const auto& p : sr.pairs) {
      rows.push_back({sr.seed, p.location_id, p.variety, p.season_start_year,
                      p.observed, p.predicted, p.predicted - p.observed});
    }
  }
  return rows;
}

}  // namespace pheno
