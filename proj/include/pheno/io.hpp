#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pheno/common.hpp"
#include "pheno/datagen.hpp"
#include "pheno/domain.hpp"
#include "pheno/eval.hpp"
#include "pheno/hybrid.hpp"
#include "pheno/mechanistic.hpp"

namespace pheno {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Plain-file helpers.

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error("read failure on " + path);
  return std::move(buf).str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open file for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw Error("write failure on " + path);
}

// ---------------------------------------------------------------------------
// CSV primitives. Quoted fields with doubled-quote escapes are accepted on
// input and produced on output only when a field needs them.

namespace csv {

inline std::vector<std::string> split_line(std::string_view line, long row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw IngestError("row " + std::to_string(row) + ": unterminated quote");
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace csv

// Shortest round-trip decimal form; keeps every emitted file byte-stable.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IngestError(context + ": not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline long parse_long(std::string_view s, const std::string& context) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IngestError(context + ": not an integer: '" + std::string(s) + "'");
  }
  return v;
}

// Splits file content into lines; accepts \n and \r\n, ignores one trailing
// blank line.
inline std::vector<std::string> split_lines(std::string_view content) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < content.size()) lines.emplace_back(content.substr(start));
      break;
    }
    std::string_view line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Ingestion. temps.csv: location_id,date,h00..h23 (hourly degrees C).
// blooms.csv: location_id,latitude,longitude,variety,bloom_date.

inline const std::vector<std::string>& temps_header() {
  static const std::vector<std::string> h = [] {
    std::vector<std::string> v{"location_id", "date"};
    for (int i = 0; i < kHoursPerDay; ++i) {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "h%02d", i);
      v.emplace_back(buf);
    }
    return v;
  }();
  return h;
}

inline const std::vector<std::string>& blooms_header() {
  static const std::vector<std::string> h{"location_id", "latitude", "longitude",
                                          "variety", "bloom_date"};
  return h;
}

namespace detail {

inline void require_header(const std::vector<std::string>& got,
                           const std::vector<std::string>& want,
                           const std::string& path) {
  if (got != want) {
    std::string expected;
    for (const auto& f : want) {
      if (!expected.empty()) expected += ",";
      expected += f;
    }
    throw IngestError(path + ": bad header; expected '" + expected + "'");
  }
}

struct TempsTable {
  // location -> day serial -> 24 hourly values
  std::map<std::string, std::map<std::int64_t, std::array<double, kHoursPerDay>>> days;
};

inline TempsTable read_temps(const std::string& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty()) throw IngestError(path + ": empty file");
  require_header(csv::split_line(lines[0], 1), temps_header(), path);

  TempsTable table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const long row = static_cast<long>(i) + 1;
    const std::string ctx = path + " row " + std::to_string(row);
    const auto fields = csv::split_line(lines[i], row);
    if (fields.size() != temps_header().size()) {
      throw IngestError(ctx + ": expected " +
                        std::to_string(temps_header().size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw IngestError(ctx + ": empty location_id");
    CivilDate date;
    try {
      date = parse_date(fields[1]);
    } catch (const Error& e) {
      throw IngestError(ctx + ": " + e.what());
    }
    std::array<double, kHoursPerDay> temps{};
    for (int h = 0; h < kHoursPerDay; ++h) {
      const double v = parse_double(fields[2 + h], ctx + " hour " + std::to_string(h));
      if (!(v >= -60.0 && v <= 60.0)) {
        throw IngestError(ctx + ": temperature " + fields[2 + h] +
                          " C outside plausible range [-60, 60]");
      }
      temps[h] = v;
    }
    const auto [it, inserted] =
        table.days[fields[0]].emplace(days_from_civil(date), temps);
    if (!inserted) {
      throw IngestError(ctx + ": duplicate temperatures for location " +
                        fields[0] + " on " + fields[1]);
    }
  }
  return table;
}

inline SeasonSeries assemble_season(const TempsTable& temps,
                                    const std::string& location_id,
                                    int season_start_year,
                                    const std::string& bloom_ctx) {
  const auto loc_it = temps.days.find(location_id);
  if (loc_it == temps.days.end()) {
    throw IngestError(bloom_ctx + ": no temperatures for location " + location_id);
  }
  SeasonSeries series(season_start_year);
  const std::int64_t start = season_start_serial(season_start_year);
  for (int t = 1; t <= kSeasonLength; ++t) {
    const auto day_it = loc_it->second.find(start + t - 1);
    if (day_it == loc_it->second.end()) {
      throw IngestError(bloom_ctx + ": missing temperatures for location " +
                        location_id + " on " +
                        format_date(civil_from_days(start + t - 1)) +
                        " (season day " + std::to_string(t) + ")");
    }
    for (int h = 0; h < kHoursPerDay; ++h) series.set(t, h, day_it->second[h]);
  }
  return series;
}

}  // namespace detail

// Joins the two files into a validated Dataset. A bloom's season is the one
// that started October 1 of the previous calendar year; October-December
// bloom dates are rejected as outside the modeled chill-then-force cycle.
inline Dataset ingest(const std::string& temps_path, const std::string& blooms_path) {
  const detail::TempsTable temps = detail::read_temps(temps_path);
  const auto lines = split_lines(read_file(blooms_path));
  if (lines.empty()) throw IngestError(blooms_path + ": empty file");
  detail::require_header(csv::split_line(lines[0], 1), blooms_header(), blooms_path);

  Dataset data;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const long row = static_cast<long>(i) + 1;
    const std::string ctx = blooms_path + " row " + std::to_string(row);
    const auto fields = csv::split_line(lines[i], row);
    if (fields.size() != blooms_header().size()) {
      throw IngestError(ctx + ": expected 5 fields, got " +
                        std::to_string(fields.size()));
    }
    Location loc;
    loc.location_id = fields[0];
    loc.latitude = parse_double(fields[1], ctx + " latitude");
    loc.longitude = parse_double(fields[2], ctx + " longitude");
    loc.variety = fields[3];
    CivilDate bloom_date;
    try {
      bloom_date = parse_date(fields[4]);
      loc.validate();
    } catch (const Error& e) {
      throw IngestError(ctx + ": " + e.what());
    }
    if (bloom_date.month >= 10) {
      throw IngestError(ctx + ": bloom date " + fields[4] +
                        " falls before January of the season; not supported");
    }

    if (data.has_location(loc.location_id)) {
      const Location& prev = data.location(loc.location_id);
      if (prev.latitude != loc.latitude || prev.longitude != loc.longitude ||
          prev.variety != loc.variety) {
        throw IngestError(ctx + ": location " + loc.location_id +
                          " conflicts with an earlier row (latitude, longitude "
                          "and variety must match)");
      }
    } else {
      data.add_location(loc);
    }

    const int season_start_year = bloom_date.year - 1;
    Sample s{detail::assemble_season(temps, loc.location_id, season_start_year, ctx),
             BloomRecord{loc.location_id, loc.variety, season_start_year, 0}};
    try {
      s.bloom.bloom_day = doy_to_season_index(bloom_date, season_start_year);
      s.series.validate(true);
      data.add_sample(std::move(s));
    } catch (const IngestError&) {
      throw;
    } catch (const Error& e) {
      throw IngestError(ctx + ": " + e.what());
    }
  }
  if (data.empty()) throw IngestError(blooms_path + ": no bloom records");
  return data;
}

// Every complete 274-day season window found in a temps file; the unit
// predict operates on.
struct LocationSeason {
  std::string location_id;
  SeasonSeries series;
};

inline std::vector<LocationSeason> load_seasons(const std::string& temps_path) {
  const detail::TempsTable temps = detail::read_temps(temps_path);
  std::vector<LocationSeason> out;
  for (const auto& [loc, days] : temps.days) {
    if (days.empty()) continue;
    const int first_year = civil_from_days(days.begin()->first).year - 1;
    const int last_year = civil_from_days(days.rbegin()->first).year;
    for (int y = first_year; y <= last_year; ++y) {
      const std::int64_t start = season_start_serial(y);
      bool complete = true;
      for (int t = 1; t <= kSeasonLength && complete; ++t) {
        complete = days.count(start + t - 1) > 0;
      }
      if (!complete) continue;
      SeasonSeries series(y);
      for (int t = 1; t <= kSeasonLength; ++t) {
        const auto& hours = days.at(start + t - 1);
        for (int h = 0; h < kHoursPerDay; ++h) series.set(t, h, hours[h]);
      }
      out.push_back({loc, std::move(series)});
    }
  }
  if (out.empty()) {
    throw IngestError(temps_path + ": no complete " +
                      std::to_string(kSeasonLength) + "-day season windows");
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV writers (inverse of ingest; byte-stable).

inline std::string temps_to_csv(const Dataset& data) {
  std::string out;
  for (std::size_t i = 0; i < temps_header().size(); ++i) {
    if (i) out += ",";
    out += temps_header()[i];
  }
  out += "\n";
  for (const auto& s : data.samples()) {
    const std::int64_t start = season_start_serial(s.bloom.season_start_year);
    for (int t = 1; t <= s.series.length(); ++t) {
      out += csv::escape(s.bloom.location_id);
      out += ",";
      out += format_date(civil_from_days(start + t - 1));
      for (int h = 0; h < kHoursPerDay; ++h) {
        out += ",";
        out += format_double(s.series.at(t, h));
      }
      out += "\n";
    }
  }
  return out;
}

inline std::string blooms_to_csv(const Dataset& data) {
  std::string out = "location_id,latitude,longitude,variety,bloom_date\n";
  for (const auto& s : data.samples()) {
    const Location& loc = data.location(s.bloom.location_id);
    out += csv::escape(loc.location_id);
    out += ",";
    out += format_double(loc.latitude);
    out += ",";
    out += format_double(loc.longitude);
    out += ",";
    out += csv::escape(loc.variety);
    out += ",";
    out += format_date(
        season_index_to_date(s.bloom.bloom_day, s.bloom.season_start_year));
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON serialization.

inline json to_json(const MechanisticParams& p) {
  return json{{"chill_req", p.chill_req},
              {"forcing_req", p.forcing_req},
              {"base_temp", p.base_temp}};
}

inline MechanisticParams mechanistic_params_from_json(const json& j) {
  MechanisticParams p;
  p.chill_req = j.at("chill_req").get<double>();
  p.forcing_req = j.at("forcing_req").get<double>();
  p.base_temp = j.at("base_temp").get<double>();
  return p;
}

inline json calibration_to_json(const GridSearchResult& result, ChillModelKind kind,
                                Grouping grouping,
                                const HardPredictOptions& opts) {
  json groups = json::object();
  for (const auto& [key, fit] : result.fits) {
    json g = to_json(fit.params);
    g["train_mse"] = fit.train_mse;
    g["n_samples"] = fit.n_samples;
    groups[key] = g;
  }
  return json{{"model", to_string(kind)},
              {"grouping", to_string(grouping)},
              {"floor_negative_chill", opts.floor_negative_chill},
              {"groups", groups},
              {"warnings", result.warnings}};
}

struct MechanisticModelFile {
  ChillModelKind kind = ChillModelKind::Utah;
  Grouping grouping = Grouping::PerLocation;
  HardPredictOptions opts;
  std::map<std::string, MechanisticParams> groups;
};

inline MechanisticModelFile mechanistic_model_from_json(const json& j) {
  MechanisticModelFile f;
  f.kind = chill_model_from_string(j.at("model").get<std::string>());
  f.grouping = grouping_from_string(j.at("grouping").get<std::string>());
  f.opts.floor_negative_chill = j.at("floor_negative_chill").get<bool>();
  for (const auto& [key, g] : j.at("groups").items()) {
    f.groups.emplace(key, mechanistic_params_from_json(g));
  }
  return f;
}

inline json hybrid_params_to_json(const HybridParams& p) {
  json j{{"chill_source", to_string(p.chill_source)},
         {"chill_inflection", p.chill_inflection},
         {"forcing_inflection", p.forcing_inflection},
         {"base_temp", p.base_temp},
         {"forcing_scale", p.forcing_scale},
         {"chill_slope", kChillSlope},
         {"normalize_mlp_input", p.normalize_mlp_input}};
  if (p.chill_source == ChillSource::Mlp) {
    j["layers"] = json::array({MlpChill::kIn, MlpChill::kHidden, MlpChill::kHidden, 1});
    j["w1"] = std::vector<double>(p.mlp.w1().begin(), p.mlp.w1().end());
    j["b1"] = std::vector<double>(p.mlp.b1().begin(), p.mlp.b1().end());
    j["w2"] = std::vector<double>(p.mlp.w2().begin(), p.mlp.w2().end());
    j["b2"] = std::vector<double>(p.mlp.b2().begin(), p.mlp.b2().end());
    j["w3"] = std::vector<double>(p.mlp.w3().begin(), p.mlp.w3().end());
    j["b3"] = p.mlp.b3();
  }
  return j;
}

inline HybridParams hybrid_params_from_json(const json& j) {
  HybridParams p;
  p.chill_source = chill_source_from_string(j.at("chill_source").get<std::string>());
  p.chill_inflection = j.at("chill_inflection").get<double>();
  p.forcing_inflection = j.at("forcing_inflection").get<double>();
  p.base_temp = j.at("base_temp").get<double>();
  p.forcing_scale = j.at("forcing_scale").get<double>();
  p.normalize_mlp_input = j.value("normalize_mlp_input", false);
  if (p.chill_source == ChillSource::Mlp) {
    const auto layers = j.at("layers").get<std::vector<int>>();
    const std::vector<int> expected{MlpChill::kIn, MlpChill::kHidden,
                                    MlpChill::kHidden, 1};
    if (layers != expected) throw Error("hybrid model file: unsupported layer shape");
    auto load = [&](const char* key, std::span<const double> dst_span,
                    std::size_t offset, HybridParams& out) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != dst_span.size()) {
        throw Error(std::string("hybrid model file: bad length for ") + key);
      }
      std::copy(v.begin(), v.end(), out.mlp.theta.begin() +
                                        static_cast<std::ptrdiff_t>(offset));
    };
    load("w1", p.mlp.w1(), 0, p);
    load("b1", p.mlp.b1(), MlpChill::kW1, p);
    load("w2", p.mlp.w2(), MlpChill::kW1 + MlpChill::kB1, p);
    load("b2", p.mlp.b2(), MlpChill::kW1 + MlpChill::kB1 + MlpChill::kW2, p);
    load("w3", p.mlp.w3(),
         MlpChill::kW1 + MlpChill::kB1 + MlpChill::kW2 + MlpChill::kB2, p);
    p.mlp.theta[MlpChill::kThetaSize - 1] = j.at("b3").get<double>();
  }
  p.validate();
  return p;
}

inline json train_result_to_json(const TrainResult& result, Grouping grouping,
                                 std::uint64_t seed, std::uint64_t config_hash,
                                 const std::string& model_name) {
  json groups = json::object();
  for (const auto& [key, g] : result.groups) {
    json gj = hybrid_params_to_json(g.params);
    gj["final_loss"] = g.final_loss;
    gj["n_samples"] = g.n_samples;
    groups[key] = gj;
  }
  return json{{"model", model_name},
              {"grouping", to_string(grouping)},
              {"seed", seed},
              {"config_hash", config_hash},
              {"groups", groups},
              {"warnings", result.warnings}};
}

struct HybridModelFile {
  std::string model;
  Grouping grouping = Grouping::PerLocation;
  std::uint64_t seed = 0;
  std::map<std::string, HybridParams> groups;
};

inline HybridModelFile hybrid_model_from_json(const json& j) {
  HybridModelFile f;
  f.model = j.at("model").get<std::string>();
  f.grouping = grouping_from_string(j.at("grouping").get<std::string>());
  f.seed = j.value("seed", std::uint64_t{0});
  for (const auto& [key, g] : j.at("groups").items()) {
    f.groups.emplace(key, hybrid_params_from_json(g));
  }
  if (f.groups.empty()) throw Error("hybrid model file: no groups");
  return f;
}

inline std::string loss_trace_to_csv(const TrainResult& result) {
  std::string out = "group,epoch,mean_nll,lr\n";
  for (const auto& [key, g] : result.groups) {
    for (const auto& row : g.trace) {
      out += csv::escape(key);
      out += ",";
      out += std::to_string(row.epoch);
      out += ",";
      out += format_double(row.mean_nll);
      out += ",";
      out += format_double(row.lr);
      out += "\n";
    }
  }
  return out;
}

inline json report_to_json(const EvalReport& report) {
  json per_seed = json::array();
  for (const auto& sr : report.per_seed) {
    json s{{"seed", sr.seed}, {"ok", sr.ok}};
    if (sr.ok) {
      s["mae"] = sr.mae;
      s["n_test"] = sr.n_test;
    } else {
      s["error"] = sr.error;
    }
    per_seed.push_back(s);
  }
  json j{{"model", report.model},
         {"setting", to_string(report.setting)},
         {"n_seeds", report.n_seeds},
         {"per_seed", per_seed},
         {"warnings", report.warnings}};
  if (std::isfinite(report.mean_mae)) {
    j["mean_mae"] = report.mean_mae;
    j["se_mae"] = report.se_mae;
  } else {
    j["mean_mae"] = nullptr;
    j["se_mae"] = nullptr;
  }
  return j;
}

inline json truth_to_json(const ClimateSpec& climate, const OracleSpec& oracle,
                          const std::vector<LocationTruth>& truth) {
  json locations = json::object();
  for (const auto& lt : truth) {
    json l = to_json(lt.params);
    l["climate_offset"] = lt.climate_offset;
    locations[lt.location_id] = l;
  }
  return json{{"climate",
               {{"mean_temp", climate.mean_temp},
                {"seasonal_amplitude", climate.seasonal_amplitude},
                {"diurnal_amplitude", climate.diurnal_amplitude},
                {"daily_noise_std", climate.daily_noise_std},
                {"hourly_noise_std", climate.hourly_noise_std},
                {"location_offset_range", climate.location_offset_range},
                {"seed", climate.seed}}},
              {"oracle",
               {{"model", to_string(oracle.kind)},
                {"params", to_json(oracle.params)},
                {"jitter_std", oracle.jitter_std}}},
              {"locations", locations}};
}

inline std::string density_to_csv(const std::vector<DensityRow>& rows) {
  std::string out = "mean_daily_temp_bin,response_value,density\n";
  for (const auto& r : rows) {
    out += format_double(r.temp_bin);
    out += ",";
    out += format_double(r.response_bin);
    out += ",";
    out += format_double(r.density);
    out += "\n";
  }
  return out;
}

inline std::string scatter_to_csv(const std::vector<ScatterRow>& rows) {
  std::string out =
      "seed,location_id,variety,season_start_year,observed_day,predicted_day,"
      "residual\n";
  for (const auto& r : rows) {
    out += std::to_string(r.seed);
    out += ",";
    out += csv::escape(r.location_id);
    out += ",";
    out += csv::escape(r.variety);
    out += ",";
    out += std::to_string(r.season_start_year);
    out += ",";
    out += std::to_string(r.observed);
    out += ",";
    out += std::to_string(r.predicted);
    out += ",";
    out += std::to_string(r.residual);
    out += "\n";
  }
  return out;
}

}  // namespace pheno
