#pragma once

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pheno/io.hpp"
#include "pheno/pheno.hpp"

namespace pheno::cli {

// ---------------------------------------------------------------------------
// Run directory: every subcommand writes its outputs under one directory,
// echoes its effective configuration, and finishes with a manifest hashing
// every artifact. The manifest is the only file carrying a timestamp.

class RunDir {
 public:
  explicit RunDir(const std::string& path) : dir_(path) {
    if (path.empty()) throw ConfigError("out: output directory not set");
    std::filesystem::create_directories(dir_);
  }

  void write(const std::string& name, std::string_view content) {
    write_file((dir_ / name).string(), content);
    hashes_[name] = fnv1a64_bytes(content.data(), content.size());
  }

  void write_json(const std::string& name, const json& j) {
    write(name, j.dump(2) + "\n");
  }

  void finalize(const json& effective_config,
                const std::vector<std::string>& argv) {
    write_json("config.json", effective_config);
    json artifacts = json::object();
    for (const auto& [name, hash] : hashes_) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                    static_cast<unsigned long long>(hash));
      artifacts[name] = buf;
    }
    json manifest{{"created_at", utc_now()},
                  {"command", argv},
                  {"artifacts", artifacts}};
    write_file((dir_ / "manifest.json").string(), manifest.dump(2) + "\n");
  }

  const std::filesystem::path& path() const { return dir_; }

 private:
  static std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path dir_;
  std::map<std::string, std::uint64_t> hashes_;
};

namespace detail {

// Flat-JSON config support: keys mirror long option names; values from the
// file are injected before the user's flags, which therefore override them.
inline std::vector<std::string> inject_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  if (config_path.empty() || args.empty()) return args;

  json j;
  try {
    j = json::parse(read_file(config_path));
  } catch (const json::exception& e) {
    throw ConfigError("config: cannot parse " + config_path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: " + config_path + " must hold a flat JSON object");

  std::vector<std::string> injected;
  injected.push_back(args[0]);  // subcommand name stays first
  for (const auto& [key, value] : j.items()) {
    if (value.is_null()) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number()) {
      text = value.dump();
    } else {
      throw ConfigError("config: key '" + key + "' must be a scalar");
    }
    injected.push_back("--" + key + "=" + text);
  }
  injected.insert(injected.end(), args.begin() + 1, args.end());
  return injected;
}

inline std::vector<int> parse_years(const std::string& spec) {
  // Malformed tokens are usage errors, not ingest failures.
  const auto to_year = [](const std::string& tok) {
    try {
      return static_cast<int>(parse_long(tok, "years"));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  };
  std::vector<int> years;
  const auto colon = spec.find(':');
  if (colon != std::string::npos) {
    const int a = to_year(spec.substr(0, colon));
    const int b = to_year(spec.substr(colon + 1));
    if (b < a) throw ConfigError("years: range end before start");
    for (int y = a; y <= b; ++y) years.push_back(y);
  } else {
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto comma = spec.find(',', start);
      const std::string tok =
          spec.substr(start, comma == std::string::npos ? comma : comma - start);
      if (!tok.empty()) {
        years.push_back(to_year(tok));
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (years.empty()) throw ConfigError("years: empty specification");
  return years;
}

// One stage label per pipeline step so runtime failures name where they died.
template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw Error(std::string("stage ") + stage + ": " + e.what());
  }
}

// Options shared by calibrate and evaluate for the grid axes. Unset axes fall
// back to the per-model default grid.
struct GridFlags {
  double chill_min = 0.0, chill_max = 0.0;
  double forcing_min = 0.0, forcing_max = 0.0;
  double base_min = 0.0, base_max = 0.0;
  int chill_steps = 0, forcing_steps = 0, base_steps = 0;
  CLI::Option* any[9] = {};

  void add(CLI::App* sub) {
    any[0] = sub->add_option("--grid-chill-min", chill_min, "Grid: lowest chill requirement");
    any[1] = sub->add_option("--grid-chill-max", chill_max, "Grid: highest chill requirement");
    any[2] = sub->add_option("--grid-chill-steps", chill_steps, "Grid: chill axis size");
    any[3] = sub->add_option("--grid-forcing-min", forcing_min, "Grid: lowest forcing requirement (GDH)");
    any[4] = sub->add_option("--grid-forcing-max", forcing_max, "Grid: highest forcing requirement (GDH)");
    any[5] = sub->add_option("--grid-forcing-steps", forcing_steps, "Grid: forcing axis size");
    any[6] = sub->add_option("--grid-base-min", base_min, "Grid: lowest base temperature (C)");
    any[7] = sub->add_option("--grid-base-max", base_max, "Grid: highest base temperature (C)");
    any[8] = sub->add_option("--grid-base-steps", base_steps, "Grid: base temperature axis size");
  }

  GridSpec resolve(ChillModelKind kind) const {
    GridSpec g = default_grid(kind);
    bool custom = false;
    for (const auto* opt : any) {
      if (opt && opt->count() > 0) custom = true;
    }
    if (!custom) return g;
    if (any[0]->count()) {
      if (chill_steps < 1) throw ConfigError("grid-chill-steps: must be >= 1");
      g.chill_req = linspace(chill_min, chill_max, chill_steps);
    }
    if (any[3]->count()) {
      if (forcing_steps < 1) throw ConfigError("grid-forcing-steps: must be >= 1");
      g.forcing_req = linspace(forcing_min, forcing_max, forcing_steps);
    }
    if (any[6]->count()) {
      if (base_steps < 1) throw ConfigError("grid-base-steps: must be >= 1");
      g.base_temp = linspace(base_min, base_max, base_steps);
    }
    return g;
  }

  json echo() const {
    return json{{"grid-chill-min", chill_min},     {"grid-chill-max", chill_max},
                {"grid-chill-steps", chill_steps}, {"grid-forcing-min", forcing_min},
                {"grid-forcing-max", forcing_max}, {"grid-forcing-steps", forcing_steps},
                {"grid-base-min", base_min},       {"grid-base-max", base_max},
                {"grid-base-steps", base_steps}};
  }
};

struct TrainFlags {
  TrainConfig cfg;

  void add(CLI::App* sub) {
    sub->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    sub->add_option("--lr", cfg.lr, "Initial learning rate")->capture_default_str();
    sub->add_option("--lr-decay", cfg.lr_decay, "Learning-rate decay factor")->capture_default_str();
    sub->add_option("--lr-decay-interval", cfg.lr_decay_interval,
                    "Epochs between learning-rate decays")->capture_default_str();
    sub->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay")->capture_default_str();
    sub->add_option("--init-chill-inflection", cfg.init_chill_inflection,
                    "Initial chill inflection (0..1)")->capture_default_str();
    sub->add_option("--init-forcing-inflection", cfg.init_forcing_inflection,
                    "Initial forcing inflection")->capture_default_str();
    sub->add_option("--init-base-temp", cfg.init_base_temp,
                    "Initial base temperature (C)")->capture_default_str();
    sub->add_option("--init-forcing-scale", cfg.init_forcing_scale,
                    "Initial forcing scale s")->capture_default_str();
    sub->add_option("--decay-phi", cfg.decay_phi,
                    "Apply weight decay to the biophysical parameters too")->capture_default_str();
    sub->add_option("--normalize-mlp-input", cfg.normalize_mlp_input,
                    "Scale MLP inputs by 1/20")->capture_default_str();
  }

  json echo() const {
    return json{{"epochs", cfg.epochs},
                {"lr", cfg.lr},
                {"lr-decay", cfg.lr_decay},
                {"lr-decay-interval", cfg.lr_decay_interval},
                {"weight-decay", cfg.weight_decay},
                {"init-chill-inflection", cfg.init_chill_inflection},
                {"init-forcing-inflection", cfg.init_forcing_inflection},
                {"init-base-temp", cfg.init_base_temp},
                {"init-forcing-scale", cfg.init_forcing_scale},
                {"decay-phi", cfg.decay_phi},
                {"normalize-mlp-input", cfg.normalize_mlp_input}};
  }
};

inline bool is_hybrid_model(const std::string& model) {
  return model == "hybrid" || model == "hybrid-ablation-utah";
}

inline json pairs_json(const SeedResult& sr) {
  json pairs = json::array();
  for (const auto& p : sr.pairs) {
    pairs.push_back(json{{"location_id", p.location_id},
                         {"variety", p.variety},
                         {"season_start_year", p.season_start_year},
                         {"observed", p.observed},
                         {"predicted", p.predicted}});
  }
  return pairs;
}

inline EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.model = j.at("model").get<std::string>();
  r.setting = setting_from_string(j.at("setting").get<std::string>());
  r.n_seeds = j.at("n_seeds").get<int>();
  for (const auto& s : j.at("per_seed")) {
    SeedResult sr;
    sr.seed = s.at("seed").get<std::uint64_t>();
    sr.ok = s.at("ok").get<bool>();
    if (sr.ok) {
      sr.mae = s.at("mae").get<double>();
      sr.n_test = s.at("n_test").get<int>();
      for (const auto& p : s.value("pairs", json::array())) {
        sr.pairs.push_back({p.at("location_id").get<std::string>(),
                            p.at("variety").get<std::string>(),
                            p.at("season_start_year").get<int>(),
                            p.at("observed").get<int>(),
                            p.at("predicted").get<int>()});
      }
    } else {
      sr.error = s.value("error", "");
    }
    r.per_seed.push_back(std::move(sr));
  }
  return r;
}

}  // namespace detail

// Entry point used by both the binary and the end-to-end tests. argv excludes
// the program name. Exit codes: 0 success, 1 runtime failure, 2 bad
// configuration or usage.
inline int run(std::vector<std::string> args) {
  CLI::App app{"Tree-dormancy phenology models: mechanistic baselines and the "
               "differentiable hybrid"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  // Shared storage; only the parsed subcommand's values are read.
  std::string temps_path, blooms_path, out_dir, config_path, model, grouping_str;
  std::string model_file, setting_str = "1", group_key_flag, variety_flag, years_spec;
  std::string report_path;
  std::uint64_t seed = 0;
  int seeds = 10;
  int jobs = 0;
  int n_locations = 1;
  bool floor_negative_chill = true;
  double train_year_fraction = 0.75, holdout_location_fraction = 0.25;

  ClimateSpec climate;
  OracleSpec oracle;
  oracle.params = {800.0, 1800.0, 4.0};
  HeteroSpec hetero;
  std::string oracle_model = "utah";

  // Grid flags are registered on calibrate and evaluate separately; the
  // stored option handles are per-subcommand.
  detail::GridFlags grid_cal, grid_eval;
  detail::TrainFlags train_flags;

  const auto add_common = [&](CLI::App* sub, bool needs_out = true) {
    auto* out_opt = sub->add_option("--out", out_dir, "Output run directory");
    if (needs_out) out_opt->required();
    sub->add_option("--config", config_path,
                    "JSON config file with flat keys mirroring these flags; "
                    "explicit flags win");
    sub->add_option("--jobs", jobs,
                    "Worker threads (0 = all cores); results are identical "
                    "for any value")->capture_default_str();
  };

  // ingest ------------------------------------------------------------------
  auto* c_ingest = app.add_subcommand(
      "ingest", "Validate a temps/blooms CSV pair and summarize the dataset");
  c_ingest->add_option("--temps", temps_path, "Hourly temperature CSV")->required();
  c_ingest->add_option("--blooms", blooms_path, "Bloom observation CSV")->required();
  add_common(c_ingest);

  // gen-synthetic -------------------------------------------------------------
  auto* c_gen = app.add_subcommand(
      "gen-synthetic", "Generate a synthetic dataset from a mechanistic oracle");
  c_gen->add_option("--locations", n_locations, "Number of locations")->required();
  c_gen->add_option("--years", years_spec,
                    "Season start years: 'first:last' or comma list")->required();
  c_gen->add_option("--seed", climate.seed, "Generator seed")->capture_default_str();
  c_gen->add_option("--mean-temp", climate.mean_temp, "Annual mean temperature (C)")
      ->capture_default_str();
  c_gen->add_option("--seasonal-amplitude", climate.seasonal_amplitude,
                    "Seasonal swing around the mean (C)")->capture_default_str();
  c_gen->add_option("--diurnal-amplitude", climate.diurnal_amplitude,
                    "Day/night swing (C)")->capture_default_str();
  c_gen->add_option("--daily-noise-std", climate.daily_noise_std,
                    "Day-to-day noise std (C)")->capture_default_str();
  c_gen->add_option("--hourly-noise-std", climate.hourly_noise_std,
                    "Hourly noise std (C)")->capture_default_str();
  c_gen->add_option("--location-offset-range", climate.location_offset_range,
                    "Per-location climate offset range (C)")->capture_default_str();
  c_gen->add_option("--oracle-model", oracle_model,
                    "Generating model: chill-hours, utah or chill-days")
      ->capture_default_str();
  c_gen->add_option("--oracle-chill-req", oracle.params.chill_req,
                    "Oracle chill requirement")->capture_default_str();
  c_gen->add_option("--oracle-forcing-req", oracle.params.forcing_req,
                    "Oracle forcing requirement (GDH)")->capture_default_str();
  c_gen->add_option("--oracle-base-temp", oracle.params.base_temp,
                    "Oracle base temperature (C)")->capture_default_str();
  c_gen->add_option("--jitter-std", oracle.jitter_std,
                    "Bloom-day observation noise std (days)")->capture_default_str();
  c_gen->add_option("--hetero-chill-per-degc", hetero.chill_req_per_degc,
                    "Chill requirement drift per degree of location offset")
      ->capture_default_str();
  c_gen->add_option("--hetero-forcing-per-degc", hetero.forcing_req_per_degc,
                    "Forcing requirement drift per degree of location offset")
      ->capture_default_str();
  c_gen->add_option("--hetero-base-per-degc", hetero.base_temp_per_degc,
                    "Base temperature drift per degree of location offset")
      ->capture_default_str();
  add_common(c_gen);

  // calibrate -----------------------------------------------------------------
  auto* c_cal = app.add_subcommand(
      "calibrate", "Grid-search a mechanistic model's parameters per group");
  c_cal->add_option("--temps", temps_path, "Hourly temperature CSV")->required();
  c_cal->add_option("--blooms", blooms_path, "Bloom observation CSV")->required();
  c_cal->add_option("--model", model, "chill-hours, utah or chill-days")->required();
  c_cal->add_option("--grouping", grouping_str, "location or variety")
      ->default_str("location");
  c_cal->add_option("--floor-negative-chill", floor_negative_chill,
                    "Floor cumulative Utah chill at zero")->capture_default_str();
  grid_cal.add(c_cal);
  add_common(c_cal);

  // train ----------------------------------------------------------------------
  auto* c_train = app.add_subcommand(
      "train", "Train the differentiable hybrid (or its Utah ablation) per group");
  c_train->add_option("--temps", temps_path, "Hourly temperature CSV")->required();
  c_train->add_option("--blooms", blooms_path, "Bloom observation CSV")->required();
  c_train->add_option("--model", model, "hybrid or hybrid-ablation-utah")
      ->default_str("hybrid");
  c_train->add_option("--grouping", grouping_str, "location or variety")
      ->default_str("location");
  c_train->add_option("--seed", seed, "Initialization seed")->capture_default_str();
  train_flags.add(c_train);
  add_common(c_train);

  // predict ----------------------------------------------------------------------
  auto* c_pred = app.add_subcommand(
      "predict", "Predict bloom days for every complete season in a temps CSV");
  c_pred->add_option("--model-file", model_file,
                     "Model JSON written by calibrate or train")->required();
  c_pred->add_option("--temps", temps_path, "Hourly temperature CSV")->required();
  c_pred->add_option("--blooms", blooms_path,
                     "Bloom CSV; supplies the location-to-variety mapping for "
                     "per-variety models");
  c_pred->add_option("--variety", variety_flag,
                     "Assume this variety for every location instead");
  add_common(c_pred);

  // evaluate ----------------------------------------------------------------------
  auto* c_eval = app.add_subcommand(
      "evaluate", "Repeated-seed split/fit/score protocol for any model");
  c_eval->add_option("--temps", temps_path, "Hourly temperature CSV")->required();
  c_eval->add_option("--blooms", blooms_path, "Bloom observation CSV")->required();
  c_eval->add_option("--model", model,
                     "chill-hours, utah, chill-days, hybrid, "
                     "hybrid-ablation-utah or median")->required();
  c_eval->add_option("--setting", setting_str,
                     "1 (temporal per location), 2 (temporal per variety), "
                     "3 (spatiotemporal)")->capture_default_str();
  c_eval->add_option("--grouping", grouping_str,
                     "Override the setting's default grouping");
  c_eval->add_option("--seeds", seeds, "Number of evaluation seeds")
      ->capture_default_str();
  c_eval->add_option("--seed", seed, "Base seed; run i uses seed+i")
      ->capture_default_str();
  c_eval->add_option("--train-year-fraction", train_year_fraction,
                     "Fraction of years used for training")->capture_default_str();
  c_eval->add_option("--holdout-location-fraction", holdout_location_fraction,
                     "Setting 3: fraction of locations held out")
      ->capture_default_str();
  c_eval->add_option("--floor-negative-chill", floor_negative_chill,
                     "Floor cumulative Utah chill at zero")->capture_default_str();
  grid_eval.add(c_eval);
  train_flags.add(c_eval);
  add_common(c_eval);

  // export-response -----------------------------------------------------------
  auto* c_resp = app.add_subcommand(
      "export-response",
      "Export the learned chill response vs daily mean temperature as a "
      "binned density table");
  c_resp->add_option("--model-file", model_file, "Hybrid model JSON")->required();
  c_resp->add_option("--temps", temps_path, "Hourly temperature CSV")->required();
  c_resp->add_option("--blooms", blooms_path, "Bloom observation CSV")->required();
  c_resp->add_option("--group", group_key_flag,
                     "Group key inside the model file (default: sole group)");
  add_common(c_resp);

  // export-scatter --------------------------------------------------------------
  auto* c_scat = app.add_subcommand(
      "export-scatter", "Export observed/predicted pairs from a report JSON");
  c_scat->add_option("--report", report_path, "report.json from evaluate")->required();
  add_common(c_scat);

  try {
    const std::vector<std::string> final_args = detail::inject_config(std::move(args));
    std::vector<const char*> argv;
    argv.push_back("pheno");
    for (const auto& a : final_args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::fputs(app.help().c_str(), stdout);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  const std::vector<std::string> echo_args = [&] {
    std::vector<std::string> v;
    for (const auto* sub :
         {c_ingest, c_gen, c_cal, c_train, c_pred, c_eval, c_resp, c_scat}) {
      if (app.got_subcommand(sub)) v.push_back(sub->get_name());
    }
    return v;
  }();

  try {
    // ----- ingest
    if (app.got_subcommand(c_ingest)) {
      const Dataset data = detail::run_stage(
          "ingest", [&] { return ingest(temps_path, blooms_path); });
      RunDir run_dir(out_dir);
      json per_location = json::object();
      for (const auto& loc : data.locations()) {
        int n = 0;
        for (const auto& s : data.samples()) {
          if (s.bloom.location_id == loc.location_id) ++n;
        }
        per_location[loc.location_id] =
            json{{"variety", loc.variety}, {"samples", n}};
      }
      json summary{{"locations", data.locations().size()},
                   {"samples", data.size()},
                   {"years", data.distinct_years()},
                   {"per_location", per_location}};
      run_dir.write_json("summary.json", summary);
      run_dir.finalize(json{{"temps", temps_path},
                            {"blooms", blooms_path},
                            {"out", out_dir}},
                       echo_args);
      return 0;
    }

    // ----- gen-synthetic
    if (app.got_subcommand(c_gen)) {
      oracle.kind = chill_model_from_string(oracle_model);
      const std::vector<int> years = detail::parse_years(years_spec);
      const GenResult gen = detail::run_stage("generate", [&] {
        return gen_dataset_with_truth(climate, oracle, n_locations, years, hetero);
      });
      RunDir run_dir(out_dir);
      run_dir.write("temps.csv", temps_to_csv(gen.data));
      run_dir.write("blooms.csv", blooms_to_csv(gen.data));
      run_dir.write_json("truth.json", truth_to_json(climate, oracle, gen.truth));
      json cfg{{"locations", n_locations},
               {"years", years_spec},
               {"seed", climate.seed},
               {"mean-temp", climate.mean_temp},
               {"seasonal-amplitude", climate.seasonal_amplitude},
               {"diurnal-amplitude", climate.diurnal_amplitude},
               {"daily-noise-std", climate.daily_noise_std},
               {"hourly-noise-std", climate.hourly_noise_std},
               {"location-offset-range", climate.location_offset_range},
               {"oracle-model", oracle_model},
               {"oracle-chill-req", oracle.params.chill_req},
               {"oracle-forcing-req", oracle.params.forcing_req},
               {"oracle-base-temp", oracle.params.base_temp},
               {"jitter-std", oracle.jitter_std},
               {"hetero-chill-per-degc", hetero.chill_req_per_degc},
               {"hetero-forcing-per-degc", hetero.forcing_req_per_degc},
               {"hetero-base-per-degc", hetero.base_temp_per_degc},
               {"out", out_dir}};
      run_dir.finalize(cfg, echo_args);
      return 0;
    }

    // ----- calibrate
    if (app.got_subcommand(c_cal)) {
      const ChillModelKind kind = chill_model_from_string(model);
      const Grouping grouping = grouping_from_string(
          grouping_str.empty() ? "location" : grouping_str);
      const GridSpec grid = grid_cal.resolve(kind);
      const HardPredictOptions opts{floor_negative_chill};
      const Dataset data = detail::run_stage(
          "ingest", [&] { return ingest(temps_path, blooms_path); });
      const GridSearchResult result = detail::run_stage("calibrate", [&] {
        return grid_search(data, kind, grid, grouping, jobs, opts);
      });
      RunDir run_dir(out_dir);
      const std::string name =
          "params_" + std::string(to_string(kind)) + "_" +
          std::string(to_string(grouping)) + ".json";
      run_dir.write_json(name, calibration_to_json(result, kind, grouping, opts));
      json cfg = grid_cal.echo();
      cfg["temps"] = temps_path;
      cfg["blooms"] = blooms_path;
      cfg["model"] = model;
      cfg["grouping"] = to_string(grouping);
      cfg["floor-negative-chill"] = floor_negative_chill;
      cfg["jobs"] = jobs;
      cfg["out"] = out_dir;
      run_dir.finalize(cfg, echo_args);
      for (const auto& w : result.warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
      }
      return 0;
    }

    // ----- train
    if (app.got_subcommand(c_train)) {
      const std::string model_name = model.empty() ? "hybrid" : model;
      if (!detail::is_hybrid_model(model_name)) {
        throw ConfigError("model: train expects hybrid or hybrid-ablation-utah");
      }
      const Grouping grouping = grouping_from_string(
          grouping_str.empty() ? "location" : grouping_str);
      TrainConfig cfg = train_flags.cfg;
      cfg.jobs = jobs;
      const Dataset data = detail::run_stage(
          "ingest", [&] { return ingest(temps_path, blooms_path); });
      const TrainResult result = detail::run_stage("train", [&] {
        return model_name == "hybrid"
                   ? train(data, seed, cfg, grouping)
                   : train_ablation_utah(data, seed, cfg, grouping);
      });
      RunDir run_dir(out_dir);
      json cfg_echo = train_flags.echo();
      cfg_echo["temps"] = temps_path;
      cfg_echo["blooms"] = blooms_path;
      cfg_echo["model"] = model_name;
      cfg_echo["grouping"] = to_string(grouping);
      cfg_echo["seed"] = seed;
      cfg_echo["jobs"] = jobs;
      cfg_echo["out"] = out_dir;
      const std::uint64_t config_hash = fnv1a64(cfg_echo.dump());
      run_dir.write_json("model_" + model_name + ".json",
                         train_result_to_json(result, grouping, seed, config_hash,
                                              model_name));
      run_dir.write("loss_trace.csv", loss_trace_to_csv(result));
      run_dir.finalize(cfg_echo, echo_args);
      return 0;
    }

    // ----- predict
    if (app.got_subcommand(c_pred)) {
      const json mj = detail::run_stage("load-model", [&] {
        return json::parse(read_file(model_file));
      });
      const std::string model_name = mj.at("model").get<std::string>();
      const std::vector<LocationSeason> seasons = detail::run_stage(
          "load-seasons", [&] { return load_seasons(temps_path); });

      // Group key per location, resolved by the model's grouping.
      std::map<std::string, std::string> variety_by_location;
      if (!blooms_path.empty()) {
        const Dataset data = detail::run_stage(
            "ingest", [&] { return ingest(temps_path, blooms_path); });
        for (const auto& loc : data.locations()) {
          variety_by_location[loc.location_id] = loc.variety;
        }
      }
      const auto key_for = [&](const std::string& location_id,
                               Grouping grouping) -> std::string {
        if (grouping == Grouping::PerLocation) return location_id;
        if (!variety_flag.empty()) return variety_flag;
        auto it = variety_by_location.find(location_id);
        if (it == variety_by_location.end()) {
          throw ConfigError(
              "variety: per-variety model needs --blooms or --variety to map "
              "location " + location_id);
        }
        return it->second;
      };

      std::string csv_out =
          "location_id,season_start_year,predicted_day,predicted_date,no_bloom\n";
      const auto emit = [&](const LocationSeason& ls, std::optional<int> day) {
        const int d = bloom_day_or_end(day, ls.series.length());
        csv_out += csv::escape(ls.location_id);
        csv_out += ",";
        csv_out += std::to_string(ls.series.season_start_year());
        csv_out += ",";
        csv_out += std::to_string(d);
        csv_out += ",";
        csv_out += format_date(season_index_to_date(d, ls.series.season_start_year()));
        csv_out += day ? ",false\n" : ",true\n";
      };

      detail::run_stage("predict", [&] {
        if (detail::is_hybrid_model(model_name)) {
          const HybridModelFile f = hybrid_model_from_json(mj);
          for (const auto& ls : seasons) {
            const std::string key = key_for(ls.location_id, f.grouping);
            auto it = f.groups.find(key);
            if (it == f.groups.end()) {
              throw Error("model file has no group '" + key + "'");
            }
            emit(ls, predict_bloom_soft(forward(ls.series, it->second)));
          }
        } else {
          const MechanisticModelFile f = mechanistic_model_from_json(mj);
          for (const auto& ls : seasons) {
            const std::string key = key_for(ls.location_id, f.grouping);
            auto it = f.groups.find(key);
            if (it == f.groups.end()) {
              throw Error("model file has no group '" + key + "'");
            }
            emit(ls, predict_bloom_hard(ls.series, it->second, f.kind, f.opts));
          }
        }
        return 0;
      });
      RunDir run_dir(out_dir);
      run_dir.write("predictions.csv", csv_out);
      run_dir.finalize(json{{"model-file", model_file},
                            {"temps", temps_path},
                            {"blooms", blooms_path},
                            {"variety", variety_flag},
                            {"out", out_dir}},
                       echo_args);
      return 0;
    }

    // ----- evaluate
    if (app.got_subcommand(c_eval)) {
      const Setting setting = setting_from_string(setting_str);
      const Grouping grouping = grouping_str.empty()
                                    ? default_grouping(setting)
                                    : grouping_from_string(grouping_str);
      SplitSpec split;
      split.setting = setting;
      split.train_year_fraction = train_year_fraction;
      split.holdout_location_fraction = holdout_location_fraction;
      split.seed = seed;

      const Dataset data = detail::run_stage(
          "ingest", [&] { return ingest(temps_path, blooms_path); });

      FitFn fit;
      if (model == "median") {
        fit = median_fitter(grouping);
      } else if (detail::is_hybrid_model(model)) {
        TrainConfig cfg = train_flags.cfg;
        cfg.jobs = jobs;
        cfg.record_trace = false;
        fit = hybrid_fitter(cfg, grouping, model == "hybrid-ablation-utah");
      } else {
        const ChillModelKind kind = chill_model_from_string(model);
        fit = mechanistic_fitter(kind, grid_eval.resolve(kind), grouping, jobs,
                                 HardPredictOptions{floor_negative_chill});
      }

      const EvalReport report = detail::run_stage("evaluate", [&] {
        return evaluate(fit, data, split, seeds, model, jobs);
      });

      RunDir run_dir(out_dir);
      json rj = report_to_json(report);
      {
        // evaluate's report keeps the per-sample pairs so export-scatter can
        // run from the file alone.
        std::size_t i = 0;
        for (const auto& sr : report.per_seed) {
          if (sr.ok) rj["per_seed"][i]["pairs"] = detail::pairs_json(sr);
          ++i;
        }
      }
      run_dir.write_json("report.json", rj);
      run_dir.write("scatter.csv", scatter_to_csv(export_scatter(report)));
      json cfg = grid_eval.echo();
      const json train_echo = train_flags.echo();
      for (const auto& [k, v] : train_echo.items()) cfg[k] = v;
      cfg["temps"] = temps_path;
      cfg["blooms"] = blooms_path;
      cfg["model"] = model;
      cfg["setting"] = setting_str;
      cfg["grouping"] = to_string(grouping);
      cfg["seeds"] = seeds;
      cfg["seed"] = seed;
      cfg["train-year-fraction"] = train_year_fraction;
      cfg["holdout-location-fraction"] = holdout_location_fraction;
      cfg["floor-negative-chill"] = floor_negative_chill;
      cfg["jobs"] = jobs;
      cfg["out"] = out_dir;
      run_dir.finalize(cfg, echo_args);
      for (const auto& w : report.warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
      }
      if (std::isfinite(report.mean_mae)) {
        std::fprintf(stdout, "%s setting=%s mean MAE %.4f days (SE %.4f, %d seeds)\n",
                     report.model.c_str(), to_string(report.setting),
                     report.mean_mae, report.se_mae, report.n_seeds);
      }
      return 0;
    }

    // ----- export-response
    if (app.got_subcommand(c_resp)) {
      const json mj = detail::run_stage("load-model", [&] {
        return json::parse(read_file(model_file));
      });
      const HybridModelFile f = hybrid_model_from_json(mj);
      std::string key = group_key_flag;
      if (key.empty()) {
        if (f.groups.size() != 1) {
          std::string keys;
          for (const auto& [k, _] : f.groups) keys += " '" + k + "'";
          throw ConfigError("group: model file has several groups:" + keys);
        }
        key = f.groups.begin()->first;
      }
      auto it = f.groups.find(key);
      if (it == f.groups.end()) {
        throw ConfigError("group: no group '" + key + "' in model file");
      }
      const Dataset data = detail::run_stage(
          "ingest", [&] { return ingest(temps_path, blooms_path); });
      const auto rows = detail::run_stage(
          "export", [&] { return export_response_density(it->second, data); });
      RunDir run_dir(out_dir);
      run_dir.write("response_density.csv", density_to_csv(rows));
      run_dir.finalize(json{{"model-file", model_file},
                            {"temps", temps_path},
                            {"blooms", blooms_path},
                            {"group", key},
                            {"out", out_dir}},
                       echo_args);
      return 0;
    }

    // ----- export-scatter
    if (app.got_subcommand(c_scat)) {
      const EvalReport report = detail::run_stage("load-report", [&] {
        return detail::report_from_json(json::parse(read_file(report_path)));
      });
      RunDir run_dir(out_dir);
      run_dir.write("scatter.csv", scatter_to_csv(export_scatter(report)));
      run_dir.finalize(json{{"report", report_path}, {"out", out_dir}}, echo_args);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON input: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;  // unreachable with require_subcommand(1)
}

}  // namespace pheno::cli
