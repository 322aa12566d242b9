#pragma once

// Published coefficient tables for the classical chill models, transcribed
// from the original publications:
//
//   Richardson, E.A., Seeley, S.D., Walker, D.R. (1974). A model for
//   estimating the completion of rest for 'Redhaven' and 'Elberta' peach
//   trees. HortScience 9(4), 331-332.  (Utah model hourly weights)
//
//   Cesaraccio, C., Spano, D., Snyder, R.L., Duce, P. (2004). Chilling and
//   forcing model to predict bud-burst of crop and forest species.
//   Agricultural and Forest Meteorology 126, 1-13.  (Chill Days case table)
//
// Keep the numbers exactly as published; the rest of the library treats this
// file as the single source of truth for both models.

namespace pheno::tables {

// Utah model weight for one hour at temperature t (degrees Celsius).
// Bands are the Celsius equivalents of the published Fahrenheit table
// (34.0 F = 1.4 C, 36.0 F = 2.4 C, 48.0 F = 9.1 C, 54.0 F = 12.4 C,
// 60.0 F = 15.9 C, 65.0 F = 18.0 C). Full effectiveness between 2.4 and
// 9.1 C; zero at or below 1.4 C and in (12.4, 15.9]; negative above 15.9 C.
constexpr double utah_hour_weight(double t) {
  if (t <= 1.4) return 0.0;
  if (t <= 2.4) return 0.5;
  if (t <= 9.1) return 1.0;
  if (t <= 12.4) return 0.5;
  if (t <= 15.9) return 0.0;
  if (t <= 18.0) return -0.5;
  return -1.0;
}

constexpr double kUtahMaxWeight = 1.0;

// Daily chill-days contribution Cd from the Cesaraccio et al. (2004) case
// table, given daily min/max/mean (tn <= tm <= tx) and threshold tc >= 0.
// The published Cd values are <= 0 (chilling accumulates toward a negative
// requirement in the original formulation); this returns Cd with that sign.
// Days entirely below 0 C fall outside the published cases and contribute 0.
constexpr double chill_days_cd(double tn, double tx, double tm, double tc) {
  if (tx < 0.0) return 0.0;
  if (tn >= 0.0) {
    if (tn >= tc) return 0.0;                      // case 1: 0 <= tc <= tn <= tx
    if (tx > tc) {                                 // case 2: 0 <= tn <= tc < tx
      const double dtr = tx - tn;
      return -((tm - tn) - (tx - tc) * (tx - tc) / (2.0 * dtr));
    }
    return -(tm - tn);                             // case 3: 0 <= tn <= tx <= tc
  }
  const double dtr = tx - tn;                      // tn < 0 <= tx, so dtr > 0
  if (tx <= tc) {                                  // case 4: tn < 0 <= tx <= tc
    return -(tx * tx) / (2.0 * dtr);
  }
  // case 5: tn < 0 <= tc < tx
  return -((tx * tx) - (tx - tc) * (tx - tc)) / (2.0 * dtr);
}

}  // namespace pheno::tables
