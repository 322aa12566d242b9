#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pheno/autodiff.hpp"
#include "pheno/common.hpp"
#include "pheno/domain.hpp"
#include "pheno/mechanistic.hpp"
#include "pheno/parallel.hpp"

namespace pheno {

// Fixed slope of the chill gate; the forcing gate's slope is the learned 1/s.
inline constexpr double kChillSlope = 50.0;
// Floor inside the bloom-probability log.
inline constexpr double kProbFloor = 1e-12;
// Lower bound re-projected after every optimizer step.
inline constexpr double kForcingScaleFloor = 0.01;

// Generalized logistic gamma / (1 + e^{-alpha (x - beta)}), evaluated in the
// stable branch so large |alpha (x - beta)| cannot overflow.
inline double soft_threshold(double x, double alpha, double beta, double gamma) {
  if (!(gamma > 0.0)) throw Error("soft_threshold: gamma must be > 0");
  if (!std::isfinite(x) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw Error("soft_threshold: non-finite argument");
  }
  return gamma * ad::stable_logistic(alpha * (x - beta));
}

// 24 -> 64 -> 64 -> 1 network, ReLU hidden, logistic output. Weights live in
// one flat buffer (row-major per layer) so the trainer and serializer share
// the layout.
struct MlpChill {
  static constexpr int kIn = 24;
  static constexpr int kHidden = 64;
  static constexpr std::size_t kW1 = kHidden * kIn;
  static constexpr std::size_t kB1 = kHidden;
  static constexpr std::size_t kW2 = kHidden * kHidden;
  static constexpr std::size_t kB2 = kHidden;
  static constexpr std::size_t kW3 = kHidden;
  static constexpr std::size_t kB3 = 1;
  static constexpr std::size_t kThetaSize = kW1 + kB1 + kW2 + kB2 + kW3 + kB3;

  std::vector<double> theta = std::vector<double>(kThetaSize, 0.0);

  std::span<const double> w1() const { return {theta.data(), kW1}; }
  std::span<const double> b1() const { return {theta.data() + kW1, kB1}; }
  std::span<const double> w2() const { return {theta.data() + kW1 + kB1, kW2}; }
  std::span<const double> b2() const { return {theta.data() + kW1 + kB1 + kW2, kB2}; }
  std::span<const double> w3() const {
    return {theta.data() + kW1 + kB1 + kW2 + kB2, kW3};
  }
  double b3() const { return theta[kThetaSize - 1]; }

  void validate() const {
    if (theta.size() != kThetaSize) throw Error("MlpChill: bad theta size");
    for (double v : theta) {
      if (!std::isfinite(v)) throw Error("MlpChill: non-finite weight");
    }
  }

  // Uniform +-sqrt(1/fan_in) weights, zero biases. Hand-rolled uniform keeps
  // initialization bit-identical across standard libraries.
  void init(std::uint64_t seed) {
    SplitMix stream(mix_seed(seed, "mlp-init"));
    auto uniform = [&stream](double bound) {
      const double u = static_cast<double>(stream.next() >> 11) * 0x1.0p-53;
      return (2.0 * u - 1.0) * bound;
    };
    std::size_t k = 0;
    const double r1 = std::sqrt(1.0 / kIn);
    for (std::size_t i = 0; i < kW1; ++i) theta[k++] = uniform(r1);
    for (std::size_t i = 0; i < kB1; ++i) theta[k++] = 0.0;
    const double r2 = std::sqrt(1.0 / kHidden);
    for (std::size_t i = 0; i < kW2; ++i) theta[k++] = uniform(r2);
    for (std::size_t i = 0; i < kB2; ++i) theta[k++] = 0.0;
    for (std::size_t i = 0; i < kW3; ++i) theta[k++] = uniform(r2);
    theta[k++] = 0.0;
  }

  // Chill response for one day's 24 hourly temperatures, in (0, 1).
  double response(std::span<const double> hours, bool normalize_input = false) const {
    if (hours.size() != kIn) throw Error("MlpChill: expected 24 hourly temps");
    double x[kIn];
    for (int i = 0; i < kIn; ++i) {
      x[i] = normalize_input ? hours[i] / kMlpInputScale : hours[i];
    }
    double h1[kHidden];
    for (int j = 0; j < kHidden; ++j) {
      const double z = ad::detail::dot(x, w1().data() + j * kIn, kIn) + b1()[j];
      h1[j] = z > 0.0 ? z : 0.0;
    }
    double h2[kHidden];
    for (int j = 0; j < kHidden; ++j) {
      const double z =
          ad::detail::dot(h1, w2().data() + j * kHidden, kHidden) + b2()[j];
      h2[j] = z > 0.0 ? z : 0.0;
    }
    const double z = ad::detail::dot(h2, w3().data(), kHidden) + b3();
    return ad::stable_logistic(z);
  }

  static constexpr double kMlpInputScale = 20.0;
};

// Daily chill source: the learned MLP, or the fixed Utah response scaled by
// its 24-hour maximum into [0, 1] (negative Utah hours floored) for the
// ablation model.
enum class ChillSource { Mlp, UtahScaled };

inline const char* to_string(ChillSource s) {
  return s == ChillSource::Mlp ? "mlp" : "utah-scaled";
}
inline ChillSource chill_source_from_string(const std::string& s) {
  if (s == "mlp") return ChillSource::Mlp;
  if (s == "utah-scaled") return ChillSource::UtahScaled;
  throw ConfigError("unknown chill source '" + s + "'");
}

struct HybridParams {
  MlpChill mlp;
  double chill_inflection = 0.3;    // on the C~/S axis, in (0, 1)
  double forcing_inflection = 5.0;  // on the F~/S axis, > 0
  double base_temp = 5.0;
  double forcing_scale = 1.0;       // s; forcing-gate slope is 1/s
  ChillSource chill_source = ChillSource::Mlp;
  bool normalize_mlp_input = false;

  void validate() const {
    if (chill_source == ChillSource::Mlp) mlp.validate();
    if (!(chill_inflection > 0.0 && chill_inflection < 1.0)) {
      throw Error("chill inflection must lie in (0, 1)");
    }
    if (!(forcing_inflection > 0.0)) throw Error("forcing inflection must be > 0");
    if (!std::isfinite(base_temp)) throw Error("base temperature must be finite");
    if (!(forcing_scale >= kForcingScaleFloor)) {
      throw Error("forcing scale must be >= 0.01");
    }
  }

  double daily_chill(std::span<const double> hours) const {
    if (chill_source == ChillSource::Mlp) {
      return mlp.response(hours, normalize_mlp_input);
    }
    const double u = utah_chill(hours);
    return std::max(0.0, u) / (kHoursPerDay * tables::kUtahMaxWeight);
  }
};

struct BloomDistribution {
  std::vector<double> p;            // p_t = cdf_t - cdf_{t-1}
  std::vector<double> chill_acc;    // C~_t
  std::vector<double> forcing_acc;  // F~_t
  std::vector<double> chill_gate;   // r~(c)_t
  std::vector<double> bloom_cdf;    // r~(f)_t
  double cdf0 = 0.0;                // r~(f)_0 at zero accumulated forcing

  int days() const { return static_cast<int>(p.size()); }
};

// Differentiable two-stage forward pass. Chill accumulates as the cumulative
// sum of the daily chill response; the chill gate multiplies the same day's
// GDH before it enters the forcing sum.
inline BloomDistribution forward(const SeasonSeries& series,
                                 const HybridParams& params) {
  params.validate();
  const int S = series.length();
  const double inv_s_len = 1.0 / static_cast<double>(S);
  const double slope_f = 1.0 / params.forcing_scale;

  BloomDistribution d;
  d.p.resize(S);
  d.chill_acc.resize(S);
  d.forcing_acc.resize(S);
  d.chill_gate.resize(S);
  d.bloom_cdf.resize(S);
  d.cdf0 = soft_threshold(0.0, slope_f, params.forcing_inflection, 1.0);

  double c_acc = 0.0;
  double f_acc = 0.0;
  double prev_cdf = d.cdf0;
  for (int t = 1; t <= S; ++t) {
    const auto hours = series.day(t);
    c_acc += params.daily_chill(hours);
    d.chill_acc[t - 1] = c_acc;
    const double gate =
        soft_threshold(c_acc * inv_s_len, kChillSlope, params.chill_inflection, 1.0);
    d.chill_gate[t - 1] = gate;
    f_acc += gdh_forcing(hours, params.base_temp) * gate;
    d.forcing_acc[t - 1] = f_acc;
    const double cdf =
        soft_threshold(f_acc * inv_s_len, slope_f, params.forcing_inflection, 1.0);
    d.bloom_cdf[t - 1] = cdf;
    d.p[t - 1] = cdf - prev_cdf;
    prev_cdf = cdf;
#ifndef NDEBUG
    assert(d.p[t - 1] >= 0.0);
    assert(cdf >= 0.0 && cdf <= 1.0);
#endif
  }
  return d;
}

inline double nll_loss(const BloomDistribution& dist, int observed_day) {
  if (observed_day < 1 || observed_day > dist.days()) {
    throw Error("nll_loss: observed day outside season");
  }
  return -std::log(std::max(dist.p[observed_day - 1], kProbFloor));
}

// Earliest day of maximum bloom probability.
inline int predict_bloom_soft(const BloomDistribution& dist) {
  if (dist.p.empty()) throw Error("predict_bloom_soft: empty distribution");
  int best = 1;
  double best_p = dist.p[0];
  for (int t = 2; t <= dist.days(); ++t) {
    if (dist.p[t - 1] > best_p) {
      best_p = dist.p[t - 1];
      best = t;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  int epochs = 20000;
  double lr = 1e-3;
  double lr_decay = 0.9;
  int lr_decay_interval = 2000;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_chill_inflection = 0.3;
  double init_forcing_inflection = 5.0;
  double init_base_temp = 5.0;
  double init_forcing_scale = 1.0;
  bool decay_phi = false;  // weight decay covers theta only unless set
  bool normalize_mlp_input = false;
  bool record_trace = true;
  int jobs = 1;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
      throw ConfigError("lr decay factor must lie in (0, 1]");
    }
    if (lr_decay_interval <= 0) throw ConfigError("lr decay interval must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
    if (!(init_chill_inflection > 0.0 && init_chill_inflection < 1.0)) {
      throw ConfigError("initial chill inflection must lie in (0, 1)");
    }
    if (!(init_forcing_inflection > 0.0)) {
      throw ConfigError("initial forcing inflection must be > 0");
    }
    if (!(init_forcing_scale >= kForcingScaleFloor)) {
      throw ConfigError("initial forcing scale must be >= 0.01");
    }
  }
};

inline double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  const int k = epoch / cfg.lr_decay_interval;
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(k));
}

struct TraceRow {
  int epoch = 0;
  double mean_nll = 0.0;
  double lr = 0.0;
};

struct GroupTrain {
  HybridParams params;
  std::vector<TraceRow> trace;
  double final_loss = 0.0;
  int n_samples = 0;
};

struct TrainResult {
  std::map<std::string, GroupTrain> groups;
  std::vector<std::string> warnings;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& group, std::vector<double> snapshot,
                  const std::string& detail)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              " in group '" + group + "': " + detail),
        epoch_(epoch),
        snapshot_(std::move(snapshot)) {}
  int epoch() const { return epoch_; }
  const std::vector<double>& snapshot() const { return snapshot_; }

 private:
  int epoch_;
  std::vector<double> snapshot_;
};

namespace detail {

// Flat layout: [theta | beta_c, beta_f, T_B, s] for the MLP model,
// [beta_c, beta_f, T_B, s] for the ablation.
inline std::vector<double> flatten(const HybridParams& p) {
  std::vector<double> flat;
  if (p.chill_source == ChillSource::Mlp) {
    flat = p.mlp.theta;
  }
  flat.push_back(p.chill_inflection);
  flat.push_back(p.forcing_inflection);
  flat.push_back(p.base_temp);
  flat.push_back(p.forcing_scale);
  return flat;
}

inline void unflatten(std::span<const double> flat, HybridParams& p) {
  const std::size_t n_theta =
      p.chill_source == ChillSource::Mlp ? MlpChill::kThetaSize : 0;
  if (flat.size() != n_theta + 4) throw Error("unflatten: bad parameter count");
  if (n_theta > 0) {
    p.mlp.theta.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n_theta));
  }
  p.chill_inflection = flat[n_theta];
  p.forcing_inflection = flat[n_theta + 1];
  p.base_temp = flat[n_theta + 2];
  p.forcing_scale = flat[n_theta + 3];
}

inline void project(std::vector<double>& flat, std::size_t n_theta) {
  // Keeps the invariants the optimizer can violate: s floor, open-interval
  // chill inflection, positive forcing inflection.
  double& bc = flat[n_theta];
  double& bf = flat[n_theta + 1];
  double& s = flat[n_theta + 3];
  bc = std::clamp(bc, 1e-4, 1.0 - 1e-4);
  if (bf < 1e-6) bf = 1e-6;
  if (s < kForcingScaleFloor) s = kForcingScaleFloor;
}

struct SamplePre {
  const SeasonSeries* series = nullptr;
  int observed = 0;
  std::vector<double> mlp_input;    // observed-day prefix, optionally scaled
  std::vector<double> chill_norm;   // ablation: cumulative scaled Utah / S
};

// Builds the loss for one group over all its samples and returns leaf ids.
struct TapeLeaves {
  ad::Tape::Id theta_w1 = -1, theta_b1 = -1, theta_w2 = -1, theta_b2 = -1;
  ad::Tape::Id theta_w3 = -1, theta_b3 = -1;
  ad::Tape::Id beta_c = -1, beta_f = -1, tb = -1, s = -1;
};

inline ad::Tape::Id build_group_loss(ad::Tape& tape, std::span<const double> flat,
                                     std::span<const SamplePre> samples,
                                     ChillSource source, TapeLeaves& leaves) {
  if (samples.empty()) throw Error("build_group_loss: no samples");
  const std::size_t n_theta = source == ChillSource::Mlp ? MlpChill::kThetaSize : 0;
  const double* th = flat.data();
  if (source == ChillSource::Mlp) {
    leaves.theta_w1 = tape.leaf({th, MlpChill::kW1});
    leaves.theta_b1 = tape.leaf({th + MlpChill::kW1, MlpChill::kB1});
    leaves.theta_w2 = tape.leaf({th + MlpChill::kW1 + MlpChill::kB1, MlpChill::kW2});
    leaves.theta_b2 = tape.leaf(
        {th + MlpChill::kW1 + MlpChill::kB1 + MlpChill::kW2, MlpChill::kB2});
    leaves.theta_w3 = tape.leaf(
        {th + MlpChill::kW1 + MlpChill::kB1 + MlpChill::kW2 + MlpChill::kB2,
         MlpChill::kW3});
    leaves.theta_b3 = tape.leaf({th + MlpChill::kThetaSize - 1, 1});
  }
  leaves.beta_c = tape.leaf({flat.data() + n_theta, 1});
  leaves.beta_f = tape.leaf({flat.data() + n_theta + 1, 1});
  leaves.tb = tape.leaf({flat.data() + n_theta + 2, 1});
  leaves.s = tape.leaf({flat.data() + n_theta + 3, 1});

  const ad::Tape::Id neg_beta_c = tape.neg(leaves.beta_c);
  const ad::Tape::Id neg_beta_f = tape.neg(leaves.beta_f);
  const ad::Tape::Id inv_s = tape.recip(leaves.s);
  // r~(f)_0: zero forcing through the gate.
  const ad::Tape::Id cdf0 = tape.logistic(tape.mul_scalar(neg_beta_f, inv_s));

  ad::Tape::Id total = -1;
  for (const SamplePre& sp : samples) {
    const int y = sp.observed;
    const int S = sp.series->length();
    const double inv_len = 1.0 / static_cast<double>(S);
    // Raw temps feed the GDH hinge; the (possibly scaled) copy feeds the MLP.
    const ad::Tape::Id x_raw =
        tape.constant({sp.series->data(), static_cast<std::size_t>(y) * kHoursPerDay});

    ad::Tape::Id chill_norm;  // C~_t / S for t = 1..y
    if (source == ChillSource::Mlp) {
      const ad::Tape::Id x_mlp =
          sp.mlp_input.empty()
              ? x_raw
              : tape.constant({sp.mlp_input.data(),
                               static_cast<std::size_t>(y) * kHoursPerDay});
      ad::Tape::Id h = tape.relu(tape.add_row_vec(
          tape.linear(x_mlp, leaves.theta_w1, y, MlpChill::kIn), leaves.theta_b1, y));
      h = tape.relu(tape.add_row_vec(
          tape.linear(h, leaves.theta_w2, y, MlpChill::kHidden), leaves.theta_b2, y));
      const ad::Tape::Id z = tape.add_row_vec(
          tape.linear(h, leaves.theta_w3, y, MlpChill::kHidden), leaves.theta_b3, y);
      chill_norm = tape.mul_const(tape.cumsum(tape.logistic(z)), inv_len);
    } else {
      chill_norm = tape.constant({sp.chill_norm.data(), static_cast<std::size_t>(y)});
    }

    const ad::Tape::Id gate = tape.logistic(
        tape.mul_const(tape.add_scalar(chill_norm, neg_beta_c), kChillSlope));
    const ad::Tape::Id f = tape.gdh_hinge(x_raw, leaves.tb, y, kHoursPerDay);
    const ad::Tape::Id forcing_norm =
        tape.mul_const(tape.cumsum(tape.mul(f, gate)), inv_len);
    const ad::Tape::Id cdf = tape.logistic(
        tape.mul_scalar(tape.add_scalar(forcing_norm, neg_beta_f), inv_s));

    const ad::Tape::Id cdf_y = tape.index(cdf, y - 1);
    const ad::Tape::Id cdf_prev = y >= 2 ? tape.index(cdf, y - 2) : cdf0;
    const ad::Tape::Id p = tape.add(cdf_y, tape.neg(cdf_prev));
    const ad::Tape::Id nll = tape.neg(tape.log_op(tape.max_const(p, kProbFloor)));
    total = total < 0 ? nll : tape.add(total, nll);
  }
  return tape.mul_const(total, 1.0 / static_cast<double>(samples.size()));
}

inline void read_leaf_grads(const ad::Tape& tape, const TapeLeaves& leaves,
                            ChillSource source, std::vector<double>& out) {
  std::size_t k = 0;
  auto append = [&](ad::Tape::Id id) {
    const auto g = tape.grad(id);
    std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(k));
    k += g.size();
  };
  if (source == ChillSource::Mlp) {
    append(leaves.theta_w1);
    append(leaves.theta_b1);
    append(leaves.theta_w2);
    append(leaves.theta_b2);
    append(leaves.theta_w3);
    append(leaves.theta_b3);
  }
  append(leaves.beta_c);
  append(leaves.beta_f);
  append(leaves.tb);
  append(leaves.s);
}

inline GroupTrain train_group(const std::string& key,
                              std::span<const SamplePre> samples,
                              std::uint64_t init_seed, const TrainConfig& cfg,
                              ChillSource source) {
  HybridParams params;
  params.chill_source = source;
  params.normalize_mlp_input = cfg.normalize_mlp_input;
  params.chill_inflection = cfg.init_chill_inflection;
  params.forcing_inflection = cfg.init_forcing_inflection;
  params.base_temp = cfg.init_base_temp;
  params.forcing_scale = cfg.init_forcing_scale;
  if (source == ChillSource::Mlp) {
    params.mlp.init(mix_seed(init_seed, key));
  }

  const std::size_t n_theta = source == ChillSource::Mlp ? MlpChill::kThetaSize : 0;
  std::vector<double> flat = flatten(params);
  std::vector<double> grads(flat.size());
  std::vector<unsigned char> decay_mask(flat.size(), 0);
  for (std::size_t i = 0; i < n_theta; ++i) decay_mask[i] = 1;
  if (cfg.decay_phi) {
    for (std::size_t i = n_theta; i < flat.size(); ++i) decay_mask[i] = 1;
  }

  ad::AdamState state(flat.size());
  ad::AdamHyper hyper;
  hyper.beta1 = cfg.adam_beta1;
  hyper.beta2 = cfg.adam_beta2;
  hyper.eps = cfg.adam_eps;
  hyper.weight_decay = cfg.weight_decay;

  GroupTrain out;
  out.n_samples = static_cast<int>(samples.size());
  if (cfg.record_trace) out.trace.reserve(static_cast<std::size_t>(cfg.epochs));

  ad::Tape tape;
  double loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    tape.clear();
    TapeLeaves leaves;
    const ad::Tape::Id mean_loss =
        build_group_loss(tape, flat, samples, source, leaves);
    loss = tape.scalar(mean_loss);
    if (!std::isfinite(loss)) {
      throw DivergenceError(epoch, key, flat, "mean loss is not finite");
    }
    tape.backward(mean_loss);
    read_leaf_grads(tape, leaves, source, grads);
    hyper.lr = lr_for_epoch(cfg, epoch);
    try {
      ad::adam_step(flat, grads, state, hyper, decay_mask);
    } catch (const Error& e) {
      throw DivergenceError(epoch, key, flat, e.what());
    }
    project(flat, n_theta);
    if (cfg.record_trace) out.trace.push_back({epoch, loss, hyper.lr});
  }
  unflatten(flat, params);
  out.params = params;
  out.final_loss = loss;
  return out;
}

inline std::vector<SamplePre> prepare_samples(const Dataset& data,
                                              std::span<const std::size_t> idxs,
                                              const TrainConfig& cfg,
                                              ChillSource source) {
  std::vector<SamplePre> pre(idxs.size());
  for (std::size_t k = 0; k < idxs.size(); ++k) {
    const Sample& s = data.samples()[idxs[k]];
    SamplePre& sp = pre[k];
    sp.series = &s.series;
    sp.observed = s.bloom.bloom_day;
    const int y = sp.observed;
    if (source == ChillSource::Mlp && cfg.normalize_mlp_input) {
      sp.mlp_input.resize(static_cast<std::size_t>(y) * kHoursPerDay);
      for (std::size_t i = 0; i < sp.mlp_input.size(); ++i) {
        sp.mlp_input[i] = s.series.data()[i] / MlpChill::kMlpInputScale;
      }
    }
    if (source == ChillSource::UtahScaled) {
      sp.chill_norm.resize(static_cast<std::size_t>(y));
      const double inv_len = 1.0 / static_cast<double>(s.series.length());
      double acc = 0.0;
      for (int t = 1; t <= y; ++t) {
        acc += std::max(0.0, utah_chill(s.series.day(t))) /
               (kHoursPerDay * tables::kUtahMaxWeight);
        sp.chill_norm[t - 1] = acc * inv_len;
      }
    }
  }
  return pre;
}

inline TrainResult train_impl(const Dataset& train_data, std::uint64_t init_seed,
                              const TrainConfig& cfg, Grouping grouping,
                              ChillSource source) {
  if (train_data.empty()) throw Error("train: empty training set");
  cfg.validate();

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train_data.samples().size(); ++i) {
    groups[group_key(train_data, train_data.samples()[i], grouping)].push_back(i);
  }

  std::vector<const std::string*> keys;
  keys.reserve(groups.size());
  for (const auto& [key, _] : groups) keys.push_back(&key);

  std::vector<GroupTrain> results(keys.size());
  parallel_for(keys.size(), cfg.jobs, [&](std::size_t gi) {
    const std::string& key = *keys[gi];
    const auto pre = prepare_samples(train_data, groups.at(key), cfg, source);
    results[gi] = train_group(key, pre, init_seed, cfg, source);
  });

  TrainResult out;
  for (std::size_t gi = 0; gi < keys.size(); ++gi) {
    out.groups.emplace(*keys[gi], std::move(results[gi]));
  }
  return out;
}

}  // namespace detail

inline TrainResult train(const Dataset& train_data, std::uint64_t init_seed,
                         const TrainConfig& cfg, Grouping grouping) {
  return detail::train_impl(train_data, init_seed, cfg, grouping, ChillSource::Mlp);
}

inline TrainResult train_ablation_utah(const Dataset& train_data,
                                       std::uint64_t init_seed,
                                       const TrainConfig& cfg, Grouping grouping) {
  return detail::train_impl(train_data, init_seed, cfg, grouping,
                            ChillSource::UtahScaled);
}

}  // namespace pheno
