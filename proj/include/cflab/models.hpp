#pragma once

// Car-following laws (GHR, Gipps, IDM, FVD, Wiedemann 99), their parameter
// vectors and calibration bounds.
//
// Sign convention used throughout: dv_closing = v_fv - v_lv (positive when the
// follower approaches), dv_opening = v_lv - v_fv.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cflab/error.hpp"

namespace cflab {

struct ParamSpec {
  std::string_view name;
  std::string_view unit;
  std::string_view description;
  double lower;
  double upper;
  double median;  // reference value used as synthetic ground truth
};

/// Kinematic state seen by a law. The *_delayed fields hold the state at
/// t - tau for models with a reaction time; otherwise they mirror the current
/// state.
struct ModelInput {
  double v_fv = 0.0;      // m/s
  double v_lv = 0.0;      // m/s
  double gap = 0.0;       // m, net spacing S
  double dx = 0.0;        // m, space headway = gap + lv_length
  double lv_accel = 0.0;  // m/s^2
  double v_fv_delayed = 0.0;
  double v_lv_delayed = 0.0;
  double dx_delayed = 0.0;

  double lv_length() const { return dx - gap; }
  double dv_closing() const { return v_fv - v_lv; }
  double dv_opening() const { return v_lv - v_fv; }
  double dv_opening_delayed() const { return v_lv_delayed - v_fv_delayed; }

  static ModelInput current(double v_fv, double v_lv, double gap, double lv_length,
                            double lv_accel = 0.0) {
    ModelInput in{v_fv, v_lv, gap, gap + lv_length, lv_accel, 0, 0, 0};
    in.v_fv_delayed = v_fv;
    in.v_lv_delayed = v_lv;
    in.dx_delayed = in.dx;
    return in;
  }
};

// ---------------------------------------------------------------------------
// Parameter vectors

struct GhrParams {
  double alpha = 0;  // sensitivity constant
  double beta = 0;   // FV-speed exponent
  double gamma = 0;  // headway exponent
  double tau = 0;    // reaction time, s

  static constexpr std::string_view kName = "ghr";
  static constexpr std::array<ParamSpec, 4> kSpecs{{
      {"alpha", "-", "Constant sensitivity coefficient", 0, 60, 8.3527},
      {"beta", "-", "Sensitivity to FV speed", -10, 10, 0.5891},
      {"gamma", "-", "Sensitivity to space headway", 0, 10, 1.5047},
      {"tau", "s", "Reaction time", 0.3, 3, 0.5},
  }};
  static GhrParams from_genome(std::span<const double> g) { return {g[0], g[1], g[2], g[3]}; }
  std::vector<double> to_genome() const { return {alpha, beta, gamma, tau}; }
  double reaction_time() const { return tau; }
};

struct GippsParams {
  double a_des = 0;  // max desired acceleration, m/s^2
  double b_des = 0;  // max desired deceleration (magnitude), m/s^2
  double s_eff = 0;  // effective LV length, m
  double b_hat = 0;  // estimated LV deceleration (magnitude), m/s^2
  double v_des = 0;  // desired speed, km/h
  double tau = 0;    // reaction time, s

  static constexpr std::string_view kName = "gipps";
  static constexpr std::array<ParamSpec, 6> kSpecs{{
      {"a_des", "m/s^2", "Maximum desired acceleration of FV", 0.1, 5, 0.8563},
      {"b_des", "m/s^2", "Maximum desired deceleration of FV", 0.1, 5, 1.1379},
      {"s_eff", "m", "Effective length of LV", 5, 15, 5.4207},
      {"b_hat", "m/s^2", "Maximum desired deceleration of LV", 0.1, 5, 1.0361},
      {"v_des", "km/h", "Desired speed of FV", 1, 150, 83.2725},
      {"tau", "s", "Reaction time", 0.3, 3, 1.2},
  }};
  static GippsParams from_genome(std::span<const double> g) {
    return {g[0], g[1], g[2], g[3], g[4], g[5]};
  }
  std::vector<double> to_genome() const { return {a_des, b_des, s_eff, b_hat, v_des, tau}; }
  double reaction_time() const { return tau; }
};

struct IdmParams {
  double a_max = 0;   // m/s^2
  double v_des = 0;   // km/h
  double beta = 0;    // acceleration exponent
  double b_comf = 0;  // comfortable deceleration (magnitude), m/s^2
  double s_jam = 0;   // standstill gap, m
  double t_des = 0;   // desired time headway, s

  static constexpr std::string_view kName = "idm";
  static constexpr std::array<ParamSpec, 6> kSpecs{{
      {"a_max", "m/s^2", "Maximum acceleration/deceleration of FV", 0.1, 5, 0.8088},
      {"v_des", "km/h", "Desired speed of FV", 1, 150, 101.9284},
      {"beta", "-", "Acceleration exponent", 1, 40, 1.5},
      {"b_comf", "m/s^2", "Comfortable deceleration of FV", 0.1, 5, 0.6123},
      {"s_jam", "m", "Gap at standstill", 0.1, 10, 1.3812},
      {"t_des", "s", "Desired time headway of FV", 0.1, 5, 0.9459},
  }};
  static IdmParams from_genome(std::span<const double> g) {
    return {g[0], g[1], g[2], g[3], g[4], g[5]};
  }
  std::vector<double> to_genome() const { return {a_max, v_des, beta, b_comf, s_jam, t_des}; }
  double reaction_time() const { return 0.0; }
};

struct FvdParams {
  double alpha = 0;    // sensitivity, 1/s
  double lambda0 = 0;  // relative-speed sensitivity
  double v0 = 0;       // desired speed, km/h
  double b_len = 0;    // interaction length, m
  double beta = 0;     // form factor
  double s_c = 0;      // max following distance, m

  static constexpr std::string_view kName = "fvd";
  static constexpr std::array<ParamSpec, 6> kSpecs{{
      {"alpha", "1/s", "Constant sensitivity coefficient", 0.05, 20, 0.05},
      {"lambda0", "-", "Sensitivity to relative speed", 0, 3, 0.6402},
      {"v0", "km/h", "Desired speed of FV", 1, 252, 100.7714},
      {"b_len", "m", "Interaction length", 0.1, 100, 16.6407},
      {"beta", "-", "Form factor", 0.1, 10, 0.7802},
      {"s_c", "m", "Max following distance", 10, 120, 42.3362},
  }};
  static FvdParams from_genome(std::span<const double> g) {
    return {g[0], g[1], g[2], g[3], g[4], g[5]};
  }
  std::vector<double> to_genome() const { return {alpha, lambda0, v0, b_len, beta, s_c}; }
  double reaction_time() const { return 0.0; }
};

struct W99Params {
  double cc0 = 0;    // standstill gap, m
  double cc1 = 0;    // headway time, s
  double cc2 = 0;    // following variation, m
  double cc3 = 0;    // threshold for entering following, s
  double cc4 = 0;    // negative following threshold, m/s
  double cc5 = 0;    // positive following threshold, m/s
  double cc6 = 0;    // speed dependency of oscillation, 1e-4 rad/s
  double cc7 = 0;    // oscillation acceleration, m/s^2
  double cc8 = 0;    // standstill acceleration, m/s^2
  double cc9 = 0;    // acceleration at 80 km/h, m/s^2
  double v_des = 0;  // desired speed, km/h

  static constexpr std::string_view kName = "w99";
  static constexpr std::array<ParamSpec, 11> kSpecs{{
      {"cc0", "m", "Standstill gap", 0, 20, 0.6306},
      {"cc1", "s", "Headway time", 0, 5, 1.3750},
      {"cc2", "m", "'Following' variation", 0, 10, 5.2325},
      {"cc3", "s", "Threshold for entering 'following'", -20, 0, -19.4882},
      {"cc4", "m/s", "Negative 'following' threshold", -5, 0, -0.1215},
      {"cc5", "m/s", "Positive 'following' threshold", 0.1, 5, 1.2263},
      {"cc6", "1e-4 rad/s", "Speed dependency of oscillation", 0.1, 20, 1.9640},
      {"cc7", "m/s^2", "Oscillation acceleration", -1, 1, 0.5379},
      {"cc8", "m/s^2", "Standstill acceleration", 0, 8, 3.9712},
      {"cc9", "m/s^2", "Acceleration at 80 km/h", 0, 8, 0.6971},
      {"v_des", "km/h", "Desired speed of FV", 1, 150, 81.1745},
  }};
  static W99Params from_genome(std::span<const double> g) {
    return {g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], g[8], g[9], g[10]};
  }
  std::vector<double> to_genome() const {
    return {cc0, cc1, cc2, cc3, cc4, cc5, cc6, cc7, cc8, cc9, v_des};
  }
  double reaction_time() const { return 0.0; }
};

template <class P>
concept CarFollowingParams = requires(const P& p, std::span<const double> g) {
  { P::kName } -> std::convertible_to<std::string_view>;
  P::kSpecs;
  { P::from_genome(g) } -> std::same_as<P>;
  { p.to_genome() } -> std::same_as<std::vector<double>>;
  { p.reaction_time() } -> std::convertible_to<double>;
};

template <CarFollowingParams P>
P median_params() {
  std::vector<double> g;
  for (const auto& s : P::kSpecs) g.push_back(s.median);
  return P::from_genome(g);
}

template <CarFollowingParams P>
bool within_bounds(const P& p) {
  const auto g = p.to_genome();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] >= P::kSpecs[i].lower && g[i] <= P::kSpecs[i].upper)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// GHR

// Floor on the follower speed inside v^beta when beta < 0, keeps the law finite
// at standstill.
inline constexpr double kGhrMinSpeed = 0.1;

/// alpha * v^beta * dv_opening(t - tau) / dx(t - tau)^gamma
inline double ghr_accel(const ModelInput& in, const GhrParams& p) {
  if (!(in.dx_delayed > 0)) throw ModelDomainError("GHR: non-positive delayed space headway");
  const double stimulus = in.dv_opening_delayed();
  if (stimulus == 0.0) return 0.0;
  const double v = p.beta < 0 ? std::max(in.v_fv, kGhrMinSpeed) : in.v_fv;
  return p.alpha * std::pow(v, p.beta) * stimulus / std::pow(in.dx_delayed, p.gamma);
}

// ---------------------------------------------------------------------------
// Gipps

struct GippsSpeed {
  double speed = 0.0;      // m/s at t + tau, floored at 0
  double free_branch = 0.0;
  double following_branch = 0.0;
  bool infeasible_safe_speed = false;  // negative radicand in the following branch
};

/// Speed at t + tau. Both branches read the *_delayed fields, which hold the
/// state at the decision time t.
inline GippsSpeed gipps_speed(const ModelInput& in, const GippsParams& p) {
  if (!(in.dx_delayed > 0)) throw ModelDomainError("Gipps: non-positive space headway");
  const double vdes = kmh_to_mps(p.v_des);
  const double v = in.v_fv_delayed;
  GippsSpeed out;
  out.free_branch = v + 2.5 * p.a_des * p.tau * (1.0 - v / vdes) * std::sqrt(0.025 + v / vdes);

  const double bt = p.b_des * p.tau;
  const double radicand =
      bt * bt + p.b_des * (2.0 * (in.dx_delayed - p.s_eff) - in.v_fv_delayed * p.tau +
                           in.v_lv_delayed * in.v_lv_delayed / p.b_hat);
  if (radicand < 0) {
    out.infeasible_safe_speed = true;
    out.following_branch = 0.0;
    out.speed = 0.0;
    return out;
  }
  out.following_branch = -bt + std::sqrt(radicand);
  out.speed = std::max(0.0, std::min(out.free_branch, out.following_branch));
  return out;
}

// ---------------------------------------------------------------------------
// IDM

/// s_jam + max(0, v*T + v*dv_closing / (2 sqrt(a_max b_comf))); the desired gap
/// grows while closing in.
inline double idm_desired_gap(double v_fv, double dv_closing, const IdmParams& p) {
  const double dynamic =
      v_fv * p.t_des + v_fv * dv_closing / (2.0 * std::sqrt(p.a_max * p.b_comf));
  return p.s_jam + std::max(0.0, dynamic);
}

inline double idm_accel(const ModelInput& in, const IdmParams& p) {
  if (!(in.gap > 0)) throw ModelDomainError("IDM: non-positive gap");
  const double desired = idm_desired_gap(in.v_fv, in.dv_closing(), p);
  const double ratio = desired / in.gap;
  return p.a_max * (1.0 - std::pow(in.v_fv / kmh_to_mps(p.v_des), p.beta) - ratio * ratio);
}

// ---------------------------------------------------------------------------
// FVD

inline double fvd_optimal_velocity(double dx, double lv_length, const FvdParams& p) {
  if (p.b_len == 0.0) throw ModelDomainError("FVD: zero interaction length");
  const double v = 0.5 * kmh_to_mps(p.v0) *
                   (std::tanh((dx - lv_length) / p.b_len - p.beta) - std::tanh(-p.beta));
  return std::max(0.0, v);
}

inline double fvd_accel(const ModelInput& in, const FvdParams& p) {
  const double lambda = in.dx <= p.s_c ? p.lambda0 : 0.0;
  return p.alpha * (fvd_optimal_velocity(in.dx, in.lv_length(), p) - in.v_fv) +
         lambda * in.dv_opening();
}

// ---------------------------------------------------------------------------
// Wiedemann 99

enum class W99Regime { free, closing, following, emergency };

inline std::string_view to_string(W99Regime r) {
  switch (r) {
    case W99Regime::free: return "FREE";
    case W99Regime::closing: return "CLOSING";
    case W99Regime::following: return "FOLLOWING";
    case W99Regime::emergency: return "EMERGENCY";
  }
  return "?";
}

struct W99Thresholds {
  double sdxc = 0;  // minimum safe following distance, m
  double sdxo = 0;  // maximum following distance, m
  double sdxv = 0;  // distance at which an approach is perceived, m
  double sdv = 0;   // speed-difference perception threshold, m/s
  double cldv = 0;  // closing threshold, m/s
  double opdv = 0;  // opening threshold, m/s
};

inline constexpr double kW99MaxDeceleration = 8.0;      // m/s^2
inline constexpr double kW99ReferenceSpeed = 80.0 / 3.6;  // m/s, where cc9 applies

/// Perception thresholds. Distances use the net gap; dV = v_lv - v_fv.
inline W99Thresholds w99_thresholds(const ModelInput& in, const W99Params& p, double rnd) {
  const double dx = in.gap;
  const double dv = in.dv_opening();
  const double v_slower = (dv > 0 || in.lv_accel < -1.0) ? in.v_fv : in.v_lv - dv * rnd;
  W99Thresholds th;
  th.sdxc = p.cc0 + p.cc1 * v_slower;
  const double l = in.lv_length();
  th.sdv = p.cc6 * 1e-4 * (dx - l) * (dx - l);
  th.sdxo = th.sdxc + p.cc2;
  th.sdxv = th.sdxo + p.cc3 * (dv - p.cc4);
  th.cldv = in.v_lv > 0 ? -th.sdv + p.cc4 : 0.0;
  th.opdv = in.v_fv > p.cc5 ? th.sdv + p.cc5 : th.sdv;
  return th;
}

/// Boundaries go to the less aggressive regime; emergency strictly below SDXc.
inline W99Regime w99_regime(double gap, double dv_opening, const W99Thresholds& th) {
  if (gap < th.sdxc) return W99Regime::emergency;
  if (dv_opening < th.cldv && gap < th.sdxv) return W99Regime::closing;
  if (gap < th.sdxo && dv_opening < th.opdv) return W99Regime::following;
  return W99Regime::free;
}

/// Acceleration cap interpolated linearly from cc8 at standstill to cc9 at 80 km/h.
inline double w99_accel_cap(double v_fv, const W99Params& p) {
  const double frac = std::min(std::max(v_fv, 0.0), kW99ReferenceSpeed) / kW99ReferenceSpeed;
  return p.cc8 + (p.cc9 - p.cc8) * frac;
}

struct W99Step {
  double accel = 0.0;
  W99Regime regime = W99Regime::free;
  W99Thresholds thresholds;
};

inline W99Step w99_evaluate(const ModelInput& in, const W99Params& p, double rnd,
                            int oscillation_sign) {
  W99Step out;
  out.thresholds = w99_thresholds(in, p, rnd);
  const auto& th = out.thresholds;
  const double dx = in.gap;
  const double dv = in.dv_opening();
  const double v = in.v_fv;
  out.regime = w99_regime(dx, dv, th);

  double a = 0.0;
  switch (out.regime) {
    case W99Regime::free:
      a = std::min(w99_accel_cap(v, p), kmh_to_mps(p.v_des) - v);
      break;
    case W99Regime::following:
      a = (oscillation_sign >= 0 ? 1.0 : -1.0) * p.cc7;
      break;
    case W99Regime::closing:
      // null the speed difference by the time the gap shrinks to SDXc
      a = in.lv_accel + 0.5 * dv * dv / (th.sdxc - dx - 0.1);
      a = std::min(a, w99_accel_cap(v, p));
      break;
    case W99Regime::emergency:
      if (dv < 0) {
        a = dx > p.cc0 ? in.lv_accel + dv * dv / (p.cc0 - dx) : in.lv_accel + 0.5 * (dv - th.opdv);
      }
      a = std::min(a, -std::abs(p.cc7));
      break;
  }
  out.accel = std::max(a, -kW99MaxDeceleration);
  return out;
}

inline double w99_accel(const ModelInput& in, const W99Params& p, double rnd,
                        int prev_oscillation_sign) {
  return w99_evaluate(in, p, rnd, prev_oscillation_sign).accel;
}

// ---------------------------------------------------------------------------
// Registry

enum class ModelKind { ghr, gipps, idm, fvd, w99 };

using AnyParams = std::variant<GhrParams, GippsParams, IdmParams, FvdParams, W99Params>;

inline constexpr std::array<ModelKind, 5> kAllModels{ModelKind::ghr, ModelKind::gipps,
                                                     ModelKind::idm, ModelKind::fvd,
                                                     ModelKind::w99};

template <class F>
decltype(auto) visit_model(ModelKind kind, F&& f) {
  switch (kind) {
    case ModelKind::ghr: return f(GhrParams{});
    case ModelKind::gipps: return f(GippsParams{});
    case ModelKind::idm: return f(IdmParams{});
    case ModelKind::fvd: return f(FvdParams{});
    case ModelKind::w99: return f(W99Params{});
  }
  throw InputError("unknown model");
}

inline std::string_view model_name(ModelKind kind) {
  return visit_model(kind, [](auto p) { return std::string_view(decltype(p)::kName); });
}

inline ModelKind model_from_name(std::string_view name) {
  for (auto k : kAllModels) {
    if (model_name(k) == name) return k;
  }
  throw InputError("unknown model '" + std::string(name) + "' (expected ghr, gipps, idm, fvd, w99)");
}

inline std::span<const ParamSpec> param_specs(ModelKind kind) {
  return visit_model(kind, [](auto p) {
    return std::span<const ParamSpec>(decltype(p)::kSpecs);
  });
}

inline ModelKind kind_of(const AnyParams& p) { return static_cast<ModelKind>(p.index()); }

inline AnyParams params_from_genome(ModelKind kind, std::span<const double> genome) {
  if (genome.size() != param_specs(kind).size()) {
    throw InputError("genome length " + std::to_string(genome.size()) + " does not match model '" +
                     std::string(model_name(kind)) + "'");
  }
  return visit_model(kind, [&](auto p) { return AnyParams(decltype(p)::from_genome(genome)); });
}

inline std::vector<double> genome_of(const AnyParams& p) {
  return std::visit([](const auto& q) { return q.to_genome(); }, p);
}

inline AnyParams median_params(ModelKind kind) {
  return visit_model(kind, [](auto p) { return AnyParams(median_params<decltype(p)>()); });
}

inline bool within_bounds(const AnyParams& p) {
  return std::visit([](const auto& q) { return within_bounds(q); }, p);
}

}  // namespace cflab
