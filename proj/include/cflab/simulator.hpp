#pragma once

// Fixed-step replay of a car-following period: the lead vehicle follows its
// recorded trajectory, the follower is driven by a car-following law and
// integrated with forward Euler.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "cflab/error.hpp"
#include "cflab/models.hpp"
#include "cflab/trajectory.hpp"

namespace cflab {

enum class W99RndMode { per_step, frozen_zero };

struct SimConfig {
  double dt = 0.1;                   // s
  double collision_threshold = 0.0;  // m, gap <= threshold is a collision
  std::uint64_t rng_seed = 0;        // W99 RND stream
  W99RndMode w99_rnd_mode = W99RndMode::per_step;

  /// Number of integration steps per 0.1 s sample.
  std::size_t substeps() const {
    if (!(dt > 0)) throw InputError("dt must be positive");
    const double n = std::round(kSampleInterval / dt);
    if (n < 1 || std::abs(n * dt - kSampleInterval) > 1e-9) {
      throw InputError("dt must divide the 0.1 s sample spacing");
    }
    return static_cast<std::size_t>(n);
  }
};

struct SimResult {
  std::vector<double> t;
  std::vector<double> sim_fv_speed;
  std::vector<double> sim_gap;
  std::vector<double> accel;           // acceleration applied from each sample onwards
  std::vector<W99Regime> regime;       // W99 only, empty otherwise
  bool collided = false;
  std::optional<double> collision_time;
  bool truncated = false;              // the law failed and the run was cut short
};

struct CollisionCheck {
  bool collided = false;
  std::optional<double> time;
};

/// First sample whose gap is at or below the threshold.
inline CollisionCheck detect_collision(std::span<const double> t, std::span<const double> gap,
                                       double threshold) {
  for (std::size_t i = 0; i < gap.size(); ++i) {
    if (gap[i] <= threshold) return {true, t[i]};
  }
  return {};
}

inline CollisionCheck detect_collision(const SimResult& r, double threshold) {
  return detect_collision(r.t, r.sim_gap, threshold);
}

/// Reaction time in integration steps, rounded to nearest with ties upward.
inline std::size_t delay_steps(double tau, double dt) {
  return static_cast<std::size_t>(std::floor(tau / dt + 0.5 + 1e-9));
}

struct KinematicState {
  double v_fv = 0.0;
  double v_lv = 0.0;
  double dx = 0.0;
};

/// Per-step record of the simulated follower and replayed leader, used to
/// look up delayed stimuli.
class StateHistory {
 public:
  void push(const KinematicState& s) { states_.push_back(s); }
  std::size_t size() const { return states_.size(); }

  /// State at step - delay; the first state stands in before the delay has
  /// elapsed.
  const KinematicState& delayed(std::size_t step, std::size_t delay) const {
    return states_[step >= delay ? step - delay : 0];
  }

 private:
  std::vector<KinematicState> states_;
};

/// Delayed fields of the model input for time t (multiple of dt) and reaction time tau.
inline KinematicState delayed_input(const StateHistory& history, double t, double tau, double dt) {
  const auto step = static_cast<std::size_t>(std::llround(t / dt));
  return history.delayed(step, delay_steps(tau, dt));
}

/// Lead-vehicle rear-bumper positions in the follower's frame: the observed
/// follower position is Euler-integrated from its speed on the 0.1 s grid and
/// the gap added.
inline std::vector<double> replay_lead_positions(const CarFollowingPeriod& period) {
  std::vector<double> lv(period.samples.size());
  double fv_pos = 0.0;
  for (std::size_t k = 0; k < period.samples.size(); ++k) {
    lv[k] = fv_pos + period.samples[k].gap;
    if (k + 1 < period.samples.size()) {
      fv_pos += period.samples[k].fv_speed * kSampleInterval;
    }
  }
  return lv;
}

/// Mutable per-run state handed to the acceleration laws.
struct LawContext {
  std::mt19937_64 rng;
  W99RndMode rnd_mode = W99RndMode::per_step;
  int oscillation_sign = 1;
  W99Regime last_regime = W99Regime::free;
  double dt = 0.1;
};

namespace detail {

/// Uniform draw in [-0.5, 0.5) from the top 53 bits of a 64-bit generator.
inline double w99_rnd(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
}

inline double step_accel(const GhrParams& p, const ModelInput& in, LawContext&) {
  return ghr_accel(in, p);
}

// Gipps yields the speed at t + tau from the state at t. The delayed fields
// hold the state one reaction time before the end of this step, so the
// returned acceleration lands exactly on that speed.
inline double step_accel(const GippsParams& p, const ModelInput& in, LawContext& ctx) {
  return (gipps_speed(in, p).speed - in.v_fv) / ctx.dt;
}

inline double step_accel(const IdmParams& p, const ModelInput& in, LawContext&) {
  return idm_accel(in, p);
}

inline double step_accel(const FvdParams& p, const ModelInput& in, LawContext&) {
  return fvd_accel(in, p);
}

inline double step_accel(const W99Params& p, const ModelInput& in, LawContext& ctx) {
  const double rnd = ctx.rnd_mode == W99RndMode::per_step ? w99_rnd(ctx.rng) : 0.0;
  const auto step = w99_evaluate(in, p, rnd, ctx.oscillation_sign);
  // the oscillation direction only changes outside the following regime
  if (step.regime != W99Regime::following) ctx.oscillation_sign = step.accel > 0 ? 1 : -1;
  ctx.last_regime = step.regime;
  return step.accel;
}

}  // namespace detail

/// Replays `period` with the follower driven by the law selected by `P`.
/// Parameter types outside the registry plug in by providing
/// `double step_accel(const P&, const ModelInput&, LawContext&)` in their namespace.
/// The run continues after a collision; a law failure (or a non-finite
/// acceleration) truncates it, holding the last state, and marks it collided.
template <CarFollowingParams P>
SimResult simulate_period(const P& params, const CarFollowingPeriod& period, const SimConfig& cfg = {}) {
  const auto& obs = period.samples;
  const std::size_t n = obs.size();
  if (n == 0) throw InputError("cannot simulate an empty period");
  const std::size_t sub = cfg.substeps();
  const double dt = cfg.dt;
  const auto lv_pos = replay_lead_positions(period);
  const double lv_length = period.lv_length;
  std::size_t delay = params.reaction_time() > 0 ? delay_steps(params.reaction_time(), dt) : 0;
  if constexpr (std::is_same_v<P, GippsParams>) delay = delay > 0 ? delay - 1 : 0;
  constexpr bool kIsW99 = std::is_same_v<P, W99Params>;

  SimResult r;
  r.t.resize(n);
  r.sim_fv_speed.resize(n);
  r.sim_gap.resize(n);
  r.accel.assign(n, 0.0);
  if constexpr (kIsW99) r.regime.assign(n, W99Regime::free);

  LawContext ctx{std::mt19937_64(cfg.rng_seed), cfg.w99_rnd_mode, 1, W99Regime::free, dt};
  if (obs[0].lv_speed < obs[0].fv_speed) ctx.oscillation_sign = -1;

  StateHistory history;
  double x = 0.0;
  double v = obs[0].fv_speed;
  std::size_t step = 0;

  for (std::size_t k = 0; k < n; ++k) {
    r.t[k] = obs[k].t;
    const bool last = k + 1 == n;
    const double lv_accel =
        last ? (n > 1 ? (obs[k].lv_speed - obs[k - 1].lv_speed) / kSampleInterval : 0.0)
             : (obs[k + 1].lv_speed - obs[k].lv_speed) / kSampleInterval;
    for (std::size_t s = 0; s < (last ? 1 : sub); ++s, ++step) {
      const double w = static_cast<double>(s) / static_cast<double>(sub);
      const double lv_x = last ? lv_pos[k] : lv_pos[k] + w * (lv_pos[k + 1] - lv_pos[k]);
      const double v_lv = last ? obs[k].lv_speed : obs[k].lv_speed + w * (obs[k + 1].lv_speed - obs[k].lv_speed);
      const double gap = lv_x - x;
      if (s == 0) {
        r.sim_fv_speed[k] = v;
        r.sim_gap[k] = gap;
        if (!r.collided && gap <= cfg.collision_threshold) {
          r.collided = true;
          r.collision_time = obs[k].t;
        }
      }
      history.push({v, v_lv, gap + lv_length});
      if (last) break;

      const auto& past = history.delayed(step, delay);
      ModelInput in{v, v_lv, gap, gap + lv_length, lv_accel, past.v_fv, past.v_lv, past.dx};
      double a = 0.0;
      bool failed = false;
      try {
        using detail::step_accel;
        a = step_accel(params, in, ctx);  // found by argument-dependent lookup for other parameter types
        failed = !std::isfinite(a);
      } catch (const ModelDomainError&) {
        failed = true;
      }
      if (failed) {
        r.truncated = true;
        if (!r.collided) {
          r.collided = true;
          r.collision_time = obs[k].t;
        }
        for (std::size_t m = k + 1; m < n; ++m) {
          r.t[m] = obs[m].t;
          r.sim_fv_speed[m] = r.sim_fv_speed[k];
          r.sim_gap[m] = r.sim_gap[k];
        }
        return r;
      }
      if (s == 0) {
        r.accel[k] = a;
        if constexpr (kIsW99) r.regime[k] = ctx.last_regime;
      }
      const double v_next = std::max(0.0, v + a * dt);
      x += v * dt;
      v = v_next;
    }
  }
  return r;
}

inline SimResult simulate_period(const AnyParams& params, const CarFollowingPeriod& period,
                                 const SimConfig& cfg = {}) {
  return std::visit([&](const auto& p) { return simulate_period(p, period, cfg); }, params);
}

/// Trace dump: t_s,sim_v_mps,obs_v_mps,sim_gap_m,obs_gap_m,accel_mps2,regime
inline void write_trace(std::ostream& out, const SimResult& r, const CarFollowingPeriod& period) {
  out << "t_s,sim_v_mps,obs_v_mps,sim_gap_m,obs_gap_m,accel_mps2,regime\n";
  char buf[64];
  auto num = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, p - buf);
  };
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    num(r.t[k]);
    out << ',';
    num(r.sim_fv_speed[k]);
    out << ',';
    num(period.samples[k].fv_speed);
    out << ',';
    num(r.sim_gap[k]);
    out << ',';
    num(period.samples[k].gap);
    out << ',';
    num(r.accel[k]);
    out << ',';
    if (!r.regime.empty()) out << to_string(r.regime[k]);
    out << '\n';
  }
}

/// Builds a period whose follower is the simulated one, keeping the recorded
/// leader. Used to generate synthetic ground truth.
inline CarFollowingPeriod synthesize_period(const SimResult& r, const CarFollowingPeriod& seed,
                                            std::string period_id = {}) {
  CarFollowingPeriod out = seed;
  if (!period_id.empty()) out.period_id = std::move(period_id);
  for (std::size_t k = 0; k < out.samples.size(); ++k) {
    out.samples[k].fv_speed = r.sim_fv_speed[k];
    out.samples[k].gap = r.sim_gap[k];
  }
  return out;
}

}  // namespace cflab
