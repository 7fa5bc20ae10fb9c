#pragma once

// Built-in leader trajectories for synthetic experiments.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cflab/models.hpp"
#include "cflab/simulator.hpp"
#include "cflab/trajectory.hpp"

namespace cflab {

/// A period whose recorded follower drives at constant `fv_speed` behind a
/// leader with speed profile `lv_speed(t)`. The gap is integrated on the
/// 0.1 s grid, so the replayed leader moves exactly with the given profile.
inline CarFollowingPeriod period_from_leader(const std::function<double(double)>& lv_speed, double duration,
                                             double fv_speed, double initial_gap, std::string period_id,
                                             double lv_length = kDefaultLvLength) {
  CarFollowingPeriod p;
  p.period_id = std::move(period_id);
  p.lv_length = lv_length;
  const auto n = static_cast<std::size_t>(std::llround(duration / kSampleInterval)) + 1;
  double gap = initial_gap;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * kSampleInterval;
    const double vl = std::max(0.0, lv_speed(t));
    p.samples.push_back({t, fv_speed, gap, vl, 1, 0.0});
    gap += (vl - fv_speed) * kSampleInterval;
  }
  return p;
}

/// 60 s leader oscillating around 15 m/s (two superposed sines, +-6 m/s),
/// follower starting at the leader's speed 25 m behind.
inline CarFollowingPeriod varied_speed_period(double duration = 60.0, double phase = 0.0,
                                              std::string period_id = "varied") {
  auto lv = [phase](double t) {
    return 15.0 + 4.0 * std::sin(2 * std::numbers::pi * t / 25.0 + phase) +
           2.0 * std::sin(2 * std::numbers::pi * t / 9.0 + 2 * phase);
  };
  return period_from_leader(lv, duration, lv(0.0), 25.0, std::move(period_id));
}

/// Leader cruises at `speed`, brakes at `decel` to a stop after `cruise` s and
/// stays stopped for `stopped` s.
inline CarFollowingPeriod hard_stop_period(double speed = 15.0, double decel = 3.0, double cruise = 5.0,
                                           double stopped = 10.0, double initial_gap = 30.0,
                                           std::string period_id = "hard_stop") {
  const double brake = speed / decel;
  auto lv = [=](double t) { return t < cruise ? speed : std::max(0.0, speed - decel * (t - cruise)); };
  return period_from_leader(lv, cruise + brake + stopped, speed, initial_gap, std::move(period_id));
}

/// Leader cruises at `speed`, brakes at `decel` to a stop, waits, accelerates
/// at `accel` back to `speed` and cruises again.
inline CarFollowingPeriod stop_and_go_period(double speed, double fv_speed, double initial_gap, double cruise = 40.0,
                                             double decel = 2.0, double stopped = 20.0, double accel = 1.5,
                                             std::string period_id = "stop_and_go") {
  const double t_brake = speed / decel, t_accel = speed / accel;
  const double t1 = cruise, t2 = t1 + t_brake, t3 = t2 + stopped, t4 = t3 + t_accel;
  auto lv = [=](double t) {
    if (t < t1) return speed;
    if (t < t2) return speed - decel * (t - t1);
    if (t < t3) return 0.0;
    if (t < t4) return accel * (t - t3);
    return speed;
  };
  return period_from_leader(lv, t4 + cruise, fv_speed, initial_gap, std::move(period_id));
}

/// Steady-state IDM gap at speed v behind a leader at the same speed.
inline double idm_equilibrium_gap(double v, const IdmParams& p) {
  const double ratio = std::pow(v / kmh_to_mps(p.v_des), p.beta);
  if (!(ratio < 1)) throw InputError("no IDM equilibrium at or above the desired speed");
  return idm_desired_gap(v, 0.0, p) / std::sqrt(1 - ratio);
}

/// A continuous drive: each leader period is replayed with the follower
/// simulated by `truth`, and each is followed by `free_duration` s of free
/// driving at `free_speed` behind a distant target (gap `free_gap`). Every
/// period gets its own radar id; time runs on without gaps.
inline std::vector<TrajectorySample> synthetic_drive(const AnyParams& truth,
                                                     std::span<const CarFollowingPeriod> leaders,
                                                     double free_speed, double free_duration,
                                                     double free_gap = 150.0, const SimConfig& sim = {}) {
  std::vector<TrajectorySample> out;
  double t0 = 0.0;
  std::int64_t id = 1;
  for (const auto& leader : leaders) {
    const auto r = simulate_period(truth, leader, sim);
    const auto p = synthesize_period(r, leader);
    for (auto s : p.samples) {
      s.t = t0 + (s.t - leader.t_start());
      s.lv_id = id;
      out.push_back(s);
    }
    t0 = out.back().t + kSampleInterval;
    ++id;
    const auto n = static_cast<std::size_t>(std::llround(free_duration / kSampleInterval));
    for (std::size_t k = 0; k < n; ++k) {
      out.push_back({t0, free_speed, free_gap, free_speed, id, 0.0});
      t0 += kSampleInterval;
    }
    ++id;
  }
  // Re-derive times from indices so the series is an exact 0.1 s grid.
  for (std::size_t k = 0; k < out.size(); ++k) out[k].t = static_cast<double>(k) * kSampleInterval;
  return out;
}

}  // namespace cflab
