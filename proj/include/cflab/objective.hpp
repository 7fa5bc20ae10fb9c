#pragma once

// Goodness-of-fit measures and the calibration objective.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "cflab/error.hpp"
#include "cflab/simulator.hpp"

namespace cflab {

namespace detail {
inline void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("sequence length mismatch");
  if (x.empty()) throw InputError("empty sequence");
}
}  // namespace detail

/// sqrt(mean((x - y)^2))
inline double rmse(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(sum / static_cast<double>(x.size()));
}

/// sqrt(sum((sim - obs)^2) / sum(obs^2))
inline double rmspe(std::span<const double> sim, std::span<const double> obs) {
  detail::check_pair(sim, obs);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    num += (sim[i] - obs[i]) * (sim[i] - obs[i]);
    den += obs[i] * obs[i];
  }
  if (!(den > 0)) throw InputError("RMSPE undefined for an all-zero observation");
  return std::sqrt(num / den);
}

enum class Aggregation { pooled, mean_of_periods };

struct ObjectiveConfig {
  double crash_penalty = 1e4;
  Aggregation aggregation = Aggregation::pooled;
};

struct ErrorReport {
  double rmspe_spacing = 0.0;
  double rmspe_speed = 0.0;
  double rmse_spacing = 0.0;  // m
  std::size_t collided_count = 0;
  std::size_t n_periods = 0;
};

namespace detail {

struct PeriodResiduals {
  double gap_num = 0, gap_den = 0;
  double speed_num = 0, speed_den = 0;
  std::size_t n = 0;
  bool collided = false;
};

inline PeriodResiduals residuals(const SimResult& r, const CarFollowingPeriod& p) {
  PeriodResiduals out;
  for (std::size_t k = 0; k < p.samples.size(); ++k) {
    const double dg = r.sim_gap[k] - p.samples[k].gap;
    const double dv = r.sim_fv_speed[k] - p.samples[k].fv_speed;
    out.gap_num += dg * dg;
    out.gap_den += p.samples[k].gap * p.samples[k].gap;
    out.speed_num += dv * dv;
    out.speed_den += p.samples[k].fv_speed * p.samples[k].fv_speed;
  }
  out.n = p.samples.size();
  out.collided = r.collided;
  return out;
}

inline double safe_ratio(double num, double den) {
  if (!(den > 0)) throw InputError("RMSPE undefined for an all-zero observation");
  const double v = std::sqrt(num / den);
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

}  // namespace detail

/// Simulates each period and aggregates spacing/speed errors. Residual sums are
/// accumulated in period order.
inline ErrorReport evaluate_periods(const AnyParams& params, std::span<const CarFollowingPeriod> periods,
                                    const SimConfig& sim = {},
                                    Aggregation aggregation = Aggregation::pooled) {
  if (periods.empty()) throw InputError("no periods to evaluate");
  ErrorReport rep;
  rep.n_periods = periods.size();
  detail::PeriodResiduals total;
  double mean_gap = 0, mean_speed = 0;
  for (const auto& p : periods) {
    const auto res = detail::residuals(simulate_period(params, p, sim), p);
    total.gap_num += res.gap_num;
    total.gap_den += res.gap_den;
    total.speed_num += res.speed_num;
    total.n += res.n;
    if (res.collided) ++rep.collided_count;
    if (aggregation == Aggregation::mean_of_periods) {
      mean_gap += detail::safe_ratio(res.gap_num, res.gap_den);
      if (res.speed_den > 0) mean_speed += detail::safe_ratio(res.speed_num, res.speed_den);
    }
    total.speed_den += res.speed_den;
  }
  if (aggregation == Aggregation::pooled) {
    rep.rmspe_spacing = detail::safe_ratio(total.gap_num, total.gap_den);
    rep.rmspe_speed = total.speed_den > 0 ? detail::safe_ratio(total.speed_num, total.speed_den) : 0.0;
  } else {
    rep.rmspe_spacing = mean_gap / static_cast<double>(periods.size());
    rep.rmspe_speed = mean_speed / static_cast<double>(periods.size());
  }
  rep.rmse_spacing = std::sqrt(total.gap_num / static_cast<double>(total.n));
  if (std::isnan(rep.rmse_spacing)) rep.rmse_spacing = std::numeric_limits<double>::infinity();
  return rep;
}

/// Spacing RMSPE plus crash_penalty per collided period. Lower is better.
inline double pooled_objective(const AnyParams& params, std::span<const CarFollowingPeriod> periods,
                               const SimConfig& sim = {}, const ObjectiveConfig& cfg = {}) {
  const auto rep = evaluate_periods(params, periods, sim, cfg.aggregation);
  return rep.rmspe_spacing + cfg.crash_penalty * static_cast<double>(rep.collided_count);
}

/// Fraction of errors strictly below e.
inline double error_cdf(std::span<const double> errors, double e) {
  if (errors.empty()) throw InputError("empty error sample");
  const auto below = std::count_if(errors.begin(), errors.end(), [e](double x) { return x < e; });
  return static_cast<double>(below) / static_cast<double>(errors.size());
}

/// Step-curve points (e, F) of the empirical c.d.f., one per distinct error,
/// each evaluated just above the error so the curve ends at F = 1.
inline std::vector<std::pair<double, double>> error_cdf_curve(std::span<const double> errors) {
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::pair<double, double>> out;
  for (double e : sorted) {
    out.emplace_back(e, error_cdf(errors, std::nextafter(e, std::numeric_limits<double>::infinity())));
  }
  return out;
}

}  // namespace cflab
