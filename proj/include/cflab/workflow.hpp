#pragma once

// Study procedures built on the simulator, objective and GA: k-fold
// calibration/validation per driver, synthetic-data verification,
// inter-driver transfer matrices, IDM parameters estimated directly from
// driving data, and summary statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cflab/error.hpp"
#include "cflab/ga.hpp"
#include "cflab/models.hpp"
#include "cflab/objective.hpp"
#include "cflab/parallel.hpp"
#include "cflab/simulator.hpp"
#include "cflab/trajectory.hpp"

namespace cflab {

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  std::string driver_id;
  std::vector<std::vector<std::size_t>> folds;  // period indices, each sorted
};

/// Random partition of [0, n) into k folds whose sizes differ by at most one.
inline FoldPlan kfold_split(std::size_t n_periods, std::size_t k, Rng& rng, std::string driver_id = {}) {
  if (k == 0) throw InputError("fold count must be positive");
  if (n_periods < k) {
    throw InputError("need at least " + std::to_string(k) + " periods for " + std::to_string(k) +
                     " folds, got " + std::to_string(n_periods));
  }
  std::vector<std::size_t> idx(n_periods);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  FoldPlan plan{std::move(driver_id), {}};
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n_periods / k + (f < n_periods % k ? 1 : 0);
    std::vector<std::size_t> fold(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                  idx.begin() + static_cast<std::ptrdiff_t>(start + size));
    std::sort(fold.begin(), fold.end());
    plan.folds.push_back(std::move(fold));
    start += size;
  }
  return plan;
}

inline FoldPlan kfold_split(std::size_t n_periods, std::size_t k, std::uint64_t seed,
                            std::string driver_id = {}) {
  Rng rng(seed);
  return kfold_split(n_periods, k, rng, std::move(driver_id));
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationOptions {
  std::size_t folds = 5;  // 1 = calibrate and validate on the full dataset
  std::uint64_t split_seed = 0;
  ObjectiveConfig objective;
  std::optional<Bounds> bounds;  // defaults to the model's registry bounds
  std::size_t jobs = 1;          // folds calibrated concurrently
  std::function<void(std::size_t fold, std::size_t generation, double best, double mean)> progress;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::size_t> calibration_periods;
  std::vector<std::size_t> validation_periods;
  Genome genome;
  double fitness = 0.0;
  double calibration_rmspe = 0.0;  // spacing
  std::size_t calibration_collisions = 0;
  double validation_rmspe_spacing = 0.0;
  double validation_rmspe_speed = 0.0;
  std::size_t validation_collisions = 0;
  std::size_t generations = 0;
  Termination termination = Termination::max_generations;
};

struct CalibrationResult {
  std::string driver_id;
  ModelKind model = ModelKind::idm;
  std::vector<FoldResult> folds;
  double mean_calibration_rmspe = 0.0;
  double mean_validation_rmspe_spacing = 0.0;
  double mean_validation_rmspe_speed = 0.0;
  std::size_t validation_collisions = 0;

  void update_averages() {
    const auto k = static_cast<double>(folds.size());
    mean_calibration_rmspe = mean_validation_rmspe_spacing = mean_validation_rmspe_speed = 0.0;
    validation_collisions = 0;
    for (const auto& f : folds) {
      mean_calibration_rmspe += f.calibration_rmspe;
      mean_validation_rmspe_spacing += f.validation_rmspe_spacing;
      mean_validation_rmspe_speed += f.validation_rmspe_speed;
      validation_collisions += f.validation_collisions;
    }
    mean_calibration_rmspe /= k;
    mean_validation_rmspe_spacing /= k;
    mean_validation_rmspe_speed /= k;
  }
};

inline std::vector<CarFollowingPeriod> select_periods(const DriverDataset& ds, std::span<const std::size_t> idx) {
  std::vector<CarFollowingPeriod> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.periods.at(i));
  return out;
}

/// Calibrates on `calibration` with the multistart GA and scores the best
/// genome on `validation`.
inline FoldResult calibrate_fold(ModelKind kind, std::span<const CarFollowingPeriod> calibration,
                                 std::span<const CarFollowingPeriod> validation, const GaConfig& ga,
                                 const SimConfig& sim, const CalibrationOptions& opts = {},
                                 const GaProgress& progress = {}) {
  const Bounds bounds = opts.bounds ? *opts.bounds : Bounds::of(kind);
  auto objective = [&](std::span<const double> g) {
    return pooled_objective(params_from_genome(kind, g), calibration, sim, opts.objective);
  };
  const auto ms = multistart(objective, bounds, ga, progress);
  FoldResult fr;
  fr.genome = ms.best.best_genome;
  fr.fitness = ms.best.best_fitness;
  fr.generations = ms.best.generations_run;
  fr.termination = ms.best.termination_reason;
  const auto params = params_from_genome(kind, fr.genome);
  const auto cal = evaluate_periods(params, calibration, sim, opts.objective.aggregation);
  fr.calibration_rmspe = cal.rmspe_spacing;
  fr.calibration_collisions = cal.collided_count;
  const auto val = evaluate_periods(params, validation, sim, opts.objective.aggregation);
  fr.validation_rmspe_spacing = val.rmspe_spacing;
  fr.validation_rmspe_speed = val.rmspe_speed;
  fr.validation_collisions = val.collided_count;
  return fr;
}

/// k-fold calibration and intra-driver validation of one driver. Fold f uses
/// GA seeds ga.seed + f * n_restarts + r.
inline CalibrationResult calibrate_driver(ModelKind kind, const DriverDataset& dataset, const GaConfig& ga,
                                          const SimConfig& sim, const CalibrationOptions& opts = {}) {
  if (dataset.periods.empty()) throw InputError("driver '" + dataset.driver_id + "' has no periods");
  CalibrationResult res;
  res.driver_id = dataset.driver_id;
  res.model = kind;

  std::vector<std::vector<std::size_t>> folds;
  if (opts.folds == 1) {
    std::vector<std::size_t> all(dataset.periods.size());
    std::iota(all.begin(), all.end(), 0);
    folds.push_back(all);
  } else {
    folds = kfold_split(dataset.periods.size(), opts.folds, opts.split_seed, dataset.driver_id).folds;
  }

  res.folds.resize(folds.size());
  parallel_for(folds.size(), opts.jobs, [&](std::size_t f) {
    std::vector<std::size_t> cal_idx;
    if (folds.size() == 1) {
      cal_idx = folds[0];
    } else {
      for (std::size_t g = 0; g < folds.size(); ++g) {
        if (g != f) cal_idx.insert(cal_idx.end(), folds[g].begin(), folds[g].end());
      }
      std::sort(cal_idx.begin(), cal_idx.end());
    }
    GaConfig fold_ga = ga;
    fold_ga.seed = ga.seed + f * ga.n_restarts;
    const auto cal = select_periods(dataset, cal_idx);
    const auto val = select_periods(dataset, folds[f]);
    GaProgress fold_progress;
    if (opts.progress) {
      fold_progress = [&, f](std::size_t gen, double best, double mean) { opts.progress(f, gen, best, mean); };
    }
    auto fr = calibrate_fold(kind, cal, val, fold_ga, sim, opts, fold_progress);
    fr.fold = f;
    fr.calibration_periods = std::move(cal_idx);
    fr.validation_periods = folds[f];
    res.folds[f] = std::move(fr);
  });
  res.update_averages();
  return res;
}

// ---------------------------------------------------------------------------
// Synthetic verification

inline CarFollowingPeriod generate_synthetic(const AnyParams& truth, const CarFollowingPeriod& seed,
                                             const SimConfig& sim = {}) {
  const auto r = simulate_period(truth, seed, sim);
  if (r.truncated) throw ComputeError("synthetic generation failed: the law left its domain");
  return synthesize_period(r, seed, seed.period_id + "_synthetic");
}

struct SyntheticReport {
  ModelKind model = ModelKind::idm;
  Genome true_genome;
  Genome recovered_genome;
  double rmspe = 0.0;  // spacing RMSPE of the recovered parameters
  bool collided = false;
  GaResult ga;
  std::vector<double> run_best_fitness;
};

/// Generates a follower trajectory with `truth` against the seed period's
/// leader, calibrates on it and reports the recovered parameters.
inline SyntheticReport synthetic_verify(const AnyParams& truth, const CarFollowingPeriod& seed, const GaConfig& ga,
                                        const SimConfig& sim = {}, std::optional<Bounds> bounds = std::nullopt,
                                        const GaProgress& progress = {}) {
  if (!within_bounds(truth)) throw InputError("true parameters are outside the calibration bounds");
  const ModelKind kind = kind_of(truth);
  const std::vector<CarFollowingPeriod> data{generate_synthetic(truth, seed, sim)};
  const Bounds b = bounds ? *bounds : Bounds::of(kind);
  auto objective = [&](std::span<const double> g) {
    return pooled_objective(params_from_genome(kind, g), data, sim);
  };
  const auto ms = multistart(objective, b, ga, progress);
  SyntheticReport rep;
  rep.model = kind;
  rep.true_genome = genome_of(truth);
  rep.recovered_genome = ms.best.best_genome;
  const auto eval = evaluate_periods(params_from_genome(kind, rep.recovered_genome), data, sim);
  rep.rmspe = eval.rmspe_spacing;
  rep.collided = eval.collided_count > 0;
  rep.ga = ms.best;
  rep.run_best_fitness = ms.run_best_fitness;
  return rep;
}

// ---------------------------------------------------------------------------
// Inter-driver validation

struct InterDriverMatrices {
  std::vector<std::string> driver_ids;
  std::vector<std::vector<double>> spacing;  // [source][target]
  std::vector<std::vector<double>> speed;
  std::size_t collisions = 0;               // all cells
  std::size_t off_diagonal_collisions = 0;

  double mean_diagonal(const std::vector<std::vector<double>>& m) const {
    double s = 0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m[i][i];
    return s / static_cast<double>(m.size());
  }
  double mean_off_diagonal(const std::vector<std::vector<double>>& m) const {
    double s = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = 0; j < m.size(); ++j) {
        if (i != j) s += m[i][j];
      }
    }
    return s / static_cast<double>(m.size() * (m.size() - 1));
  }
};

/// Cell (i, j): driver i's fold-f genome applied to driver j's fold-f
/// validation periods, averaged over folds. The diagonal reproduces each
/// driver's intra-driver validation error.
inline InterDriverMatrices inter_driver_matrix(ModelKind kind, std::span<const CalibrationResult> results,
                                               std::span<const DriverDataset> datasets, const SimConfig& sim = {},
                                               Aggregation aggregation = Aggregation::pooled) {
  const std::size_t n = results.size();
  if (n < 2) throw InputError("inter-driver validation needs at least two drivers");
  if (datasets.size() != n) throw InputError("one dataset per calibration result required");
  const std::size_t k = results[0].folds.size();
  for (const auto& r : results) {
    if (r.folds.size() != k) throw InputError("drivers were calibrated with different fold counts");
    if (r.model != kind) throw InputError("calibration result is for a different model");
  }
  InterDriverMatrices m;
  m.spacing.assign(n, std::vector<double>(n, 0.0));
  m.speed.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    m.driver_ids.push_back(results[i].driver_id);
    for (std::size_t j = 0; j < n; ++j) {
      double spacing = 0, speed = 0;
      for (std::size_t f = 0; f < k; ++f) {
        const auto params = params_from_genome(kind, results[i].folds[f].genome);
        const auto periods = select_periods(datasets[j], results[j].folds[f].validation_periods);
        const auto rep = evaluate_periods(params, periods, sim, aggregation);
        spacing += rep.rmspe_spacing;
        speed += rep.rmspe_speed;
        m.collisions += rep.collided_count;
        if (i != j) m.off_diagonal_collisions += rep.collided_count;
      }
      m.spacing[i][j] = spacing / static_cast<double>(k);
      m.speed[i][j] = speed / static_cast<double>(k);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Statistics

/// Product-moment correlation.
inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("correlation needs two equal sequences of length >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) throw InputError("correlation undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Linear interpolation between order statistics at position q * (n - 1).
inline double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw InputError("percentile of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SummaryStats {
  double mean = 0, median = 0, std = 0, p5 = 0, p95 = 0;
  std::size_t n = 0;
};

/// Mean, median, sample standard deviation (0 for a single value), 5th and 95th percentiles.
inline SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw InputError("summary of an empty sample");
  SummaryStats s;
  s.n = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  s.median = percentile(values, 0.5);
  s.p5 = percentile(values, 0.05);
  s.p95 = percentile(values, 0.95);
  return s;
}

struct ParamSummary {
  std::string name;
  std::string unit;
  std::string description;
  double lower = 0, upper = 0;
  SummaryStats stats;
};

/// One row per parameter in the model's canonical order, over all genomes.
inline std::vector<ParamSummary> summarize_params(ModelKind kind, std::span<const Genome> genomes) {
  if (genomes.empty()) throw InputError("no calibrated genomes to summarize");
  const auto specs = param_specs(kind);
  std::vector<ParamSummary> rows;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::vector<double> col;
    for (const auto& g : genomes) col.push_back(g.at(i));
    rows.push_back({std::string(specs[i].name), std::string(specs[i].unit), std::string(specs[i].description),
                    specs[i].lower, specs[i].upper, summarize(col)});
  }
  return rows;
}

inline std::vector<Genome> fold_genomes(std::span<const CalibrationResult> results) {
  std::vector<Genome> out;
  for (const auto& r : results) {
    for (const auto& f : r.folds) out.push_back(f.genome);
  }
  return out;
}

struct ParamVariability {
  std::string name;
  double intra_driver_std = 0;  // mean over drivers of the std across that driver's folds
  double inter_driver_std = 0;  // std across drivers of fold-averaged values
};

inline std::vector<ParamVariability> param_variability(ModelKind kind, std::span<const CalibrationResult> results) {
  if (results.empty()) throw InputError("no calibration results");
  const auto specs = param_specs(kind);
  std::vector<ParamVariability> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::vector<double> driver_means;
    double intra = 0;
    for (const auto& r : results) {
      std::vector<double> vals;
      for (const auto& f : r.folds) vals.push_back(f.genome.at(i));
      const auto s = summarize(vals);
      intra += s.std;
      driver_means.push_back(s.mean);
    }
    out.push_back({std::string(specs[i].name), intra / static_cast<double>(results.size()),
                   summarize(driver_means).std});
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDM parameters observed directly in driving data

struct ObservedValue {
  std::optional<double> value;  // empty when the regime had no samples
  std::size_t samples = 0;
};

struct ObservedIdmParams {
  ObservedValue a_max;   // m/s^2
  ObservedValue v_des;   // km/h
  ObservedValue b_comf;  // m/s^2, magnitude
  ObservedValue s_jam;   // m
  ObservedValue t_des;   // s
  double beta = 4.0;
};

struct ObservationOptions {
  double free_gap = 120.0;         // m, free driving above this gap
  double steady_speed_diff = 1.0;  // m/s, steady following below this |dv|
  double standstill_speed = 1.0;   // m/s
  double smoothing_window = 0.5;   // s, centred moving average before differencing
  bool use_percentile = false;     // 99.5th percentile of |accel| instead of the raw extreme
  double accel_percentile = 0.995;
};

/// Follower acceleration from a centred moving average of speed followed by
/// central differences (one-sided at the ends).
inline std::vector<double> smoothed_acceleration(const CarFollowingPeriod& p, double window) {
  const auto n = p.samples.size();
  std::vector<double> v(n), a(n, 0.0);
  const auto half = static_cast<std::size_t>(std::llround(window / kSampleInterval / 2.0));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double s = 0;
    for (std::size_t j = lo; j <= hi; ++j) s += p.samples[j].fv_speed;
    v[i] = s / static_cast<double>(hi - lo + 1);
  }
  if (n < 2) return a;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) a[i] = (v[1] - v[0]) / kSampleInterval;
    else if (i + 1 == n) a[i] = (v[i] - v[i - 1]) / kSampleInterval;
    else a[i] = (v[i + 1] - v[i - 1]) / (2 * kSampleInterval);
  }
  return a;
}

/// `driving` is all of a driver's recorded samples (free driving included);
/// `car_following` are the extracted periods.
inline ObservedIdmParams estimate_observed_idm(std::span<const TrajectorySample> driving,
                                               std::span<const CarFollowingPeriod> car_following,
                                               const ObservationOptions& opt = {}) {
  ObservedIdmParams out;
  auto finish = [](ObservedValue& o, double sum) {
    if (o.samples > 0) o.value = sum / static_cast<double>(o.samples);
  };

  double sum_speed = 0;
  for (const auto& s : driving) {
    if (s.gap > opt.free_gap) {
      sum_speed += s.fv_speed;
      ++out.v_des.samples;
    }
  }
  finish(out.v_des, sum_speed);
  if (out.v_des.value) out.v_des.value = mps_to_kmh(*out.v_des.value);

  double sum_headway = 0, sum_gap = 0;
  std::vector<double> accels;
  for (const auto& p : car_following) {
    for (const auto& s : p.samples) {
      if (s.fv_speed < opt.standstill_speed) {
        sum_gap += s.gap;
        ++out.s_jam.samples;
      } else if (std::abs(s.lv_speed - s.fv_speed) < opt.steady_speed_diff) {
        sum_headway += s.gap / s.fv_speed;
        ++out.t_des.samples;
      }
    }
    const auto a = smoothed_acceleration(p, opt.smoothing_window);
    accels.insert(accels.end(), a.begin(), a.end());
  }
  finish(out.t_des, sum_headway);
  finish(out.s_jam, sum_gap);

  std::vector<double> pos, neg;
  for (double a : accels) {
    if (a > 0) pos.push_back(a);
    if (a < 0) neg.push_back(-a);
  }
  auto extreme = [&](const std::vector<double>& v, ObservedValue& o) {
    o.samples = v.size();
    if (v.empty()) return;
    o.value = opt.use_percentile ? percentile(v, opt.accel_percentile) : *std::max_element(v.begin(), v.end());
  };
  extreme(pos, out.a_max);
  extreme(neg, out.b_comf);
  return out;
}

}  // namespace cflab
