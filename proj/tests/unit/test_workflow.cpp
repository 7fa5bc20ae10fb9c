#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "cflab/scenarios.hpp"
#include "cflab/workflow.hpp"

using namespace cflab;

namespace {

GaConfig quick_ga(std::uint64_t seed = 0) {
  GaConfig g;
  g.pop_size = 60;
  g.max_generations = 60;
  g.stall_generations = 30;
  g.n_restarts = 2;
  g.seed = seed;
  return g;
}

DriverDataset synthetic_driver(const IdmParams& truth, std::string id, std::size_t n = 5) {
  DriverDataset ds;
  ds.driver_id = id;
  for (std::size_t i = 0; i < n; ++i) {
    auto leader = varied_speed_period(25, 0.9 * static_cast<double>(i), "p" + std::to_string(i + 1));
    auto p = generate_synthetic(truth, leader);
    p.period_id = leader.period_id;
    p.driver_id = id;
    ds.periods.push_back(std::move(p));
  }
  return ds;
}

const IdmParams kCloseFollower{1.2, 110, 4, 1.5, 1.5, 0.6};
const IdmParams kLooseFollower{1.2, 110, 4, 1.5, 1.5, 1.8};

// Calibrated once and shared by the tests that need real results.
const std::vector<DriverDataset>& drivers() {
  static const std::vector<DriverDataset> d{synthetic_driver(kCloseFollower, "close"),
                                            synthetic_driver(kLooseFollower, "loose")};
  return d;
}

const std::vector<CalibrationResult>& calibrated() {
  static const std::vector<CalibrationResult> r = [] {
    std::vector<CalibrationResult> out;
    CalibrationOptions opts;
    opts.split_seed = 3;
    for (const auto& d : drivers()) out.push_back(calibrate_driver(ModelKind::idm, d, quick_ga(), {}, opts));
    return out;
  }();
  return r;
}

}  // namespace

// Folds ----------------------------------------------------------------------

TEST(KFold, FiftyPeriods) {
  const auto plan = kfold_split(50, 5, std::uint64_t{1}, "d1");
  EXPECT_EQ(plan.driver_id, "d1");
  ASSERT_EQ(plan.folds.size(), 5u);
  for (const auto& f : plan.folds) EXPECT_EQ(f.size(), 10u);
}

TEST(KFold, SingletonFolds) {
  const auto plan = kfold_split(5, 5, std::uint64_t{2});
  for (const auto& f : plan.folds) EXPECT_EQ(f.size(), 1u);
}

TEST(KFold, SeededAndValidated) {
  EXPECT_EQ(kfold_split(30, 5, std::uint64_t{7}).folds, kfold_split(30, 5, std::uint64_t{7}).folds);
  EXPECT_NE(kfold_split(30, 5, std::uint64_t{7}).folds, kfold_split(30, 5, std::uint64_t{8}).folds);
  EXPECT_THROW(kfold_split(4, 5, std::uint64_t{0}), InputError);
  EXPECT_THROW(kfold_split(4, 0, std::uint64_t{0}), InputError);
}

TEST(KFold, PartitionPropertyRandomized) {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 300; ++it) {
    const std::size_t k = 1 + rng() % 9;
    const std::size_t n = k + rng() % 60;
    const auto plan = kfold_split(n, k, rng);
    std::set<std::size_t> seen;
    std::size_t lo = n, hi = 0;
    for (const auto& f : plan.folds) {
      EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      for (auto i : f) EXPECT_TRUE(seen.insert(i).second);
    }
    EXPECT_EQ(seen.size(), n);
    EXPECT_EQ(*seen.rbegin(), n - 1);
    EXPECT_LE(hi - lo, 1u);
  }
}

// Calibration -------------------------------------------------------------------

TEST(Calibration, SyntheticIdmDriverValidates) {
  for (const auto& r : calibrated()) {
    ASSERT_EQ(r.folds.size(), 5u);
    for (const auto& f : r.folds) {
      EXPECT_LE(f.validation_rmspe_spacing, 0.02) << r.driver_id << " fold " << f.fold;
      EXPECT_EQ(f.validation_collisions, 0u);
      EXPECT_EQ(f.calibration_periods.size() + f.validation_periods.size(), 5u);
      for (auto v : f.validation_periods) {
        EXPECT_EQ(std::count(f.calibration_periods.begin(), f.calibration_periods.end(), v), 0);
      }
    }
  }
}

TEST(Calibration, AveragesAreFoldMeans) {
  for (const auto& r : calibrated()) {
    double cal = 0, vs = 0, vv = 0;
    for (const auto& f : r.folds) {
      cal += f.calibration_rmspe;
      vs += f.validation_rmspe_spacing;
      vv += f.validation_rmspe_speed;
    }
    EXPECT_EQ(r.mean_calibration_rmspe, cal / 5);
    EXPECT_EQ(r.mean_validation_rmspe_spacing, vs / 5);
    EXPECT_EQ(r.mean_validation_rmspe_speed, vv / 5);
  }
}

TEST(Calibration, SingleFoldValidatesOnCalibrationSet) {
  CalibrationOptions opts;
  opts.folds = 1;
  auto ga = quick_ga();
  ga.max_generations = 10;
  ga.n_restarts = 1;
  const auto r = calibrate_driver(ModelKind::fvd, drivers()[0], ga, {}, opts);
  ASSERT_EQ(r.folds.size(), 1u);
  EXPECT_EQ(r.folds[0].calibration_rmspe, r.folds[0].validation_rmspe_spacing);
  EXPECT_EQ(r.folds[0].calibration_periods, r.folds[0].validation_periods);
}

TEST(Calibration, DeterministicAndJobsIndependent) {
  CalibrationOptions opts;
  opts.folds = 2;
  auto ga = quick_ga(4);
  ga.max_generations = 8;
  ga.n_restarts = 1;
  const auto a = calibrate_driver(ModelKind::gipps, drivers()[1], ga, {}, opts);
  opts.jobs = 2;
  const auto b = calibrate_driver(ModelKind::gipps, drivers()[1], ga, {}, opts);
  ASSERT_EQ(a.folds.size(), b.folds.size());
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    EXPECT_EQ(a.folds[f].genome, b.folds[f].genome);
    EXPECT_EQ(a.folds[f].validation_rmspe_spacing, b.folds[f].validation_rmspe_spacing);
  }
}

TEST(Calibration, ValidationCollisionIsCounted) {
  const GhrParams ghr{1, 1, 1, 1};
  CalibrationOptions opts;
  opts.bounds = Bounds::point(ghr.to_genome());
  auto ga = quick_ga();
  ga.pop_size = 4;
  ga.max_generations = 1;
  ga.n_restarts = 1;
  const std::vector<CarFollowingPeriod> cal{varied_speed_period(20)};
  const std::vector<CarFollowingPeriod> val{hard_stop_period(), varied_speed_period(20, 1)};
  const auto fr = calibrate_fold(ModelKind::ghr, cal, val, ga, {}, opts);
  EXPECT_EQ(fr.validation_collisions, 1u);
  EXPECT_EQ(fr.genome, ghr.to_genome());
}

TEST(Calibration, EmptyDatasetThrows) {
  DriverDataset ds;
  ds.driver_id = "x";
  EXPECT_THROW(calibrate_driver(ModelKind::idm, ds, quick_ga(), {}), InputError);
}

// Synthetic verification ----------------------------------------------------------

TEST(Synthetic, CollapsedBoundsRecoverExactly) {
  for (auto k : kAllModels) {
    const auto truth = median_params(k);
    auto ga = quick_ga();
    ga.pop_size = 4;
    ga.max_generations = 2;
    ga.n_restarts = 1;
    const auto rep = synthetic_verify(truth, varied_speed_period(30), ga, {}, Bounds::point(genome_of(truth)));
    EXPECT_EQ(rep.rmspe, 0.0) << model_name(k);
    EXPECT_EQ(rep.recovered_genome, rep.true_genome);
  }
}

TEST(Synthetic, IdmMedianRecovered) {
  const auto rep = synthetic_verify(median_params(ModelKind::idm), varied_speed_period(40), quick_ga(1));
  EXPECT_LE(rep.rmspe, 0.02);
  EXPECT_FALSE(rep.collided);
  EXPECT_EQ(rep.run_best_fitness.size(), 2u);
}

TEST(Synthetic, OutOfBoundsTruthRejected) {
  EXPECT_THROW(synthetic_verify(GhrParams{100, 1, 1, 1}, varied_speed_period(10), quick_ga()), InputError);
}

TEST(Synthetic, GeneratedPeriodKeepsLeader) {
  const auto seed = varied_speed_period(20);
  const auto p = generate_synthetic(median_params(ModelKind::fvd), seed);
  EXPECT_EQ(p.period_id, "varied_synthetic");
  for (std::size_t k = 0; k < p.samples.size(); ++k) EXPECT_EQ(p.samples[k].lv_speed, seed.samples[k].lv_speed);
  EXPECT_EQ(simulate_period(median_params(ModelKind::fvd), p).sim_gap.back(), p.samples.back().gap);
}

// Inter-driver -----------------------------------------------------------------

TEST(InterDriver, DuplicatedDriverMatchesDiagonal) {
  const std::vector<CalibrationResult> res{calibrated()[0], calibrated()[0]};
  const std::vector<DriverDataset> ds{drivers()[0], drivers()[0]};
  const auto m = inter_driver_matrix(ModelKind::idm, res, ds);
  ASSERT_EQ(m.spacing.size(), 2u);
  EXPECT_EQ(m.spacing[0][1], m.spacing[0][0]);
  EXPECT_EQ(m.spacing[1][0], m.spacing[1][1]);
  EXPECT_EQ(m.speed[0][1], m.speed[0][0]);
}

TEST(InterDriver, DiagonalIsIntraDriverValidation) {
  const auto m = inter_driver_matrix(ModelKind::idm, calibrated(), drivers());
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(m.spacing[i][i], calibrated()[i].mean_validation_rmspe_spacing);
    EXPECT_DOUBLE_EQ(m.speed[i][i], calibrated()[i].mean_validation_rmspe_speed);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_GE(m.spacing[i][j], 0.0);
  }
  EXPECT_EQ(m.driver_ids, (std::vector<std::string>{"close", "loose"}));
}

TEST(InterDriver, HeterogeneousDriversSeparate) {
  const auto m = inter_driver_matrix(ModelKind::idm, calibrated(), drivers());
  EXPECT_GT(m.mean_off_diagonal(m.spacing), m.mean_diagonal(m.spacing));
  // independent check: the close follower's own law misses the loose driver's gaps
  const auto direct = evaluate_periods(kCloseFollower, drivers()[1].periods);
  EXPECT_GT(direct.rmspe_spacing, 0.1);
}

TEST(InterDriver, Preconditions) {
  const std::vector<CalibrationResult> one{calibrated()[0]};
  const std::vector<DriverDataset> ds{drivers()[0]};
  EXPECT_THROW(inter_driver_matrix(ModelKind::idm, one, ds), InputError);
  EXPECT_THROW(inter_driver_matrix(ModelKind::fvd, calibrated(), drivers()), InputError);
}

// Statistics ---------------------------------------------------------------------

TEST(Pearson, Examples) {
  using V = std::vector<double>;
  EXPECT_DOUBLE_EQ(pearson_correlation(V{1, 2, 5}, V{1, 2, 5}), 1.0);
  EXPECT_DOUBLE_EQ(pearson_correlation(V{1, 2, 5}, V{-1, -2, -5}), -1.0);
  EXPECT_DOUBLE_EQ(pearson_correlation(V{1, 2, 3}, V{2, 4, 6}), 1.0);
  // hand value: x = 1..4, y = 1,3,2,4 -> sxy = 4, sxx = syy = 5
  EXPECT_DOUBLE_EQ(pearson_correlation(V{1, 2, 3, 4}, V{1, 3, 2, 4}), 0.8);
  EXPECT_THROW(pearson_correlation(V{1, 1, 1}, V{1, 2, 3}), InputError);
  EXPECT_THROW(pearson_correlation(V{1}, V{1}), InputError);
  EXPECT_THROW(pearson_correlation(V{1, 2}, V{1, 2, 3}), InputError);
}

TEST(Summary, SingleValue) {
  const auto s = summarize(std::vector<double>{4.2});
  EXPECT_EQ(s.mean, 4.2);
  EXPECT_EQ(s.median, 4.2);
  EXPECT_EQ(s.p5, 4.2);
  EXPECT_EQ(s.p95, 4.2);
  EXPECT_EQ(s.std, 0.0);
}

TEST(Summary, OneToHundred) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  std::shuffle(v.begin(), v.end(), std::mt19937_64(1));
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.median, 50.5);
  EXPECT_DOUBLE_EQ(s.mean, 50.5);
  EXPECT_DOUBLE_EQ(s.p5, 1 + 0.05 * 99);
  EXPECT_DOUBLE_EQ(s.p95, 1 + 0.95 * 99);
  EXPECT_NEAR(s.std, std::sqrt(100.0 * 101 / 12), 1e-12);  // sample std of 1..n
}

TEST(Summary, ParamsInCanonicalOrder) {
  const std::vector<Genome> g{{1, 2, 3, 4}, {3, 2, 1, 0}};
  const auto rows = summarize_params(ModelKind::ghr, g);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].name, "alpha");
  EXPECT_EQ(rows[3].name, "tau");
  EXPECT_EQ(rows[3].unit, "s");
  EXPECT_DOUBLE_EQ(rows[0].stats.mean, 2);
  EXPECT_DOUBLE_EQ(rows[1].stats.std, 0);
  EXPECT_THROW(summarize_params(ModelKind::ghr, std::vector<Genome>{}), InputError);
}

TEST(Summary, Variability) {
  auto make = [](std::vector<double> alphas) {
    CalibrationResult r;
    r.model = ModelKind::ghr;
    for (double a : alphas) {
      FoldResult f;
      f.genome = {a, 1, 1, 1};
      r.folds.push_back(f);
    }
    return r;
  };
  const std::vector<CalibrationResult> res{make({1, 3}), make({5, 5})};
  const auto v = param_variability(ModelKind::ghr, res);
  EXPECT_DOUBLE_EQ(v[0].intra_driver_std, (std::sqrt(2.0) + 0) / 2);
  EXPECT_DOUBLE_EQ(v[0].inter_driver_std, 3 / std::sqrt(2.0));  // driver means 2 and 5
  EXPECT_EQ(v[1].intra_driver_std, 0.0);
  EXPECT_EQ(fold_genomes(res).size(), 4u);
}

// Observed parameters ------------------------------------------------------------

namespace {

TrajectorySample sample(double v_fv, double gap, double v_lv) { return {0, v_fv, gap, v_lv, 1, 0}; }

CarFollowingPeriod period_of(std::vector<TrajectorySample> s) {
  for (std::size_t k = 0; k < s.size(); ++k) s[k].t = 0.1 * static_cast<double>(k);
  CarFollowingPeriod p;
  p.samples = std::move(s);
  return p;
}

}  // namespace

TEST(Observed, Examples) {
  const std::vector<CarFollowingPeriod> cf{
      period_of({sample(0.5, 2, 0.5), sample(0.5, 4, 0.5)}),
      period_of({sample(20, 30, 20.5), sample(20, 30, 20.2), sample(20, 50, 25)})};
  const std::vector<TrajectorySample> driving{sample(20, 30, 20)};
  const auto o = estimate_observed_idm(driving, cf);
  EXPECT_DOUBLE_EQ(*o.s_jam.value, 3.0);
  EXPECT_EQ(o.s_jam.samples, 2u);
  EXPECT_DOUBLE_EQ(*o.t_des.value, 1.5);
  EXPECT_EQ(o.t_des.samples, 2u);
  EXPECT_FALSE(o.v_des.value);
  EXPECT_EQ(o.v_des.samples, 0u);
  EXPECT_EQ(o.beta, 4.0);
}

TEST(Observed, DesiredSpeedAndAccelerationExtremes) {
  std::vector<TrajectorySample> ramp;
  for (int k = 0; k < 50; ++k) ramp.push_back(sample(10 + 0.2 * k, 40, 12));  // +2 m/s^2
  for (int k = 0; k < 50; ++k) ramp.push_back(sample(19.8 - 0.1 * k, 40, 12));  // -1 m/s^2
  const std::vector<CarFollowingPeriod> cf{period_of(ramp)};
  const std::vector<TrajectorySample> driving{sample(30, 150, 30), sample(32, 130, 30), sample(10, 40, 10)};
  ObservationOptions opt;
  opt.smoothing_window = 0;
  const auto o = estimate_observed_idm(driving, cf, opt);
  EXPECT_DOUBLE_EQ(*o.v_des.value, 31 * 3.6);
  EXPECT_NEAR(*o.a_max.value, 2.0, 1e-9);
  EXPECT_NEAR(*o.b_comf.value, 1.0, 1e-9);
  opt.use_percentile = true;
  opt.accel_percentile = 0.5;
  EXPECT_LE(*estimate_observed_idm(driving, cf, opt).a_max.value, 2.0 + 1e-9);
}

TEST(Observed, InvariantToSampleOrder) {
  const auto d = drivers()[0];
  std::vector<TrajectorySample> driving;
  for (const auto& p : d.periods) driving.insert(driving.end(), p.samples.begin(), p.samples.end());
  const auto a = estimate_observed_idm(driving, d.periods);
  auto shuffled = driving;
  auto periods = d.periods;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::reverse(periods.begin(), periods.end());
  const auto b = estimate_observed_idm(shuffled, periods);
  EXPECT_NEAR(*a.t_des.value, *b.t_des.value, 1e-12);
  EXPECT_EQ(a.a_max.value, b.a_max.value);
  EXPECT_EQ(a.b_comf.value, b.b_comf.value);
  EXPECT_EQ(a.t_des.samples, b.t_des.samples);
}

TEST(Observed, SmoothedAccelerationOfRamp) {
  std::vector<TrajectorySample> s;
  for (int k = 0; k < 30; ++k) s.push_back(sample(5 + 0.15 * k, 20, 5));
  const auto a = smoothed_acceleration(period_of(s), 0.5);
  // the 7-sample window is complete for both neighbours from k = 4 on
  for (std::size_t k = 4; k + 4 < a.size(); ++k) EXPECT_NEAR(a[k], 1.5, 1e-9);
}
