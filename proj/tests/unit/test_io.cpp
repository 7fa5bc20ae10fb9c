#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <unistd.h>

#include "cflab/io.hpp"
#include "cflab/scenarios.hpp"
#include "cflab/svg.hpp"

using namespace cflab;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("cflab_io_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

DriverDataset small_dataset(const std::string& id) {
  DriverDataset ds;
  ds.driver_id = id;
  for (int i = 0; i < 3; ++i) {
    auto p = varied_speed_period(20, i, "p00" + std::to_string(i + 1));
    p.driver_id = id;
    p.lv_length = 4.5 + i;
    ds.periods.push_back(p);
  }
  return ds;
}

CalibrationResult fake_result(const std::string& id, ModelKind kind) {
  CalibrationResult r;
  r.driver_id = id;
  r.model = kind;
  std::mt19937_64 rng(std::hash<std::string>{}(id));
  for (std::size_t f = 0; f < 3; ++f) {
    FoldResult fr;
    fr.fold = f;
    for (const auto& s : param_specs(kind)) fr.genome.push_back(std::uniform_real_distribution<double>(s.lower, s.upper)(rng));
    fr.fitness = 0.01 * (f + 1);
    fr.calibration_rmspe = 0.01 * (f + 1);
    fr.validation_rmspe_spacing = 0.1 / 3 * (f + 1);
    fr.validation_rmspe_speed = 0.02 * (f + 1);
    fr.validation_collisions = f == 2;
    fr.generations = 40 + f;
    fr.termination = f ? Termination::tolerance : Termination::max_generations;
    fr.validation_periods = {f};
    for (std::size_t k = 0; k < 3; ++k) {
      if (k != f) fr.calibration_periods.push_back(k);
    }
    r.folds.push_back(fr);
  }
  r.update_averages();
  return r;
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = d(rng);
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(2), "2");
}

TEST(Params, JsonRoundTrip) {
  for (auto k : kAllModels) {
    const auto p = median_params(k);
    const auto j = params_to_json(p);
    EXPECT_EQ(j.size(), param_specs(k).size());
    EXPECT_EQ(genome_of(params_from_json(k, json::parse(j.dump()))), genome_of(p));
  }
}

TEST(Params, StrictKeys) {
  auto j = params_to_json(median_params(ModelKind::ghr));
  j.erase("tau");
  EXPECT_THROW(params_from_json(ModelKind::ghr, j), InputError);
  j["tau"] = 1.0;
  j["delta"] = 2.0;
  EXPECT_THROW(params_from_json(ModelKind::ghr, j), InputError);
  j.erase("delta");
  j["tau"] = "slow";
  EXPECT_THROW(params_from_json(ModelKind::ghr, j), InputError);
  EXPECT_THROW(params_from_json(ModelKind::ghr, json::array()), InputError);
}

TEST(Config, SectionsRoundTrip) {
  GaConfig ga;
  ga.pop_size = 77;
  ga.mutation_shrink = 0.5;
  ga.n_restarts = 3;
  GaConfig back;
  apply_json(to_json(ga), back);
  EXPECT_EQ(back.pop_size, 77u);
  EXPECT_EQ(back.mutation_shrink, 0.5);
  EXPECT_EQ(back.n_restarts, 3u);

  SimConfig sim;
  sim.dt = 0.05;
  sim.w99_rnd_mode = W99RndMode::frozen_zero;
  SimConfig sim_back;
  apply_json(to_json(sim), sim_back);
  EXPECT_EQ(sim_back.dt, 0.05);
  EXPECT_EQ(sim_back.w99_rnd_mode, W99RndMode::frozen_zero);

  ExtractionCriteria ex;
  ex.max_gap = 90;
  ExtractionCriteria ex_back;
  apply_json(to_json(ex), ex_back);
  EXPECT_EQ(ex_back.max_gap, 90);

  ObjectiveConfig obj;
  obj.aggregation = Aggregation::mean_of_periods;
  obj.crash_penalty = 5;
  ObjectiveConfig obj_back;
  apply_json(to_json(obj), obj_back);
  EXPECT_EQ(obj_back.aggregation, Aggregation::mean_of_periods);
  EXPECT_EQ(obj_back.crash_penalty, 5);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  GaConfig ga;
  EXPECT_THROW(apply_json(json{{"pop", 3}}, ga), InputError);
  EXPECT_THROW(apply_json(json{{"seed", 3}}, ga), InputError);
  EXPECT_THROW(apply_json(json{{"pop_size", "big"}}, ga), InputError);
  SimConfig sim;
  EXPECT_THROW(apply_json(json{{"w99_rnd_mode", "sometimes"}}, sim), InputError);
  ObjectiveConfig obj;
  EXPECT_THROW(apply_json(json{{"aggregation", "median"}}, obj), InputError);
}

TEST(Reports, ErrorReportRoundTrip) {
  ErrorReport r{0.125, 0.5, 3.25, 2, 7};
  const auto back = error_report_from_json(json::parse(to_json(r).dump()));
  EXPECT_EQ(back.rmspe_spacing, r.rmspe_spacing);
  EXPECT_EQ(back.rmspe_speed, r.rmspe_speed);
  EXPECT_EQ(back.rmse_spacing, r.rmse_spacing);
  EXPECT_EQ(back.collided_count, r.collided_count);
  EXPECT_EQ(back.n_periods, r.n_periods);
}

TEST_F(TempDir, FileWritesAreAtomicAndReadable) {
  write_file(dir / "a" / "b.txt", "hello\n");
  EXPECT_EQ(read_file(dir / "a" / "b.txt"), "hello\n");
  EXPECT_FALSE(fs::exists(dir / "a" / "b.txt.tmp"));
  try {
    read_file(dir / "missing.txt");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.txt"), std::string::npos);
  }
  write_file(dir / "bad.json", "{oops");
  EXPECT_THROW(read_json(dir / "bad.json"), InputError);
}

TEST_F(TempDir, DatasetRoundTrip) {
  const auto a = small_dataset("d01");
  const auto b = small_dataset("d02");
  write_dataset(dir, a);
  write_dataset(dir, b);
  const auto loaded = load_dataset_dir(dir);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].driver_id, "d01");
  ASSERT_EQ(loaded[0].periods.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& p = loaded[0].periods[i];
    EXPECT_EQ(p.period_id, a.periods[i].period_id);
    EXPECT_EQ(p.driver_id, "d01");
    EXPECT_EQ(p.lv_length, a.periods[i].lv_length);
    EXPECT_EQ(p.samples, a.periods[i].samples);
  }
  const auto manifest = read_json(dir / "d02" / "p002.json");
  EXPECT_EQ(manifest["duration_s"].get<double>(), a.periods[1].duration());
}

TEST_F(TempDir, DatasetErrors) {
  EXPECT_THROW(load_dataset_dir(dir / "nope"), InputError);
  EXPECT_THROW(load_dataset_dir(dir), InputError);
  write_file(dir / "d1" / "p001.csv", "t_s,bogus\n");
  EXPECT_THROW(load_dataset_dir(dir), InputError);
}

TEST_F(TempDir, CalibrationRoundTrip) {
  const auto ds = small_dataset("d07");
  const auto res = fake_result("d07", ModelKind::w99);
  write_calibration(dir, res, ds);
  const auto ddir = driver_results_dir(dir, ModelKind::w99, "d07");
  EXPECT_TRUE(fs::exists(ddir / "fold1.json"));
  EXPECT_TRUE(fs::exists(ddir / "fold3.json"));
  EXPECT_FALSE(fs::exists(ddir / "fold0.json"));
  EXPECT_EQ(read_json(ddir / "fold2.json")["validation_periods"][0], "p002");

  const auto back = load_calibration(ddir, ModelKind::w99, &ds);
  EXPECT_EQ(back.driver_id, "d07");
  ASSERT_EQ(back.folds.size(), 3u);
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_EQ(back.folds[f].genome, res.folds[f].genome);
    EXPECT_EQ(back.folds[f].validation_rmspe_spacing, res.folds[f].validation_rmspe_spacing);
    EXPECT_EQ(back.folds[f].validation_periods, res.folds[f].validation_periods);
    EXPECT_EQ(back.folds[f].calibration_periods, res.folds[f].calibration_periods);
    EXPECT_EQ(back.folds[f].termination, res.folds[f].termination);
  }
  EXPECT_EQ(back.mean_validation_rmspe_spacing, res.mean_validation_rmspe_spacing);
  EXPECT_EQ(back.validation_collisions, 1u);
  EXPECT_EQ(result_drivers(dir, ModelKind::w99), std::vector<std::string>{"d07"});
  EXPECT_TRUE(result_drivers(dir, ModelKind::idm).empty());
  EXPECT_THROW(load_calibration(ddir, ModelKind::idm), InputError);
  EXPECT_THROW(load_calibration(dir / "none", ModelKind::w99), InputError);
}

TEST(Csv, CdfRoundTrip) {
  const std::vector<std::pair<double, double>> curve{{0.1, 1.0 / 3}, {0.2, 2.0 / 3}, {0.3, 1}};
  std::stringstream ss;
  write_cdf_csv(ss, curve);
  EXPECT_EQ(ss.str().substr(0, 4), "e,F\n");
  EXPECT_EQ(read_cdf_csv(ss), curve);
}

TEST(Csv, MatrixRoundTrip) {
  LabeledMatrix m{{"a", "b"}, {{0.1, 0.25}, {0.3, 0.125}}};
  std::stringstream ss;
  write_matrix_csv(ss, m);
  const auto back = read_matrix_csv(ss);
  EXPECT_EQ(back.labels, m.labels);
  EXPECT_EQ(back.values, m.values);
  std::stringstream ragged("driver,a,b\na,1\nb,1,2\n");
  EXPECT_THROW(read_matrix_csv(ragged), InputError);
}

TEST(Csv, SummaryRoundTrip) {
  std::vector<Genome> g{{1, 2, 3, 0.5}, {2, 3, 4, 1.5}, {4, 1, 2, 1}};
  const auto rows = summarize_params(ModelKind::ghr, g);
  std::stringstream ss;
  write_summary_csv(ss, rows);
  const auto back = read_summary_csv(ss);
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back[i].name, rows[i].name);
    EXPECT_EQ(back[i].stats.mean, rows[i].stats.mean);
    EXPECT_EQ(back[i].stats.p95, rows[i].stats.p95);
    EXPECT_EQ(back[i].stats.std, rows[i].stats.std);
  }
  std::stringstream wrong("name,mean\n");
  EXPECT_THROW(read_summary_csv(wrong), InputError);
}

TEST(Csv, BarsRoundTrip) {
  const std::vector<CalibrationResult> res{fake_result("a", ModelKind::idm), fake_result("b", ModelKind::idm)};
  const auto bars = param_bars(ModelKind::idm, res);
  std::stringstream ss;
  write_bars_csv(ss, bars);
  const auto back = read_bars_csv(ss);
  EXPECT_EQ(back.params, bars.params);
  EXPECT_EQ(back.drivers, bars.drivers);
  EXPECT_EQ(back.mean, bars.mean);
  EXPECT_EQ(back.std, bars.std);
}

TEST(Svg, RendersWellFormedDocuments) {
  svg::LinePlot plot;
  plot.title = "gap <&>";
  plot.series.push_back({"sim", {0, 1, 2}, {3, 4, 5}, false, false});
  plot.markers.push_back({1.0, "collision"});
  const auto doc = svg::render(plot);
  EXPECT_EQ(doc.rfind("<svg", 0), 0u);
  EXPECT_NE(doc.find("</svg>"), std::string::npos);
  EXPECT_NE(doc.find("class=\"marker\""), std::string::npos);
  EXPECT_NE(doc.find("gap &lt;&amp;&gt;"), std::string::npos);
  EXPECT_EQ(doc, svg::render(plot));
}
