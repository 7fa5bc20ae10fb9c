// cflab: car-following model calibration and validation from the command line.
//
// Exit codes: 0 success, 2 input or configuration error, 3 computation failure.

#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cflab/error.hpp"
#include "cflab/ga.hpp"
#include "cflab/io.hpp"
#include "cflab/models.hpp"
#include "cflab/objective.hpp"
#include "cflab/parallel.hpp"
#include "cflab/scenarios.hpp"
#include "cflab/simulator.hpp"
#include "cflab/svg.hpp"
#include "cflab/trajectory.hpp"
#include "cflab/workflow.hpp"

using namespace cflab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitCompute = 3;

// ---------------------------------------------------------------------------
// Run configuration: defaults, then the JSON config file, then flags.

struct RunConfig {
  std::vector<ModelKind> models{ModelKind::idm};
  std::string data;
  std::string results;
  std::string out = "results";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t folds = 5;
  ExtractionCriteria extraction;
  SimConfig sim;
  json ga_overrides = json::object();
  ObjectiveConfig objective;
  bool overlays = true;
  std::size_t max_overlays = 10;  // per driver
};

std::vector<ModelKind> parse_models(const std::string& list) {
  std::vector<ModelKind> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "all") {
      out.assign(kAllModels.begin(), kAllModels.end());
      continue;
    }
    out.push_back(model_from_name(name));
  }
  if (out.empty()) throw InputError("no models given");
  return out;
}

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
  std::string models;
  std::string data;
  std::string results;
  std::optional<std::size_t> folds;
  std::optional<double> max_gap, max_lateral, min_duration, max_dropout;
  std::optional<double> dt, collision_threshold, crash_penalty;
  std::string aggregation;
};

RunConfig resolve_config(const GlobalFlags& f) {
  RunConfig rc;
  rc.jobs = default_jobs();
  std::optional<std::uint64_t> config_seed;
  if (!f.config.empty()) {
    const auto j = read_json(f.config);
    detail::check_keys(j,
                       {"models", "data", "results", "out", "seed", "jobs", "folds", "extraction", "sim", "ga",
                        "objective", "report"},
                       "top level");
    if (j.contains("models")) {
      const auto& m = j["models"];
      if (m.is_string()) {
        rc.models = parse_models(m.get<std::string>());
      } else if (m.is_array()) {
        rc.models.clear();
        for (const auto& name : m) rc.models.push_back(model_from_name(name.get<std::string>()));
      } else {
        throw InputError("config key 'models' must be a string or an array");
      }
    }
    detail::read_key(j, "data", rc.data);
    detail::read_key(j, "results", rc.results);
    detail::read_key(j, "out", rc.out);
    std::uint64_t s = 0;
    if (j.contains("seed")) {
      detail::read_key(j, "seed", s);
      config_seed = s;
    }
    detail::read_key(j, "jobs", rc.jobs);
    detail::read_key(j, "folds", rc.folds);
    if (j.contains("extraction")) apply_json(j["extraction"], rc.extraction);
    if (j.contains("sim")) apply_json(j["sim"], rc.sim);
    if (j.contains("ga")) {
      GaConfig probe;
      apply_json(j["ga"], probe);  // validates keys and types
      rc.ga_overrides = j["ga"];
    }
    if (j.contains("objective")) apply_json(j["objective"], rc.objective);
    if (j.contains("report")) {
      detail::check_keys(j["report"], {"overlays", "max_overlays"}, "report");
      detail::read_key(j["report"], "overlays", rc.overlays);
      detail::read_key(j["report"], "max_overlays", rc.max_overlays);
    }
  }

  if (f.seed) {
    rc.seed = *f.seed;
  } else if (config_seed) {
    rc.seed = *config_seed;
  } else if (const char* env = std::getenv("CFLAB_SEED"); env && *env) {
    std::uint64_t s = 0;
    if (!detail::parse_number(env, s)) throw InputError(std::string("CFLAB_SEED is not an integer: '") + env + "'");
    rc.seed = s;
  }
  if (f.jobs) rc.jobs = *f.jobs;
  if (rc.jobs == 0) rc.jobs = 1;
  if (!f.out.empty()) rc.out = f.out;
  if (!f.models.empty()) rc.models = parse_models(f.models);
  if (!f.data.empty()) rc.data = f.data;
  if (!f.results.empty()) rc.results = f.results;
  if (rc.results.empty()) rc.results = rc.out;
  if (f.folds) rc.folds = *f.folds;
  if (f.max_gap) rc.extraction.max_gap = *f.max_gap;
  if (f.max_lateral) rc.extraction.max_lateral = *f.max_lateral;
  if (f.min_duration) rc.extraction.min_duration = *f.min_duration;
  if (f.max_dropout) rc.extraction.max_dropout = *f.max_dropout;
  if (f.dt) rc.sim.dt = *f.dt;
  if (f.collision_threshold) rc.sim.collision_threshold = *f.collision_threshold;
  if (f.crash_penalty) rc.objective.crash_penalty = *f.crash_penalty;
  if (f.aggregation == "pooled") rc.objective.aggregation = Aggregation::pooled;
  else if (f.aggregation == "mean_of_periods") rc.objective.aggregation = Aggregation::mean_of_periods;
  else if (!f.aggregation.empty()) throw InputError("--aggregation must be 'pooled' or 'mean_of_periods'");

  rc.sim.rng_seed = rc.seed;
  rc.extraction.validate();
  (void)rc.sim.substeps();
  if (rc.folds == 0) throw InputError("--folds must be positive");
  return rc;
}

GaConfig ga_for(const RunConfig& rc, ModelKind kind) {
  auto ga = GaConfig::for_model(kind);
  apply_json(rc.ga_overrides, ga);
  ga.seed = rc.seed;
  ga.validate();
  return ga;
}

void log_units_once() {
  static std::once_flag once;
  std::call_once(once, [] {
    std::cerr << "cflab: desired-speed parameters (v_des, v0) are in km/h; trajectory speeds are in m/s\n";
  });
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

std::string driver_from_path(const std::string& path) { return fs::path(path).stem().string(); }

std::vector<TrajectorySample> load_driving(const std::string& path) {
  auto table = load_trajectory_file(path);
  try {
    return resample_10hz(table.samples);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

double lv_length_of(const std::string& path) {
  return load_trajectory_file(path).lv_length.value_or(kDefaultLvLength);
}

// ---------------------------------------------------------------------------
// extract

struct ExtractFlags {
  std::vector<std::string> inputs;
  bool report = false;
};

int cmd_extract(const RunConfig& rc, const ExtractFlags& f) {
  json manifest = {{"criteria", to_json(rc.extraction)}, {"periods", json::array()}};
  std::vector<double> durations;
  std::ostringstream report;
  report << "driver_id,period_id,t_start,duration_s,lv_id,mean_gap_m,mean_fv_speed_mps,mean_lv_speed_mps,"
            "max_abs_lateral_m\n";
  for (const auto& path : f.inputs) {
    const auto driver = driver_from_path(path);
    const auto table = load_trajectory_file(path);
    std::vector<TrajectorySample> samples;
    try {
      samples = resample_10hz(table.samples);
    } catch (const InputError& e) {
      throw InputError(path + ": " + e.what());
    }
    const auto periods =
        extract_periods(samples, rc.extraction, driver, table.lv_length.value_or(kDefaultLvLength));
    DriverDataset ds{driver, periods};
    write_dataset(rc.out, ds);
    for (const auto& p : periods) {
      manifest["periods"].push_back(period_manifest(p));
      durations.push_back(p.duration());
      double gap = 0, fv = 0, lv = 0, lat = 0;
      for (const auto& s : p.samples) {
        gap += s.gap;
        fv += s.fv_speed;
        lv += s.lv_speed;
        lat = std::max(lat, std::abs(s.lateral_offset));
      }
      const auto n = static_cast<double>(p.samples.size());
      report << driver << ',' << p.period_id << ',' << format_number(p.t_start()) << ','
             << format_number(p.duration()) << ',' << p.lv_id() << ',' << format_number(gap / n) << ','
             << format_number(fv / n) << ',' << format_number(lv / n) << ',' << format_number(lat) << '\n';
    }
    std::cout << driver << ": " << periods.size() << " periods\n";
  }
  write_json(fs::path(rc.out) / "manifest.json", manifest);
  if (f.report) write_file(fs::path(rc.out) / "report.csv", report.str());
  std::cout << "periods: " << durations.size();
  if (!durations.empty()) {
    const auto s = summarize(durations);
    std::cout << "  duration s: total " << fixed(s.mean * static_cast<double>(s.n), 1) << ", min "
              << fixed(*std::min_element(durations.begin(), durations.end()), 1) << ", mean " << fixed(s.mean, 1)
              << ", max " << fixed(*std::max_element(durations.begin(), durations.end()), 1);
  }
  std::cout << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateFlags {
  std::string params;
  std::vector<std::string> periods;
  bool trace = false;
};

AnyParams load_params(ModelKind kind, const std::string& path) {
  if (path.empty()) return median_params(kind);
  auto j = read_json(path);
  const std::string name(model_name(kind));
  if (j.contains(name) && j[name].is_object()) j = j[name];
  return params_from_json(kind, j);
}

int cmd_simulate(const RunConfig& rc, const SimulateFlags& f) {
  log_units_once();
  std::vector<CarFollowingPeriod> periods;
  for (const auto& p : f.periods) periods.push_back(load_period(p));
  if (!rc.data.empty()) {
    for (auto& ds : load_dataset_dir(rc.data)) {
      for (auto& p : ds.periods) periods.push_back(std::move(p));
    }
  }
  if (periods.empty()) throw InputError("nothing to simulate: give --data or period files");
  json out = json::object();
  for (auto kind : rc.models) {
    const auto params = load_params(kind, f.params);
    const std::string name(model_name(kind));
    json per_period = json::array();
    for (const auto& p : periods) {
      const auto r = simulate_period(params, p, rc.sim);
      json row = {{"driver_id", p.driver_id}, {"period_id", p.period_id}, {"collided", r.collided},
                  {"truncated", r.truncated}};
      if (r.collision_time) row["collision_time"] = *r.collision_time;
      per_period.push_back(row);
      if (f.trace) {
        std::ostringstream csv;
        write_trace(csv, r, p);
        const auto driver = p.driver_id.empty() ? std::string("period") : p.driver_id;
        write_file(fs::path(rc.out) / "traces" / name / driver / (p.period_id + ".csv"), csv.str());
      }
    }
    const auto rep = evaluate_periods(params, periods, rc.sim, rc.objective.aggregation);
    out[name] = {{"params", params_to_json(params)}, {"errors", to_json(rep)}, {"periods", per_period}};
    std::cout << name << ": rmspe_spacing " << fixed(rep.rmspe_spacing) << ", rmspe_speed "
              << fixed(rep.rmspe_speed) << ", collisions " << rep.collided_count << '/' << rep.n_periods << '\n';
  }
  write_json(fs::path(rc.out) / "simulate.json", out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateFlags {
  std::string progress;
};

std::string progress_line(std::size_t gen, double best, double mean) {
  json j = {{"generation", gen}, {"best", best}, {"mean", mean}};
  return j.dump();
}

int cmd_calibrate(const RunConfig& rc, const CalibrateFlags& f) {
  log_units_once();
  if (rc.data.empty()) throw InputError("calibrate needs --data DIR");
  const auto datasets = load_dataset_dir(rc.data);
  std::ostringstream progress;
  for (auto kind : rc.models) {
    const std::string name(model_name(kind));
    const auto ga = ga_for(rc, kind);
    CalibrationOptions opts;
    opts.folds = rc.folds;
    opts.split_seed = rc.seed;
    opts.objective = rc.objective;
    opts.jobs = rc.jobs;
    for (const auto& ds : datasets) {
      std::vector<std::vector<std::string>> lines(rc.folds);
      if (!f.progress.empty()) {
        opts.progress = [&](std::size_t fold, std::size_t gen, double best, double mean) {
          lines[fold].push_back(progress_line(gen, best, mean));
        };
      }
      CalibrationResult res;
      try {
        res = calibrate_driver(kind, ds, ga, rc.sim, opts);
      } catch (const GaObjectiveError& e) {
        throw ComputeError(name + " driver '" + ds.driver_id + "': " + e.what());
      } catch (const ComputeError& e) {
        throw ComputeError(name + " driver '" + ds.driver_id + "': " + e.what());
      }
      write_calibration(rc.results, res, ds);
      for (std::size_t k = 0; k < lines.size(); ++k) {
        for (const auto& l : lines[k]) progress << l << '\n';
      }
      std::cout << name << ' ' << ds.driver_id << ": calibration rmspe " << fixed(res.mean_calibration_rmspe)
                << ", validation rmspe spacing " << fixed(res.mean_validation_rmspe_spacing) << ", speed "
                << fixed(res.mean_validation_rmspe_speed) << ", collisions " << res.validation_collisions << '\n';
    }
  }
  if (!f.progress.empty()) write_file(f.progress, progress.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// crossval: re-validates stored fold genomes on their held-out periods

DriverDataset* find_dataset(std::vector<DriverDataset>& all, const std::string& id) {
  for (auto& d : all) {
    if (d.driver_id == id) return &d;
  }
  return nullptr;
}

int cmd_crossval(const RunConfig& rc) {
  if (rc.data.empty()) throw InputError("crossval needs --data DIR");
  auto datasets = load_dataset_dir(rc.data);
  for (auto kind : rc.models) {
    const std::string name(model_name(kind));
    const auto drivers = result_drivers(rc.results, kind);
    if (drivers.empty()) throw InputError("no " + name + " results under '" + rc.results + "'");
    json out = json::array();
    for (const auto& id : drivers) {
      auto* ds = find_dataset(datasets, id);
      if (!ds) throw InputError("driver '" + id + "' has results but no data under '" + rc.data + "'");
      auto res = load_calibration(driver_results_dir(rc.results, kind, id), kind, ds);
      bool consistent = true;
      json folds = json::array();
      for (auto& fr : res.folds) {
        const auto params = params_from_genome(kind, fr.genome);
        const auto val = evaluate_periods(params, select_periods(*ds, fr.validation_periods), rc.sim,
                                          rc.objective.aggregation);
        consistent = consistent && val.rmspe_spacing == fr.validation_rmspe_spacing &&
                     val.collided_count == fr.validation_collisions;
        fr.validation_rmspe_spacing = val.rmspe_spacing;
        fr.validation_rmspe_speed = val.rmspe_speed;
        fr.validation_collisions = val.collided_count;
        folds.push_back({{"fold", fr.fold + 1}, {"validation", to_json(val)}});
      }
      res.update_averages();
      out.push_back({{"driver_id", id},
                     {"folds", folds},
                     {"mean_validation_rmspe_spacing", res.mean_validation_rmspe_spacing},
                     {"mean_validation_rmspe_speed", res.mean_validation_rmspe_speed},
                     {"validation_collisions", res.validation_collisions},
                     {"matches_stored", consistent}});
      std::cout << name << ' ' << id << ": validation rmspe spacing " << fixed(res.mean_validation_rmspe_spacing)
                << ", speed " << fixed(res.mean_validation_rmspe_speed) << ", collisions "
                << res.validation_collisions << (consistent ? "" : " (differs from stored results)") << '\n';
    }
    write_json(fs::path(rc.results) / name / "crossval.json", out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// interdriver

int cmd_interdriver(const RunConfig& rc) {
  if (rc.data.empty()) throw InputError("interdriver needs --data DIR");
  auto datasets = load_dataset_dir(rc.data);
  for (auto kind : rc.models) {
    const std::string name(model_name(kind));
    const auto drivers = result_drivers(rc.results, kind);
    std::vector<CalibrationResult> results;
    std::vector<DriverDataset> used;
    for (const auto& id : drivers) {
      auto* ds = find_dataset(datasets, id);
      if (!ds) throw InputError("driver '" + id + "' has results but no data under '" + rc.data + "'");
      results.push_back(load_calibration(driver_results_dir(rc.results, kind, id), kind, ds));
      used.push_back(*ds);
    }
    const auto m = inter_driver_matrix(kind, results, used, rc.sim, rc.objective.aggregation);
    const auto dir = fs::path(rc.results) / name;
    std::ostringstream spacing, speed;
    write_matrix_csv(spacing, {m.driver_ids, m.spacing});
    write_matrix_csv(speed, {m.driver_ids, m.speed});
    write_file(dir / "interdriver_spacing.csv", spacing.str());
    write_file(dir / "interdriver_speed.csv", speed.str());
    write_json(dir / "interdriver.json", {{"drivers", m.driver_ids},
                                          {"collisions", m.collisions},
                                          {"off_diagonal_collisions", m.off_diagonal_collisions},
                                          {"mean_diagonal_spacing", m.mean_diagonal(m.spacing)},
                                          {"mean_off_diagonal_spacing", m.mean_off_diagonal(m.spacing)},
                                          {"mean_diagonal_speed", m.mean_diagonal(m.speed)},
                                          {"mean_off_diagonal_speed", m.mean_off_diagonal(m.speed)}});
    std::cout << name << ": spacing rmspe diagonal " << fixed(m.mean_diagonal(m.spacing)) << ", off-diagonal "
              << fixed(m.mean_off_diagonal(m.spacing)) << "; collisions " << m.collisions << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synthetic

struct SyntheticFlags {
  std::string params;
  std::string seed_period;
  bool collapse_bounds = false;
};

int cmd_synthetic(const RunConfig& rc, const SyntheticFlags& f) {
  log_units_once();
  const auto seed = f.seed_period.empty() ? varied_speed_period() : load_period(f.seed_period);
  json summary = json::object();
  for (auto kind : rc.models) {
    const std::string name(model_name(kind));
    const auto truth = load_params(kind, f.params);
    if (!within_bounds(truth)) throw InputError(name + " parameters are outside the calibration bounds");
    auto ga = ga_for(rc, kind);
    ga.jobs = rc.jobs;
    std::optional<Bounds> bounds;
    if (f.collapse_bounds) bounds = Bounds::point(genome_of(truth));
    SyntheticReport rep;
    try {
      rep = synthetic_verify(truth, seed, ga, rc.sim, bounds);
    } catch (const ComputeError& e) {
      throw ComputeError(name + ": " + e.what());
    }
    const auto recovered = params_from_genome(kind, rep.recovered_genome);
    json j = {{"model", name},
              {"true", params_to_json(truth)},
              {"recovered", params_to_json(recovered)},
              {"rmspe", rep.rmspe},
              {"collided", rep.collided},
              {"generations", rep.ga.generations_run},
              {"termination_reason", to_string(rep.ga.termination_reason)},
              {"run_best_fitness", rep.run_best_fitness}};
    write_json(fs::path(rc.out) / "synthetic" / (name + ".json"), j);
    summary[name] = {{"rmspe", rep.rmspe}, {"collided", rep.collided}};

    std::cout << name << ": rmspe " << format_number(rep.rmspe) << (rep.collided ? " (collided)" : "") << '\n';
    const auto specs = param_specs(kind);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      std::cout << "  " << specs[i].name << " true " << fixed(rep.true_genome[i]) << " recovered "
                << fixed(rep.recovered_genome[i]) << '\n';
    }
  }
  write_json(fs::path(rc.out) / "synthetic" / "summary.json", summary);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// observe

struct ObserveFlags {
  std::vector<std::string> inputs;
  bool percentile = false;
};

json observed_json(const ObservedIdmParams& o) {
  auto field = [](const ObservedValue& v) {
    json j = {{"samples", v.samples}};
    j["value"] = v.value ? json(*v.value) : json(nullptr);
    return j;
  };
  return {{"a_max", field(o.a_max)}, {"v_des", field(o.v_des)}, {"b_comf", field(o.b_comf)},
          {"s_jam", field(o.s_jam)}, {"t_des", field(o.t_des)}, {"beta", o.beta}};
}

int cmd_observe(const RunConfig& rc, const ObserveFlags& f) {
  log_units_once();
  ObservationOptions opt;
  opt.free_gap = rc.extraction.max_gap;
  opt.use_percentile = f.percentile;
  const std::vector<std::string> fields{"a_max", "v_des", "b_comf", "s_jam", "t_des"};
  std::map<std::string, std::vector<std::optional<double>>> observed;  // field -> per driver
  std::vector<std::string> drivers;
  std::ostringstream csv;
  csv << "driver_id";
  for (const auto& n : fields) csv << ',' << n << ',' << n << "_samples";
  csv << '\n';
  for (const auto& path : f.inputs) {
    const auto driver = driver_from_path(path);
    const auto samples = load_driving(path);
    const auto periods = extract_periods(samples, rc.extraction, driver, lv_length_of(path));
    const auto o = estimate_observed_idm(samples, periods, opt);
    write_json(fs::path(rc.out) / "observed" / (driver + ".json"), observed_json(o));
    drivers.push_back(driver);
    const ObservedValue* vals[] = {&o.a_max, &o.v_des, &o.b_comf, &o.s_jam, &o.t_des};
    csv << driver;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      observed[fields[i]].push_back(vals[i]->value);
      csv << ',' << (vals[i]->value ? format_number(*vals[i]->value) : std::string()) << ',' << vals[i]->samples;
    }
    csv << '\n';
    std::cout << driver << ":";
    for (std::size_t i = 0; i < fields.size(); ++i) {
      std::cout << ' ' << fields[i] << '=' << (vals[i]->value ? fixed(*vals[i]->value, 3) : std::string("n/a"));
    }
    std::cout << '\n';
  }
  write_file(fs::path(rc.out) / "observed.csv", csv.str());

  // Correlate with calibrated IDM parameters when results are available.
  const auto idm_dir = fs::path(rc.results) / "idm";
  if (!fs::is_directory(idm_dir)) return kExitOk;
  std::ostringstream corr;
  corr << "parameter,n,pearson_r\n";
  const auto specs = param_specs(ModelKind::idm);
  for (std::size_t fi = 0; fi < fields.size(); ++fi) {
    std::size_t spec_index = 0;
    while (specs[spec_index].name != fields[fi]) ++spec_index;
    std::vector<double> x, y;
    for (std::size_t d = 0; d < drivers.size(); ++d) {
      const auto dir = idm_dir / drivers[d];
      if (!observed[fields[fi]][d] || !fs::exists(dir / "fold1.json")) continue;
      const auto res = load_calibration(dir, ModelKind::idm);
      double mean = 0;
      for (const auto& fr : res.folds) mean += fr.genome[spec_index];
      x.push_back(mean / static_cast<double>(res.folds.size()));
      y.push_back(*observed[fields[fi]][d]);
    }
    corr << fields[fi] << ',' << x.size() << ',';
    try {
      const double r = pearson_correlation(x, y);
      corr << format_number(r);
      std::cout << "pearson " << fields[fi] << ": " << fixed(r, 3) << " (n=" << x.size() << ")\n";
    } catch (const InputError&) {
      std::cout << "pearson " << fields[fi] << ": undefined (n=" << x.size() << ")\n";
    }
    corr << '\n';
  }
  write_file(fs::path(rc.out) / "correlation.csv", corr.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

std::string overlay_svg(const SimResult& r, const CarFollowingPeriod& p, const std::string& title) {
  svg::LinePlot plot;
  plot.title = title;
  plot.x_label = "time (s)";
  plot.y_label = "gap (m)";
  std::vector<double> obs;
  for (const auto& s : p.samples) obs.push_back(s.gap);
  plot.series.push_back({"observed", r.t, obs, false, false});
  plot.series.push_back({"simulated", r.t, r.sim_gap, false, true});
  if (r.collision_time) plot.markers.push_back({*r.collision_time, "collision t=" + fixed(*r.collision_time, 1)});
  return svg::render(plot);
}

int cmd_report(const RunConfig& rc) {
  std::vector<DriverDataset> datasets;
  if (!rc.data.empty() && rc.overlays) datasets = load_dataset_dir(rc.data);
  std::size_t reported = 0;
  for (auto kind : kAllModels) {
    const std::string name(model_name(kind));
    const auto drivers = result_drivers(rc.results, kind);
    if (drivers.empty()) continue;
    const auto dir = fs::path(rc.results) / name;
    std::vector<CalibrationResult> results;
    for (const auto& id : drivers) results.push_back(load_calibration(dir / id, kind));

    const auto genomes = fold_genomes(results);
    std::ostringstream summary;
    write_summary_csv(summary, summarize_params(kind, genomes));
    write_file(dir / "summary.csv", summary.str());

    std::ostringstream variability;
    variability << "parameter,intra_driver_std,inter_driver_std\n";
    for (const auto& v : param_variability(kind, results)) {
      variability << v.name << ',' << format_number(v.intra_driver_std) << ',' << format_number(v.inter_driver_std)
                  << '\n';
    }
    write_file(dir / "variability.csv", variability.str());

    std::vector<double> cal, val;
    for (const auto& r : results) {
      cal.push_back(r.mean_calibration_rmspe);
      val.push_back(r.mean_validation_rmspe_spacing);
    }
    const auto cal_curve = error_cdf_curve(cal);
    const auto val_curve = error_cdf_curve(val);
    std::ostringstream c1, c2;
    write_cdf_csv(c1, cal_curve);
    write_cdf_csv(c2, val_curve);
    write_file(dir / "cdf_calibration.csv", c1.str());
    write_file(dir / "cdf_validation.csv", c2.str());

    svg::LinePlot cdf;
    cdf.title = name + " spacing RMSPE c.d.f.";
    cdf.x_label = "RMSPE";
    cdf.y_label = "F";
    cdf.y_min = 0;
    cdf.y_max = 1;
    for (const auto& [label, curve] : {std::pair{"calibration", &cal_curve}, std::pair{"validation", &val_curve}}) {
      svg::Series s{label, {}, {}, true, false};
      double prev = 0;
      for (const auto& [e, F] : *curve) {
        s.x.push_back(e);
        s.y.push_back(prev);
        s.x.push_back(e);
        s.y.push_back(F);
        prev = F;
      }
      s.step = false;
      cdf.series.push_back(std::move(s));
    }
    write_file(dir / "cdf.svg", svg::render(cdf));

    const auto bars = param_bars(kind, results);
    std::ostringstream bars_csv;
    write_bars_csv(bars_csv, bars);
    write_file(dir / "bars.csv", bars_csv.str());
    for (std::size_t i = 0; i < bars.params.size(); ++i) {
      svg::BarPlot b;
      b.title = name + " " + bars.params[i] + " (mean +- std over folds)";
      b.y_label = bars.params[i] + " (" + std::string(param_specs(kind)[i].unit) + ")";
      b.labels = bars.drivers;
      b.values = bars.mean[i];
      b.errors = bars.std[i];
      write_file(dir / ("bars_" + bars.params[i] + ".svg"), svg::render(b));
    }

    for (const char* which : {"spacing", "speed"}) {
      const auto path = dir / (std::string("interdriver_") + which + ".csv");
      if (!fs::exists(path)) continue;
      std::istringstream in(read_file(path));
      const auto m = read_matrix_csv(in);
      svg::Heatmap h{name + " inter-driver " + which + " RMSPE", m.labels, m.values};
      write_file(dir / (std::string("heatmap_") + which + ".svg"), svg::render(h));
    }

    for (auto& ds : datasets) {
      const auto it = std::find(drivers.begin(), drivers.end(), ds.driver_id);
      if (it == drivers.end()) continue;
      const auto res = load_calibration(dir / ds.driver_id, kind, &ds);
      std::size_t written = 0;
      for (const auto& fr : res.folds) {
        const auto params = params_from_genome(kind, fr.genome);
        for (auto idx : fr.validation_periods) {
          if (written >= rc.max_overlays) break;
          const auto& p = ds.periods[idx];
          const auto r = simulate_period(params, p, rc.sim);
          write_file(dir / "overlays" / ds.driver_id / (p.period_id + ".svg"),
                     overlay_svg(r, p, name + " " + ds.driver_id + " " + p.period_id));
          ++written;
        }
      }
    }
    std::cout << name << ": " << drivers.size() << " drivers, " << genomes.size() << " fold results\n";
    ++reported;
  }
  if (reported == 0) throw InputError("no calibration results under '" + rc.results + "'");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Car-following model calibration and validation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "Seed for splits, GA and W99 noise (fallback: CFLAB_SEED)");
  app.add_option("--jobs", g.jobs, "Worker threads (default: number of processors)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--models", g.models, "Comma-separated model names or 'all'");
  app.add_option("--model", g.models, "Alias of --models");
  app.add_option("--data", g.data, "Dataset directory written by 'extract'");
  app.add_option("--results", g.results, "Results directory (default: --out)");
  app.add_option("--folds", g.folds, "Cross-validation folds");
  app.add_option("--max-gap", g.max_gap, "Extraction: gap limit (m)");
  app.add_option("--max-lateral", g.max_lateral, "Extraction: lateral offset limit (m)");
  app.add_option("--min-duration", g.min_duration, "Extraction: minimum period duration (s)");
  app.add_option("--max-dropout", g.max_dropout, "Extraction: longest bridged dropout (s)");
  app.add_option("--dt", g.dt, "Integration step (s), must divide 0.1");
  app.add_option("--collision-threshold", g.collision_threshold, "Gap at or below which a run collides (m)");
  app.add_option("--crash-penalty", g.crash_penalty, "Objective penalty per collided period");
  app.add_option("--aggregation", g.aggregation, "pooled or mean_of_periods");

  ExtractFlags ef;
  auto* extract = app.add_subcommand("extract", "Extract car-following periods from trajectory CSVs");
  extract->add_option("inputs", ef.inputs, "Trajectory CSV files, one per driver")->required();
  extract->add_flag("--report", ef.report, "Write per-period summary rows for review");

  SimulateFlags sf;
  auto* simulate = app.add_subcommand("simulate", "Simulate periods with given parameters");
  simulate->add_option("periods", sf.periods, "Period CSV files");
  simulate->add_option("--params", sf.params, "Parameter JSON (default: median parameters)");
  simulate->add_flag("--trace", sf.trace, "Write per-period trace CSVs");

  CalibrateFlags cf;
  auto* calibrate = app.add_subcommand("calibrate", "K-fold calibration and validation per driver");
  calibrate->add_option("--progress", cf.progress, "Write GA progress as JSON lines to this file");

  auto* crossval = app.add_subcommand("crossval", "Re-validate stored fold parameters");
  auto* interdriver = app.add_subcommand("interdriver", "Inter-driver validation matrices");

  SyntheticFlags yf;
  auto* synthetic = app.add_subcommand("synthetic", "Calibrate on data generated by known parameters");
  synthetic->add_option("--params", yf.params, "True parameter JSON (default: median parameters)");
  synthetic->add_option("--seed-period", yf.seed_period, "Period CSV whose leader drives the synthetic run");
  synthetic->add_flag("--collapse-bounds", yf.collapse_bounds, "Restrict the search to the true parameters");

  ObserveFlags of;
  auto* observe = app.add_subcommand("observe", "Estimate IDM parameters directly from driving data");
  observe->add_option("inputs", of.inputs, "Trajectory CSV files, one per driver")->required();
  observe->add_flag("--percentile", of.percentile, "Use the 99.5th percentile of acceleration magnitudes");

  auto* report = app.add_subcommand("report", "Summaries, c.d.f.s and plots from a results directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    const auto rc = resolve_config(g);
    if (extract->parsed()) return cmd_extract(rc, ef);
    if (simulate->parsed()) return cmd_simulate(rc, sf);
    if (calibrate->parsed()) return cmd_calibrate(rc, cf);
    if (crossval->parsed()) return cmd_crossval(rc);
    if (interdriver->parsed()) return cmd_interdriver(rc);
    if (synthetic->parsed()) return cmd_synthetic(rc, yf);
    if (observe->parsed()) return cmd_observe(rc, of);
    if (report->parsed()) return cmd_report(rc);
  } catch (const InputError& e) {
    std::cerr << "cflab: " << e.what() << '\n';
    return kExitInput;
  } catch (const ComputeError& e) {
    std::cerr << "cflab: " << e.what() << '\n';
    return kExitCompute;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "cflab: " << e.what() << '\n';
    return kExitInput;
  } catch (const json::exception& e) {
    std::cerr << "cflab: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "cflab: " << e.what() << '\n';
    return kExitCompute;
  }
  return kExitInput;
}
