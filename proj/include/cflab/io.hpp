#pragma once

// File formats: JSON for parameters, configuration and results; CSV for
// periods, matrices, c.d.f. curves and parameter summaries; the on-disk
// dataset layout written by extraction.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cflab/error.hpp"
#include "cflab/ga.hpp"
#include "cflab/models.hpp"
#include "cflab/objective.hpp"
#include "cflab/simulator.hpp"
#include "cflab/trajectory.hpp"
#include "cflab/workflow.hpp"

namespace cflab {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Shortest representation that reads back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file so readers never see partial output.
inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw InputError("write failed for '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw InputError("'" + path.string() + "': " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Parameters

inline json params_to_json(const AnyParams& params) {
  json j = json::object();
  const auto specs = param_specs(kind_of(params));
  const auto g = genome_of(params);
  for (std::size_t i = 0; i < specs.size(); ++i) j[std::string(specs[i].name)] = g[i];
  return j;
}

/// Every field must be present; unknown keys are rejected.
inline AnyParams params_from_json(ModelKind kind, const json& j) {
  if (!j.is_object()) throw InputError("parameters must be a JSON object");
  const auto specs = param_specs(kind);
  Genome g;
  for (const auto& s : specs) {
    const auto it = j.find(std::string(s.name));
    if (it == j.end() || !it->is_number()) {
      throw InputError("missing numeric parameter '" + std::string(s.name) + "' for " + std::string(model_name(kind)));
    }
    g.push_back(it->get<double>());
  }
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(specs.begin(), specs.end(), [&](const ParamSpec& s) { return s.name == key; })) {
      throw InputError("unknown parameter '" + key + "' for " + std::string(model_name(kind)));
    }
  }
  return params_from_genome(kind, g);
}

inline json bounds_registry_json(ModelKind kind) {
  json arr = json::array();
  for (const auto& s : param_specs(kind)) {
    arr.push_back({{"name", s.name}, {"unit", s.unit}, {"description", s.description},
                   {"lower", s.lower}, {"upper", s.upper}, {"median", s.median}});
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Configuration sections. Readers apply only the keys that are present;
// seeds are set by the caller, not read from these sections.

namespace detail {

template <class T>
void read_key(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("config key '") + key + "' has the wrong type");
  }
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) throw InputError(std::string("config section '") + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw InputError(std::string("unknown key '") + key + "' in config section '" + section + "'");
    }
  }
}

}  // namespace detail

inline json to_json(const ExtractionCriteria& c) {
  return {{"max_gap", c.max_gap}, {"max_lateral", c.max_lateral}, {"min_duration", c.min_duration},
          {"max_dropout", c.max_dropout}};
}

inline void apply_json(const json& j, ExtractionCriteria& c) {
  detail::check_keys(j, {"max_gap", "max_lateral", "min_duration", "max_dropout"}, "extraction");
  detail::read_key(j, "max_gap", c.max_gap);
  detail::read_key(j, "max_lateral", c.max_lateral);
  detail::read_key(j, "min_duration", c.min_duration);
  detail::read_key(j, "max_dropout", c.max_dropout);
}

inline json to_json(const SimConfig& c) {
  return {{"dt", c.dt}, {"collision_threshold", c.collision_threshold},
          {"w99_rnd_mode", c.w99_rnd_mode == W99RndMode::per_step ? "per_step" : "frozen_zero"}};
}

inline void apply_json(const json& j, SimConfig& c) {
  detail::check_keys(j, {"dt", "collision_threshold", "w99_rnd_mode"}, "sim");
  detail::read_key(j, "dt", c.dt);
  detail::read_key(j, "collision_threshold", c.collision_threshold);
  std::string mode;
  detail::read_key(j, "w99_rnd_mode", mode);
  if (mode == "per_step") c.w99_rnd_mode = W99RndMode::per_step;
  else if (mode == "frozen_zero") c.w99_rnd_mode = W99RndMode::frozen_zero;
  else if (!mode.empty()) throw InputError("w99_rnd_mode must be 'per_step' or 'frozen_zero'");
}

inline json to_json(const GaConfig& c) {
  return {{"pop_size", c.pop_size},
          {"max_generations", c.max_generations},
          {"stall_generations", c.stall_generations},
          {"function_tolerance", c.function_tolerance},
          {"elite_fraction", c.elite_fraction},
          {"crossover_fraction", c.crossover_fraction},
          {"mutation_scale", c.mutation_scale},
          {"mutation_shrink", c.mutation_shrink},
          {"n_restarts", c.n_restarts}};
}

inline void apply_json(const json& j, GaConfig& c) {
  detail::check_keys(j,
                     {"pop_size", "max_generations", "stall_generations", "function_tolerance", "elite_fraction",
                      "crossover_fraction", "mutation_scale", "mutation_shrink", "n_restarts"},
                     "ga");
  detail::read_key(j, "pop_size", c.pop_size);
  detail::read_key(j, "max_generations", c.max_generations);
  detail::read_key(j, "stall_generations", c.stall_generations);
  detail::read_key(j, "function_tolerance", c.function_tolerance);
  detail::read_key(j, "elite_fraction", c.elite_fraction);
  detail::read_key(j, "crossover_fraction", c.crossover_fraction);
  detail::read_key(j, "mutation_scale", c.mutation_scale);
  detail::read_key(j, "mutation_shrink", c.mutation_shrink);
  detail::read_key(j, "n_restarts", c.n_restarts);
}

inline std::string_view to_string(Aggregation a) { return a == Aggregation::pooled ? "pooled" : "mean_of_periods"; }

inline json to_json(const ObjectiveConfig& c) {
  return {{"crash_penalty", c.crash_penalty}, {"aggregation", to_string(c.aggregation)}};
}

inline void apply_json(const json& j, ObjectiveConfig& c) {
  detail::check_keys(j, {"crash_penalty", "aggregation"}, "objective");
  detail::read_key(j, "crash_penalty", c.crash_penalty);
  std::string agg;
  detail::read_key(j, "aggregation", agg);
  if (agg == "pooled") c.aggregation = Aggregation::pooled;
  else if (agg == "mean_of_periods") c.aggregation = Aggregation::mean_of_periods;
  else if (!agg.empty()) throw InputError("aggregation must be 'pooled' or 'mean_of_periods'");
}

inline json to_json(const ErrorReport& r) {
  return {{"rmspe_spacing", r.rmspe_spacing},
          {"rmspe_speed", r.rmspe_speed},
          {"rmse_spacing", r.rmse_spacing},
          {"collided_count", r.collided_count},
          {"n_periods", r.n_periods}};
}

inline ErrorReport error_report_from_json(const json& j) {
  ErrorReport r;
  detail::read_key(j, "rmspe_spacing", r.rmspe_spacing);
  detail::read_key(j, "rmspe_speed", r.rmspe_speed);
  detail::read_key(j, "rmse_spacing", r.rmse_spacing);
  detail::read_key(j, "collided_count", r.collided_count);
  detail::read_key(j, "n_periods", r.n_periods);
  return r;
}

inline json to_json(const GaResult& r) {
  return {{"best_genome", r.best_genome},
          {"best_fitness", r.best_fitness},
          {"generations_run", r.generations_run},
          {"termination_reason", to_string(r.termination_reason)},
          {"fitness_history", r.fitness_history},
          {"mean_history", r.mean_history}};
}

// ---------------------------------------------------------------------------
// Calibration results

inline json fold_to_json(const CalibrationResult& res, std::size_t f, const DriverDataset& dataset) {
  const auto& fr = res.folds.at(f);
  auto ids = [&](const std::vector<std::size_t>& idx) {
    json a = json::array();
    for (auto i : idx) a.push_back(dataset.periods.at(i).period_id);
    return a;
  };
  const auto params = params_from_genome(res.model, fr.genome);
  return {{"driver_id", res.driver_id},
          {"model", model_name(res.model)},
          {"fold", fr.fold + 1},
          {"params", params_to_json(params)},
          {"genome", fr.genome},
          {"fitness", fr.fitness},
          {"generations", fr.generations},
          {"termination_reason", to_string(fr.termination)},
          {"calibration_periods", ids(fr.calibration_periods)},
          {"validation_periods", ids(fr.validation_periods)},
          {"calibration", {{"rmspe_spacing", fr.calibration_rmspe}, {"collided_count", fr.calibration_collisions}}},
          {"validation",
           {{"rmspe_spacing", fr.validation_rmspe_spacing},
            {"rmspe_speed", fr.validation_rmspe_speed},
            {"collided_count", fr.validation_collisions}}}};
}

inline json calibration_summary_json(const CalibrationResult& res) {
  return {{"driver_id", res.driver_id},
          {"model", model_name(res.model)},
          {"folds", res.folds.size()},
          {"mean_calibration_rmspe", res.mean_calibration_rmspe},
          {"mean_validation_rmspe_spacing", res.mean_validation_rmspe_spacing},
          {"mean_validation_rmspe_speed", res.mean_validation_rmspe_speed},
          {"validation_collisions", res.validation_collisions}};
}

/// Directory of one driver's results under a model tree.
inline fs::path driver_results_dir(const fs::path& results, ModelKind kind, const std::string& driver_id) {
  return results / std::string(model_name(kind)) / driver_id;
}

inline void write_calibration(const fs::path& results, const CalibrationResult& res, const DriverDataset& dataset) {
  const auto dir = driver_results_dir(results, res.model, res.driver_id);
  for (std::size_t f = 0; f < res.folds.size(); ++f) {
    write_json(dir / ("fold" + std::to_string(f + 1) + ".json"), fold_to_json(res, f, dataset));
  }
  write_json(dir / "result.json", calibration_summary_json(res));
}

/// Reads fold<k>.json files back; period ids are mapped to indices in `dataset`
/// when one is given.
inline CalibrationResult load_calibration(const fs::path& dir, ModelKind kind, const DriverDataset* dataset = nullptr) {
  CalibrationResult res;
  res.model = kind;
  for (std::size_t k = 1;; ++k) {
    const auto path = dir / ("fold" + std::to_string(k) + ".json");
    if (!fs::exists(path)) break;
    const auto j = read_json(path);
    FoldResult fr;
    fr.fold = k - 1;
    try {
      res.driver_id = j.at("driver_id").get<std::string>();
      if (j.at("model").get<std::string>() != model_name(kind)) {
        throw InputError("'" + path.string() + "' belongs to a different model");
      }
      fr.genome = genome_of(params_from_json(kind, j.at("params")));
      fr.fitness = j.at("fitness").get<double>();
      fr.generations = j.at("generations").get<std::size_t>();
      fr.termination = j.at("termination_reason").get<std::string>() == "tolerance" ? Termination::tolerance
                                                                                  : Termination::max_generations;
      fr.calibration_rmspe = j.at("calibration").at("rmspe_spacing").get<double>();
      fr.calibration_collisions = j.at("calibration").at("collided_count").get<std::size_t>();
      fr.validation_rmspe_spacing = j.at("validation").at("rmspe_spacing").get<double>();
      fr.validation_rmspe_speed = j.at("validation").at("rmspe_speed").get<double>();
      fr.validation_collisions = j.at("validation").at("collided_count").get<std::size_t>();
      if (dataset) {
        auto index_of = [&](const std::string& id) {
          for (std::size_t i = 0; i < dataset->periods.size(); ++i) {
            if (dataset->periods[i].period_id == id) return i;
          }
          throw InputError("period '" + id + "' referenced by '" + path.string() + "' is not in the dataset");
        };
        for (const auto& id : j.at("calibration_periods")) fr.calibration_periods.push_back(index_of(id));
        for (const auto& id : j.at("validation_periods")) fr.validation_periods.push_back(index_of(id));
      }
    } catch (const json::exception& e) {
      throw InputError("'" + path.string() + "': " + e.what());
    }
    res.folds.push_back(std::move(fr));
  }
  if (res.folds.empty()) throw InputError("no fold results in '" + dir.string() + "'");
  res.update_averages();
  return res;
}

/// Driver directories under results/<model>, sorted by name.
inline std::vector<std::string> result_drivers(const fs::path& results, ModelKind kind) {
  const auto dir = results / std::string(model_name(kind));
  std::vector<std::string> ids;
  if (!fs::is_directory(dir)) return ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "fold1.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Dataset layout: <dir>/<driver_id>/<period_id>.csv plus <period_id>.json

inline json period_manifest(const CarFollowingPeriod& p) {
  return {{"driver_id", p.driver_id}, {"period_id", p.period_id}, {"t_start", p.t_start()},
          {"duration_s", p.duration()},  {"lv_id", p.lv_id()},         {"lv_length_m", p.lv_length}};
}

inline void write_period(const fs::path& dir, const CarFollowingPeriod& p) {
  std::ostringstream csv;
  write_trajectory(csv, p.samples, p.lv_length);
  write_file(dir / (p.period_id + ".csv"), csv.str());
  write_json(dir / (p.period_id + ".json"), period_manifest(p));
}

inline void write_dataset(const fs::path& dir, const DriverDataset& ds) {
  for (const auto& p : ds.periods) write_period(dir / ds.driver_id, p);
}

inline TrajectoryTable load_trajectory_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  try {
    return load_trajectory(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

/// Reads a period CSV; driver id, period id and vehicle length come from the
/// sidecar JSON when present, otherwise from the file name and CSV.
inline CarFollowingPeriod load_period(const fs::path& csv_path) {
  auto table = load_trajectory_file(csv_path);
  CarFollowingPeriod p;
  p.samples = std::move(table.samples);
  p.period_id = csv_path.stem().string();
  p.lv_length = table.lv_length.value_or(kDefaultLvLength);
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  if (fs::exists(sidecar)) {
    const auto j = read_json(sidecar);
    detail::read_key(j, "driver_id", p.driver_id);
    detail::read_key(j, "period_id", p.period_id);
    detail::read_key(j, "lv_length_m", p.lv_length);
  }
  if (p.samples.size() < 2) throw InputError("'" + csv_path.string() + "' has fewer than two samples");
  return p;
}

inline DriverDataset load_driver_dir(const fs::path& dir) {
  DriverDataset ds;
  ds.driver_id = dir.filename().string();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto p = load_period(f);
    if (p.driver_id.empty()) p.driver_id = ds.driver_id;
    ds.periods.push_back(std::move(p));
  }
  ds.validate();
  return ds;
}

/// One DriverDataset per sub-directory, sorted by driver id.
inline std::vector<DriverDataset> load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<DriverDataset> out;
  for (const auto& d : subdirs) {
    auto ds = load_driver_dir(d);
    if (!ds.periods.empty()) out.push_back(std::move(ds));
  }
  if (out.empty()) throw InputError("no driver periods found under '" + dir.string() + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Result CSVs

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(std::istream& in, std::string_view expected_header) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (!expected_header.empty() && line != expected_header) {
    throw InputError("unexpected CSV header '" + line + "'");
  }
  std::vector<std::vector<std::string>> rows;
  rows.push_back({});
  for (auto f : split_csv(line)) rows.back().emplace_back(f);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    for (auto f : split_csv(line)) row.emplace_back(trim(f));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double to_double(const std::string& s, std::size_t line) {
  double v = 0;
  if (!parse_number(s, v)) throw InputError("line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline void write_cdf_csv(std::ostream& out, const std::vector<std::pair<double, double>>& curve) {
  out << "e,F\n";
  for (const auto& [e, f] : curve) out << format_number(e) << ',' << format_number(f) << '\n';
}

inline std::vector<std::pair<double, double>> read_cdf_csv(std::istream& in) {
  const auto rows = detail::read_csv_rows(in, "e,F");
  std::vector<std::pair<double, double>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw InputError("line " + std::to_string(r + 1) + ": expected 2 fields");
    out.emplace_back(detail::to_double(rows[r][0], r + 1), detail::to_double(rows[r][1], r + 1));
  }
  return out;
}

struct LabeledMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;  // [row][column]
};

/// Square matrix with a header row and a leading label column.
inline void write_matrix_csv(std::ostream& out, const LabeledMatrix& m) {
  out << "driver";
  for (const auto& l : m.labels) out << ',' << l;
  out << '\n';
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    out << m.labels[i];
    for (double v : m.values[i]) out << ',' << format_number(v);
    out << '\n';
  }
}

inline LabeledMatrix read_matrix_csv(std::istream& in) {
  const auto rows = detail::read_csv_rows(in, {});
  if (rows[0].empty() || rows[0][0] != "driver") throw InputError("matrix CSV must start with a 'driver' column");
  LabeledMatrix m;
  m.labels.assign(rows[0].begin() + 1, rows[0].end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != m.labels.size() + 1) throw InputError("line " + std::to_string(r + 1) + ": ragged row");
    if (rows[r][0] != m.labels[r - 1]) throw InputError("line " + std::to_string(r + 1) + ": row label mismatch");
    std::vector<double> row;
    for (std::size_t c = 1; c < rows[r].size(); ++c) row.push_back(detail::to_double(rows[r][c], r + 1));
    m.values.push_back(std::move(row));
  }
  if (m.values.size() != m.labels.size()) throw InputError("matrix CSV is not square");
  return m;
}

inline constexpr std::string_view kSummaryHeader = "parameter,unit,mean,median,std,p5,p95";

inline void write_summary_csv(std::ostream& out, const std::vector<ParamSummary>& rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    const auto& s = r.stats;
    out << r.name << ',' << r.unit << ',' << format_number(s.mean) << ',' << format_number(s.median) << ','
        << format_number(s.std) << ',' << format_number(s.p5) << ',' << format_number(s.p95) << '\n';
  }
}

inline std::vector<ParamSummary> read_summary_csv(std::istream& in) {
  const auto rows = detail::read_csv_rows(in, kSummaryHeader);
  std::vector<ParamSummary> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 7) throw InputError("line " + std::to_string(r + 1) + ": expected 7 fields");
    ParamSummary p;
    p.name = f[0];
    p.unit = f[1];
    p.stats.mean = detail::to_double(f[2], r + 1);
    p.stats.median = detail::to_double(f[3], r + 1);
    p.stats.std = detail::to_double(f[4], r + 1);
    p.stats.p5 = detail::to_double(f[5], r + 1);
    p.stats.p95 = detail::to_double(f[6], r + 1);
    out.push_back(std::move(p));
  }
  return out;
}

/// Per-driver fold mean and std of every parameter (bar-chart data).
struct ParamBars {
  std::vector<std::string> drivers;
  std::vector<std::string> params;
  std::vector<std::vector<double>> mean;  // [param][driver]
  std::vector<std::vector<double>> std;
};

inline ParamBars param_bars(ModelKind kind, std::span<const CalibrationResult> results) {
  ParamBars b;
  const auto specs = param_specs(kind);
  for (const auto& s : specs) b.params.emplace_back(s.name);
  b.mean.assign(specs.size(), {});
  b.std.assign(specs.size(), {});
  for (const auto& r : results) {
    b.drivers.push_back(r.driver_id);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      std::vector<double> vals;
      for (const auto& f : r.folds) vals.push_back(f.genome.at(i));
      const auto s = summarize(vals);
      b.mean[i].push_back(s.mean);
      b.std[i].push_back(s.std);
    }
  }
  return b;
}

inline void write_bars_csv(std::ostream& out, const ParamBars& b) {
  out << "parameter,driver,mean,std\n";
  for (std::size_t i = 0; i < b.params.size(); ++i) {
    for (std::size_t d = 0; d < b.drivers.size(); ++d) {
      out << b.params[i] << ',' << b.drivers[d] << ',' << format_number(b.mean[i][d]) << ','
          << format_number(b.std[i][d]) << '\n';
    }
  }
}

inline ParamBars read_bars_csv(std::istream& in) {
  const auto rows = detail::read_csv_rows(in, "parameter,driver,mean,std");
  ParamBars b;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 4) throw InputError("line " + std::to_string(r + 1) + ": expected 4 fields");
    auto pit = std::find(b.params.begin(), b.params.end(), f[0]);
    if (pit == b.params.end()) {
      b.params.push_back(f[0]);
      b.mean.emplace_back();
      b.std.emplace_back();
      pit = b.params.end() - 1;
    }
    const auto pi = static_cast<std::size_t>(pit - b.params.begin());
    if (pi == 0) b.drivers.push_back(f[1]);
    b.mean[pi].push_back(detail::to_double(f[2], r + 1));
    b.std[pi].push_back(detail::to_double(f[3], r + 1));
  }
  return b;
}

}  // namespace cflab
