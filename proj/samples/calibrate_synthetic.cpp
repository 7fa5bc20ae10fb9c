// Generates trajectories from a known IDM driver and recovers its parameters.
#include <cstdio>

#include "cflab/scenarios.hpp"
#include "cflab/workflow.hpp"

int main() {
  using namespace cflab;
  const IdmParams truth{1.2, 110, 4, 1.5, 1.5, 1.0};
  DriverDataset ds;
  ds.driver_id = "sample";
  for (int i = 0; i < 5; ++i) {
    const auto leader = varied_speed_period(25, 0.9 * i, "p00" + std::to_string(i + 1));
    auto p = generate_synthetic(truth, leader);
    p.period_id = leader.period_id;
    p.driver_id = ds.driver_id;
    ds.periods.push_back(std::move(p));
  }

  GaConfig ga;
  ga.pop_size = 60;
  ga.max_generations = 80;
  ga.stall_generations = 30;
  ga.n_restarts = 2;
  ga.seed = 1;
  const auto res = calibrate_driver(ModelKind::idm, ds, ga, {});

  const auto specs = param_specs(ModelKind::idm);
  const auto true_genome = genome_of(truth);
  for (const auto& f : res.folds) {
    std::printf("fold %zu: validation rmspe %.4f\n", f.fold + 1, f.validation_rmspe_spacing);
  }
  std::printf("%-8s %9s %9s\n", "param", "true", "fold 1");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::printf("%-8s %9.3f %9.3f\n", std::string(specs[i].name).c_str(), true_genome[i], res.folds[0].genome[i]);
  }
  std::printf("mean validation rmspe %.4f\n", res.mean_validation_rmspe_spacing);
}
