// Replays a leader braking hard to a stop and reports how each model copes.
#include <cstdio>

#include "cflab/scenarios.hpp"
#include "cflab/simulator.hpp"

int main() {
  using namespace cflab;
  const auto stop = hard_stop_period(15.0, 3.0, 5.0, 10.0);
  std::printf("leader: %zu samples, %.1f s\n", stop.samples.size(), stop.duration());
  for (auto kind : kAllModels) {
    const auto params = median_params(kind);
    const auto r = simulate_period(params, stop);
    double min_gap = r.sim_gap.front();
    for (double g : r.sim_gap) min_gap = std::min(min_gap, g);
    std::printf("%-6s min gap %7.2f m  final speed %5.2f m/s  %s\n", std::string(model_name(kind)).c_str(), min_gap,
                r.sim_fv_speed.back(), r.collided ? "collision" : "no collision");
  }
  // a slow reacting GHR driver does not stop in time
  const auto ghr = simulate_period(GhrParams{1, 1, 1, 1}, stop);
  if (ghr.collision_time) std::printf("ghr (1,1,1,1) collides at t=%.1f s\n", *ghr.collision_time);
}
