#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <numeric>

#include "cflab/ga.hpp"

using namespace cflab;

namespace {

double sphere(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return s;
}

Bounds cube(std::size_t d, double lo, double hi) { return {std::vector<double>(d, lo), std::vector<double>(d, hi)}; }

GaConfig small_config(std::uint64_t seed = 1) {
  GaConfig c;
  c.pop_size = 40;
  c.max_generations = 60;
  c.stall_generations = 20;
  c.seed = seed;
  c.n_restarts = 1;
  return c;
}

}  // namespace

TEST(Population, Containment) {
  Rng rng(0);
  const auto pop = initialize_population(cube(2, 0, 1), 4, rng);
  ASSERT_EQ(pop.size(), 4u);
  for (const auto& g : pop) {
    for (double v : g) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Population, PointBounds) {
  Rng rng(0);
  const auto pop = initialize_population({{2.0, -1.0}, {2.0, -1.0}}, 10, rng);
  for (const auto& g : pop) EXPECT_EQ(g, (Genome{2.0, -1.0}));
}

TEST(Population, SeedDeterminesPopulation) {
  Rng a(9), b(9), c(10);
  const auto b1 = Bounds::of(ModelKind::w99);
  EXPECT_EQ(initialize_population(b1, 30, a), initialize_population(b1, 30, b));
  EXPECT_NE(initialize_population(b1, 30, a), initialize_population(b1, 30, c));
}

TEST(Population, DegenerateBoundsThrow) {
  Rng rng(0);
  EXPECT_THROW(initialize_population({{1.0}, {0.0}}, 3, rng), InputError);
}

TEST(RankScale, Examples) {
  EXPECT_EQ(rank_scale(std::vector<double>{5.0}), std::vector<double>{1.0});
  const auto w = rank_scale(std::vector<double>{0.1, 0.4, 0.2, 0.3});
  const double raw[] = {1, 1 / std::sqrt(2.0), 1 / std::sqrt(3.0), 0.5};
  const double sum = raw[0] + raw[1] + raw[2] + raw[3];
  EXPECT_NEAR(raw[1], 0.7071, 1e-4);
  EXPECT_NEAR(raw[2], 0.5774, 1e-4);
  EXPECT_NEAR(w[0], raw[0] / sum, 1e-15);
  EXPECT_NEAR(w[2], raw[1] / sum, 1e-15);
  EXPECT_NEAR(w[3], raw[2] / sum, 1e-15);
  EXPECT_NEAR(w[1], raw[3] / sum, 1e-15);
}

TEST(RankScale, TiesKeepInputOrder) {
  const auto w = rank_scale(std::vector<double>{1.0, 1.0, 0.5});
  EXPECT_GT(w[2], w[0]);
  EXPECT_GT(w[0], w[1]);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
}

TEST(Sus, MassConcentration) {
  Rng rng(3);
  for (auto i : select_parents_sus(std::vector<double>{1, 0, 0}, 7, rng)) EXPECT_EQ(i, 0u);
}

TEST(Sus, UniformWeightsPickEachOnce) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(s);
    const auto idx = select_parents_sus(std::vector<double>(4, 0.25), 4, rng);
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3}));
  }
}

TEST(Sus, CountsWithinOneOfExpectation) {
  Rng rng(5);
  const auto w = rank_scale(std::vector<double>{3, 1, 4, 1.5, 9, 2, 6});
  const std::size_t n = 20;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<int> count(w.size());
    for (auto i : select_parents_sus(w, n, rng)) ++count[i];
    for (std::size_t i = 0; i < w.size(); ++i) {
      EXPECT_LE(std::abs(count[i] - n * w[i]), 1.0 + 1e-9);
    }
  }
  Rng a(8), b(8);
  EXPECT_EQ(select_parents_sus(w, 11, a), select_parents_sus(w, 11, b));
}

TEST(Crossover, MaskSemantics) {
  const Genome p1{1, 2, 3}, p2{4, 5, 6};
  EXPECT_EQ(crossover_scatter(p1, p2, std::vector<bool>{true, false, true}), (Genome{1, 5, 3}));
  EXPECT_EQ(crossover_scatter(p1, p2, std::vector<bool>(3, true)), p1);
  Rng rng(1);
  EXPECT_EQ(crossover_scatter(p1, p1, rng), p1);
  for (int i = 0; i < 100; ++i) {
    const auto c = crossover_scatter(p1, p2, rng);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_TRUE(c[k] == p1[k] || c[k] == p2[k]);
  }
  EXPECT_THROW(crossover_scatter(p1, Genome{1, 2}, rng), InputError);
}

TEST(Mutation, ZeroScaleAndFullyShrunk) {
  const auto b = cube(3, -1, 1);
  const Genome g{0.1, -0.2, 0.3};
  Rng rng(2);
  GaConfig cfg;
  cfg.mutation_scale = 0;
  EXPECT_EQ(mutate_gaussian(g, b, 5, cfg, rng), g);
  cfg = GaConfig{};
  EXPECT_EQ(mutate_gaussian(g, b, cfg.max_generations, cfg, rng), g);
  EXPECT_NE(mutate_gaussian(g, b, 0, cfg, rng), g);
  EXPECT_DOUBLE_EQ(mutation_sigma(150, cfg), 0.05);
}

TEST(Mutation, StaysInBounds) {
  const auto b = Bounds::of(ModelKind::gipps);
  GaConfig cfg;
  cfg.mutation_scale = 2.0;
  Rng rng(4);
  auto pop = initialize_population(b, 200, rng);
  for (const auto& g : pop) EXPECT_TRUE(b.contains(mutate_gaussian(g, b, 0, cfg, rng)));
}

TEST(Mutation, SpreadMatchesSigma) {
  const auto b = cube(1, -1000, 1000);
  GaConfig cfg;  // sigma = 0.1 * 2000 = 200
  Rng rng(6);
  double s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = mutate_gaussian(Genome{0}, b, 0, cfg, rng)[0];
    s2 += x * x;
  }
  EXPECT_NEAR(std::sqrt(s2 / n), 200.0, 5.0);
}

TEST(StallChange, WeightedAverage) {
  // changes (most recent first) 1, 2 with weights 1, 0.5
  EXPECT_DOUBLE_EQ(weighted_best_change(std::vector<double>{5, 3, 2}, 2), (1 * 1 + 0.5 * 2) / 1.5);
  EXPECT_DOUBLE_EQ(weighted_best_change(std::vector<double>{5, 3, 2}, 1), 1.0);
  EXPECT_EQ(weighted_best_change(std::vector<double>{4, 4, 4, 4}, 3), 0.0);
}

TEST(Evolve, SphereConverges) {
  GaConfig cfg;
  cfg.seed = 3;
  const auto r = evolve(sphere, cube(3, -5, 5), cfg);
  EXPECT_LT(r.best_fitness, 1e-3);
  EXPECT_NEAR(r.best_fitness, sphere(r.best_genome), 0.0);
}

TEST(Evolve, ConstantObjectiveStopsByTolerance) {
  auto cfg = small_config();
  const auto r = evolve([](std::span<const double>) { return 7.0; }, cube(2, 0, 1), cfg);
  EXPECT_EQ(r.termination_reason, Termination::tolerance);
  EXPECT_LE(r.generations_run, cfg.stall_generations + 1);
}

TEST(Evolve, MaxGenerationsTermination) {
  auto cfg = small_config();
  cfg.stall_generations = 1000;
  const auto r = evolve(sphere, cube(2, -1, 1), cfg);
  EXPECT_EQ(r.termination_reason, Termination::max_generations);
  EXPECT_EQ(r.generations_run, cfg.max_generations);
  EXPECT_EQ(r.fitness_history.size(), cfg.max_generations + 1);
}

TEST(Evolve, ElitismAndBounds) {
  const auto b = cube(4, -3, 2);
  std::atomic<bool> outside{false};
  auto f = [&](std::span<const double> x) {
    if (!b.contains(x)) outside = true;
    return sphere(x) + std::sin(5 * x[0]);
  };
  const auto r = evolve(f, b, small_config(9));
  EXPECT_FALSE(outside);
  for (std::size_t i = 1; i < r.fitness_history.size(); ++i) EXPECT_LE(r.fitness_history[i], r.fitness_history[i - 1]);
  EXPECT_EQ(r.best_fitness, *std::min_element(r.fitness_history.begin(), r.fitness_history.end()));
}

TEST(Evolve, ReproducibleAndJobsIndependent) {
  auto cfg = small_config(21);
  const auto a = evolve(sphere, cube(3, -5, 5), cfg);
  const auto b = evolve(sphere, cube(3, -5, 5), cfg);
  cfg.jobs = 4;
  const auto c = evolve(sphere, cube(3, -5, 5), cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Evolve, ProgressReportsEveryGeneration) {
  std::vector<std::size_t> gens;
  const auto r = evolve(sphere, cube(2, -1, 1), small_config(), [&](std::size_t g, double best, double mean) {
    gens.push_back(g);
    EXPECT_LE(best, mean);
  });
  ASSERT_EQ(gens.size(), r.fitness_history.size());
  for (std::size_t i = 0; i < gens.size(); ++i) EXPECT_EQ(gens[i], i);
}

TEST(Evolve, ObjectiveFailureCarriesGenome) {
  auto f = [](std::span<const double> x) -> double {
    if (x[0] > 0.5) throw std::runtime_error("boom");
    return x[0];
  };
  try {
    evolve(f, cube(1, 0, 1), small_config());
    FAIL() << "expected an exception";
  } catch (const GaObjectiveError& e) {
    EXPECT_GT(e.genome()[0], 0.5);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(Evolve, NanIsWorst) {
  auto f = [](std::span<const double> x) { return x[0] < 0 ? std::nan("") : x[0]; };
  const auto r = evolve(f, cube(1, -1, 1), small_config());
  EXPECT_GE(r.best_genome[0], 0.0);
  EXPECT_LT(r.best_fitness, 0.05);
}

TEST(Evolve, InvalidConfigThrows) {
  auto cfg = small_config();
  cfg.pop_size = 1;
  EXPECT_THROW(evolve(sphere, cube(1, 0, 1), cfg), InputError);
  cfg = small_config();
  cfg.elite_fraction = 0;
  EXPECT_THROW(evolve(sphere, cube(1, 0, 1), cfg), InputError);
}

TEST(Evolve, EliteCount) {
  // one generation: 30 initial evaluations, then ceil(5% of 30) = 2 elites
  // carried over and 28 offspring evaluated
  GaConfig cfg = small_config();
  cfg.pop_size = 30;
  cfg.max_generations = 1;
  cfg.stall_generations = 0;
  std::size_t calls = 0;
  evolve([&](std::span<const double> x) { ++calls; return x[0]; }, cube(1, 0, 1), cfg);
  EXPECT_EQ(calls, 30u + 28u);  // elites are not re-evaluated
}

TEST(Multistart, SingleRestartEqualsEvolve) {
  auto cfg = small_config(5);
  EXPECT_EQ(multistart(sphere, cube(2, -2, 2), cfg).best, evolve(sphere, cube(2, -2, 2), cfg));
}

TEST(Multistart, ReturnsMinimumOverSeeds) {
  auto cfg = small_config(100);
  cfg.n_restarts = 5;
  cfg.max_generations = 5;
  const auto m = multistart(sphere, cube(3, -5, 5), cfg);
  ASSERT_EQ(m.run_best_fitness.size(), 5u);
  for (std::size_t r = 0; r < 5; ++r) {
    auto one = cfg;
    one.seed = 100 + r;
    EXPECT_EQ(m.run_best_fitness[r], evolve(sphere, cube(3, -5, 5), one).best_fitness);
  }
  EXPECT_EQ(m.best.best_fitness, *std::min_element(m.run_best_fitness.begin(), m.run_best_fitness.end()));
}

TEST(Bounds, OfModel) {
  const auto b = Bounds::of(ModelKind::idm);
  EXPECT_EQ(b.size(), 6u);
  EXPECT_DOUBLE_EQ(b.lower[1], 1);
  EXPECT_DOUBLE_EQ(b.upper[1], 150);
  EXPECT_EQ(GaConfig::for_model(ModelKind::w99).pop_size, 500u);
  EXPECT_EQ(GaConfig::for_model(ModelKind::w99).max_generations, 1300u);
  EXPECT_EQ(GaConfig::for_model(ModelKind::w99).stall_generations, 150u);
  EXPECT_EQ(GaConfig::for_model(ModelKind::fvd).pop_size, 300u);
}
