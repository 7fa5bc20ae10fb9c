#pragma once

// Real-coded genetic algorithm: rank fitness scaling, stochastic uniform
// selection, elitism, scattered crossover and shrinking Gaussian mutation,
// plus a multistart wrapper.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cflab/error.hpp"
#include "cflab/models.hpp"
#include "cflab/parallel.hpp"

namespace cflab {

struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }
  double range(std::size_t i) const { return upper[i] - lower[i]; }

  void validate() const {
    if (lower.size() != upper.size() || lower.empty()) throw InputError("malformed bounds");
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(lower[i] <= upper[i])) {
        throw InputError("degenerate bounds at dimension " + std::to_string(i));
      }
    }
  }
  bool contains(std::span<const double> g) const {
    if (g.size() != size()) return false;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(g[i] >= lower[i] && g[i] <= upper[i])) return false;
    }
    return true;
  }

  static Bounds of(ModelKind kind) {
    Bounds b;
    for (const auto& s : param_specs(kind)) {
      b.lower.push_back(s.lower);
      b.upper.push_back(s.upper);
    }
    return b;
  }
  static Bounds point(std::span<const double> g) {
    return {std::vector<double>(g.begin(), g.end()), std::vector<double>(g.begin(), g.end())};
  }
};

struct GaConfig {
  std::size_t pop_size = 300;
  std::size_t max_generations = 300;
  std::size_t stall_generations = 100;
  double function_tolerance = 1e-6;
  double elite_fraction = 0.05;
  double crossover_fraction = 0.8;
  double mutation_scale = 0.1;   // initial sigma as a fraction of each bound range
  double mutation_shrink = 1.0;  // 1 = sigma reaches 0 at max_generations
  std::uint64_t seed = 0;
  std::size_t n_restarts = 12;
  std::size_t jobs = 1;  // fitness evaluations in flight; does not affect results

  void validate() const {
    auto frac = [](double f) { return f > 0 && f <= 1; };
    if (pop_size < 2) throw InputError("pop_size must be at least 2");
    if (max_generations < 1) throw InputError("max_generations must be at least 1");
    if (!frac(elite_fraction) || !frac(crossover_fraction)) {
      throw InputError("elite/crossover fractions must lie in (0, 1]");
    }
    if (!(mutation_scale >= 0) || !(mutation_shrink >= 0)) {
      throw InputError("mutation settings must be non-negative");
    }
    if (n_restarts < 1) throw InputError("n_restarts must be at least 1");
  }

  /// Population/generation/stall sizes used for each model family.
  static GaConfig for_model(ModelKind kind) {
    GaConfig c;
    if (kind == ModelKind::w99) {
      c.pop_size = 500;
      c.max_generations = 1300;
      c.stall_generations = 150;
    }
    return c;
  }
};

using Genome = std::vector<double>;

struct Individual {
  Genome genome;
  double fitness = 0.0;
};

enum class Termination { tolerance, max_generations };

inline std::string_view to_string(Termination t) {
  return t == Termination::tolerance ? "tolerance" : "max_generations";
}

struct GaResult {
  Genome best_genome;
  double best_fitness = 0.0;
  std::size_t generations_run = 0;
  Termination termination_reason = Termination::max_generations;
  std::vector<double> fitness_history;  // best per generation, initial population first
  std::vector<double> mean_history;     // mean finite fitness per generation

  bool operator==(const GaResult&) const = default;
};

/// Objective failure with the genome that triggered it.
class GaObjectiveError : public ComputeError {
 public:
  GaObjectiveError(const std::string& what, Genome genome)
      : ComputeError(what), genome_(std::move(genome)) {}
  const Genome& genome() const { return genome_; }

 private:
  Genome genome_;
};

template <class F>
concept Objective = std::invocable<const F&, std::span<const double>> &&
                    std::convertible_to<std::invoke_result_t<const F&, std::span<const double>>, double>;

// ---------------------------------------------------------------------------
// Operators

using Rng = std::mt19937_64;

inline std::vector<Genome> initialize_population(const Bounds& bounds, std::size_t pop_size, Rng& rng) {
  bounds.validate();
  std::vector<Genome> pop(pop_size, Genome(bounds.size()));
  for (auto& g : pop) {
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      if (bounds.lower[i] == bounds.upper[i]) {
        g[i] = bounds.lower[i];
      } else {
        g[i] = std::uniform_real_distribution<double>(bounds.lower[i], bounds.upper[i])(rng);
      }
    }
  }
  return pop;
}

/// Rank scaling: best (lowest) fitness gets rank 1, weight proportional to
/// 1/sqrt(rank), normalised to sum 1. Ties keep input order. Weights are
/// returned in input order.
inline std::vector<double> rank_scale(std::span<const double> fitness) {
  std::vector<std::size_t> order(fitness.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });
  std::vector<double> w(fitness.size());
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    w[order[r]] = 1.0 / std::sqrt(static_cast<double>(r + 1));
    sum += w[order[r]];
  }
  for (auto& x : w) x /= sum;
  return w;
}

/// Stochastic universal sampling: one offset in [0, 1/n), pointers 1/n apart.
inline std::vector<std::size_t> select_parents_sus(std::span<const double> weights, std::size_t n_parents,
                                                   Rng& rng) {
  std::vector<std::size_t> out;
  if (n_parents == 0 || weights.empty()) return out;
  out.reserve(n_parents);
  const double step = 1.0 / static_cast<double>(n_parents);
  const double offset = std::uniform_real_distribution<double>(0.0, step)(rng);
  double cumulative = weights[0];
  std::size_t i = 0;
  for (std::size_t k = 0; k < n_parents; ++k) {
    const double pointer = offset + static_cast<double>(k) * step;
    while (pointer >= cumulative && i + 1 < weights.size()) cumulative += weights[++i];
    out.push_back(i);
  }
  return out;
}

/// Child takes gene i from p1 where mask[i] is set, else from p2.
inline Genome crossover_scatter(std::span<const double> p1, std::span<const double> p2,
                                const std::vector<bool>& mask) {
  if (p1.size() != p2.size() || mask.size() != p1.size()) throw InputError("genome length mismatch");
  Genome child(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) child[i] = mask[i] ? p1[i] : p2[i];
  return child;
}

inline Genome crossover_scatter(std::span<const double> p1, std::span<const double> p2, Rng& rng) {
  std::vector<bool> mask(p1.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (rng() >> 63) != 0;
  return crossover_scatter(p1, p2, mask);
}

/// Mutation sigma for a generation: scale * (1 - shrink * generation / max_generations).
inline double mutation_sigma(std::size_t generation, const GaConfig& cfg) {
  const double f = 1.0 - cfg.mutation_shrink * static_cast<double>(generation) /
                             static_cast<double>(cfg.max_generations);
  return cfg.mutation_scale * std::max(0.0, f);
}

/// Adds N(0, sigma * range_i) to each gene and clamps to the bounds.
inline Genome mutate_gaussian(std::span<const double> genome, const Bounds& bounds, std::size_t generation,
                              const GaConfig& cfg, Rng& rng) {
  Genome out(genome.begin(), genome.end());
  const double sigma = mutation_sigma(generation, cfg);
  if (sigma <= 0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i] + normal(rng) * sigma * bounds.range(i), bounds.lower[i], bounds.upper[i]);
  }
  return out;
}

/// Weighted average of |best[g-i+1] - best[g-i]| over the last `window`
/// generations, weight 0.5^(i-1) with i = 1 the most recent change.
inline double weighted_best_change(std::span<const double> best, std::size_t window) {
  double num = 0.0, den = 0.0, w = 1.0;
  for (std::size_t i = 1; i <= window && i < best.size(); ++i) {
    const double a = best[best.size() - i];
    const double b = best[best.size() - i - 1];
    const double d = (a == b) ? 0.0 : std::abs(a - b);
    num += w * d;
    den += w;
    w *= 0.5;
  }
  return den > 0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------
// Driver

namespace detail {

template <Objective F>
void evaluate_all(const F& objective, const std::vector<Genome>& genomes, std::vector<double>& fitness,
                  std::size_t first, std::size_t jobs) {
  parallel_for(genomes.size() - first, jobs, [&](std::size_t j) {
    const auto& g = genomes[first + j];
    double f = 0.0;
    try {
      f = static_cast<double>(objective(std::span<const double>(g)));
    } catch (const std::exception& e) {
      throw GaObjectiveError(std::string("objective failed: ") + e.what(), g);
    }
    fitness[first + j] = std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
  });
}

}  // namespace detail

/// Called after every generation (the initial population is generation 0)
/// with the generation's best and mean finite fitness.
using GaProgress = std::function<void(std::size_t generation, double best, double mean)>;

template <Objective F>
GaResult evolve(const F& objective, const Bounds& bounds, const GaConfig& cfg, const GaProgress& progress = {}) {
  bounds.validate();
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n = cfg.pop_size;
  const auto n_elite =
      std::min(n, static_cast<std::size_t>(std::ceil(cfg.elite_fraction * static_cast<double>(n) - 1e-12)));
  const auto n_xover =
      static_cast<std::size_t>(std::llround(cfg.crossover_fraction * static_cast<double>(n - n_elite)));
  const std::size_t n_mut = n - n_elite - n_xover;

  auto pop = initialize_population(bounds, n, rng);
  std::vector<double> fitness(n);
  detail::evaluate_all(objective, pop, fitness, 0, cfg.jobs);

  GaResult res;
  auto record = [&] {
    const auto best = std::min_element(fitness.begin(), fitness.end());
    res.fitness_history.push_back(*best);
    double sum = 0.0;
    std::size_t cnt = 0;
    for (double f : fitness) {
      if (std::isfinite(f)) {
        sum += f;
        ++cnt;
      }
    }
    res.mean_history.push_back(cnt ? sum / static_cast<double>(cnt) : std::numeric_limits<double>::infinity());
    if (res.best_genome.empty() || *best < res.best_fitness) {
      res.best_fitness = *best;
      res.best_genome = pop[static_cast<std::size_t>(best - fitness.begin())];
    }
    if (progress) progress(res.generations_run, res.fitness_history.back(), res.mean_history.back());
  };
  record();

  for (std::size_t gen = 1;; ++gen) {
    if (res.generations_run >= cfg.stall_generations && cfg.stall_generations > 0) {
      const double change = weighted_best_change(res.fitness_history, cfg.stall_generations);
      if (change < cfg.function_tolerance * std::max(1.0, std::abs(res.best_fitness))) {
        res.termination_reason = Termination::tolerance;
        break;
      }
    }
    if (res.generations_run >= cfg.max_generations) {
      res.termination_reason = Termination::max_generations;
      break;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });
    const auto weights = rank_scale(fitness);
    auto parents = select_parents_sus(weights, 2 * n_xover + n_mut, rng);
    std::shuffle(parents.begin(), parents.end(), rng);

    std::vector<Genome> next;
    std::vector<double> next_fitness(n);
    next.reserve(n);
    for (std::size_t e = 0; e < n_elite; ++e) {
      next.push_back(pop[order[e]]);
      next_fitness[e] = fitness[order[e]];
    }
    for (std::size_t c = 0; c < n_xover; ++c) {
      next.push_back(crossover_scatter(pop[parents[2 * c]], pop[parents[2 * c + 1]], rng));
    }
    for (std::size_t m = 0; m < n_mut; ++m) {
      next.push_back(mutate_gaussian(pop[parents[2 * n_xover + m]], bounds, gen, cfg, rng));
    }
    detail::evaluate_all(objective, next, next_fitness, n_elite, cfg.jobs);
    pop = std::move(next);
    fitness = std::move(next_fitness);
    ++res.generations_run;
    record();
  }
  return res;
}

struct MultistartResult {
  GaResult best;
  std::vector<double> run_best_fitness;  // per restart, in seed order
};

/// Runs evolve with seeds seed, seed + 1, ... and keeps the lowest best
/// fitness (earliest run on ties).
template <Objective F>
MultistartResult multistart(const F& objective, const Bounds& bounds, const GaConfig& cfg,
                            const GaProgress& progress = {}) {
  cfg.validate();
  MultistartResult out;
  for (std::size_t r = 0; r < cfg.n_restarts; ++r) {
    GaConfig run = cfg;
    run.seed = cfg.seed + r;
    auto res = evolve(objective, bounds, run, progress);
    out.run_best_fitness.push_back(res.best_fitness);
    if (r == 0 || res.best_fitness < out.best.best_fitness) out.best = std::move(res);
  }
  return out;
}

}  // namespace cflab
