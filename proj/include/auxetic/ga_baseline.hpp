#pragma once

// Binary-encoded genetic algorithm over the design box, scored by the
// forward surrogates.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "auxetic/inverse_design.hpp"
#include "auxetic/mechanics.hpp"
#include "auxetic/sampling.hpp"

namespace auxetic::ga {

using Chromosome = std::vector<std::uint8_t>;  // one bit per entry, MSB first per variable

struct GAConfig {
  std::size_t population = 100;
  std::size_t bits_per_var = 16;
  std::size_t tournament_size = 2;
  double p_crossover = 0.8;
  double p_mutation = 0.8;  // chance an individual is mutated; each bit then flips with 1/L
  std::size_t generations = 100;
  std::size_t elitism = 1;
  std::uint64_t seed = 5;
  double alpha = 1.0;  // weight of the nu term in the fitness
  double beta = 1.0;   // weight of the sigma term
  sampling::DesignRanges ranges;

  void validate() const;
  std::size_t length() const noexcept { return 3 * bits_per_var; }
};

/// Added to the fitness of decodes with a non-positive peak gap.
inline constexpr double kInvalidPenalty = 1e6;

/// LengthMismatch unless the chromosome has 3 * bits_per_var bits.
geometry::DesignParams decode(const Chromosome& c, const GAConfig& cfg);
/// Nearest code point, clamped to the range box.
Chromosome encode(const geometry::DesignParams& p, const GAConfig& cfg);

/// Standardized-space fitness of many designs (3 x n) against one target;
/// lower is better.
Eigen::VectorXd fitness(const Eigen::MatrixXd& designs, const mechanics::PropertyCurves& target,
                        const inverse::Surrogates& s, double alpha = 1.0, double beta = 1.0);

struct HistoryRow {
  std::size_t generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
};

struct Individual {
  Chromosome genes;
  geometry::DesignParams params;
  double fitness = 0.0;
};

struct GAResult {
  Individual best;
  std::vector<HistoryRow> history;     // generation 0 is the initial population
  std::vector<Individual> population;  // final generation, ascending fitness
};

GAResult evolve(const mechanics::PropertyCurves& target, const inverse::Surrogates& s, const GAConfig& cfg);

/// First k individuals of the sorted final population with distinct genes.
std::vector<Individual> top_distinct(const GAResult& r, std::size_t k);

void write_history_csv(const std::vector<HistoryRow>& h, std::ostream& os);

}  // namespace auxetic::ga
