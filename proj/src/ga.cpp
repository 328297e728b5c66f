#include "auxetic/ga_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "auxetic/csv.hpp"
#include "auxetic/random.hpp"

namespace auxetic::ga {

void GAConfig::validate() const {
  if (population < 2 || population % 2 != 0) throw Error(ErrorKind::InvalidConfig, "population must be even and >= 2");
  if (bits_per_var < 8 || bits_per_var > 52) throw Error(ErrorKind::InvalidConfig, "bits_per_var must be in [8, 52]");
  if (tournament_size == 0) throw Error(ErrorKind::InvalidConfig, "tournament size must be positive");
  if (p_crossover < 0.0 || p_crossover > 1.0 || p_mutation < 0.0 || p_mutation > 1.0) {
    throw Error(ErrorKind::InvalidConfig, "probabilities must lie in [0, 1]");
  }
  if (elitism > population) throw Error(ErrorKind::InvalidConfig, "elitism exceeds population");
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(ranges[k].width() > 0.0)) throw Error(ErrorKind::InvalidConfig, "design ranges must have positive width");
  }
}

geometry::DesignParams decode(const Chromosome& c, const GAConfig& cfg) {
  if (c.size() != cfg.length()) throw Error(ErrorKind::LengthMismatch, "chromosome length differs from 3 * bits_per_var");
  const double top = std::ldexp(1.0, static_cast<int>(cfg.bits_per_var)) - 1.0;
  std::array<double, 3> v{};
  for (std::size_t k = 0; k < 3; ++k) {
    std::uint64_t code = 0;
    for (std::size_t b = 0; b < cfg.bits_per_var; ++b) code = (code << 1) | (c[k * cfg.bits_per_var + b] & 1U);
    v[k] = cfg.ranges[k].min + cfg.ranges[k].width() * static_cast<double>(code) / top;
  }
  return sampling::from_array(v);
}

Chromosome encode(const geometry::DesignParams& p, const GAConfig& cfg) {
  const double top = std::ldexp(1.0, static_cast<int>(cfg.bits_per_var)) - 1.0;
  const auto v = sampling::to_array(p);
  Chromosome c(cfg.length());
  for (std::size_t k = 0; k < 3; ++k) {
    const double u = std::clamp((v[k] - cfg.ranges[k].min) / cfg.ranges[k].width(), 0.0, 1.0);
    const auto code = static_cast<std::uint64_t>(std::llround(u * top));
    for (std::size_t b = 0; b < cfg.bits_per_var; ++b) {
      c[k * cfg.bits_per_var + b] = static_cast<std::uint8_t>((code >> (cfg.bits_per_var - 1 - b)) & 1U);
    }
  }
  return c;
}

Eigen::VectorXd fitness(const Eigen::MatrixXd& designs, const mechanics::PropertyCurves& target,
                        const inverse::Surrogates& s, double alpha, double beta) {
  inverse::check_grid(s.strain_grid(), target.strain_grid);
  const auto q = static_cast<Eigen::Index>(target.nu.size());
  const Eigen::VectorXd t_nu = s.nu->output.transform(Eigen::Map<const Eigen::VectorXd>(target.nu.data(), q));
  const Eigen::VectorXd t_sigma =
      s.sigma->output.transform(Eigen::Map<const Eigen::VectorXd>(target.sigma_kpa.data(), q));
  const Eigen::MatrixXd p_nu = s.nu->net.forward(s.nu->input.transform(designs));
  const Eigen::MatrixXd p_sigma = s.sigma->net.forward(s.sigma->input.transform(designs));
  Eigen::VectorXd f(designs.cols());
  for (Eigen::Index j = 0; j < designs.cols(); ++j) {
    f[j] = alpha * (p_nu.col(j) - t_nu).squaredNorm() / static_cast<double>(q) +
           beta * (p_sigma.col(j) - t_sigma).squaredNorm() / static_cast<double>(q);
    const geometry::DesignParams p{designs(0, j), designs(1, j), designs(2, j)};
    if (!geometry::is_valid(p)) f[j] += kInvalidPenalty;
  }
  return f;
}

namespace {

void score(std::vector<Individual>& pop, const mechanics::PropertyCurves& target, const inverse::Surrogates& s,
           const GAConfig& cfg) {
  Eigen::MatrixXd x(3, static_cast<Eigen::Index>(pop.size()));
  for (std::size_t i = 0; i < pop.size(); ++i) {
    pop[i].params = decode(pop[i].genes, cfg);
    x.col(static_cast<Eigen::Index>(i)) << pop[i].params.lambda, pop[i].params.t, pop[i].params.A;
  }
  const Eigen::VectorXd f = fitness(x, target, s, cfg.alpha, cfg.beta);
  for (std::size_t i = 0; i < pop.size(); ++i) pop[i].fitness = f[static_cast<Eigen::Index>(i)];
}

// Stable so equal fitness keeps the earlier individual first.
void sort_by_fitness(std::vector<Individual>& pop) {
  std::stable_sort(pop.begin(), pop.end(), [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; });
}

HistoryRow summarize(std::size_t gen, const std::vector<Individual>& sorted) {
  double sum = 0.0;
  for (const auto& ind : sorted) sum += ind.fitness;
  return {gen, sorted.front().fitness, sum / static_cast<double>(sorted.size())};
}

}  // namespace

GAResult evolve(const mechanics::PropertyCurves& target, const inverse::Surrogates& s, const GAConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t L = cfg.length();
  const double flip = 1.0 / static_cast<double>(L);

  std::vector<Individual> pop(cfg.population);
  for (auto& ind : pop) {
    ind.genes.resize(L);
    for (auto& bit : ind.genes) bit = static_cast<std::uint8_t>(rng.bits() & 1U);
  }
  score(pop, target, s, cfg);
  sort_by_fitness(pop);

  GAResult r;
  r.history.push_back(summarize(0, pop));
  auto tournament = [&]() -> const Individual& {
    std::size_t best = rng.index(pop.size());
    for (std::size_t k = 1; k < cfg.tournament_size; ++k) {
      const std::size_t c = rng.index(pop.size());
      if (pop[c].fitness < pop[best].fitness) best = c;
    }
    return pop[best];
  };

  for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
    std::vector<Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(cfg.elitism));
    while (next.size() < cfg.population) {
      Individual a = tournament();
      Individual b = tournament();
      if (rng.bernoulli(cfg.p_crossover)) {
        const std::size_t cut = 1 + rng.index(L - 1);
        std::swap_ranges(a.genes.begin() + static_cast<std::ptrdiff_t>(cut), a.genes.end(),
                         b.genes.begin() + static_cast<std::ptrdiff_t>(cut));
      }
      for (Individual* child : {&a, &b}) {
        if (rng.bernoulli(cfg.p_mutation)) {
          for (auto& bit : child->genes) {
            if (rng.bernoulli(flip)) bit ^= 1U;
          }
        }
        if (next.size() < cfg.population) next.push_back(std::move(*child));
      }
    }
    // Elites keep their scores; only offspring are re-evaluated.
    std::vector<Individual> offspring(next.begin() + static_cast<std::ptrdiff_t>(cfg.elitism), next.end());
    score(offspring, target, s, cfg);
    std::copy(offspring.begin(), offspring.end(), next.begin() + static_cast<std::ptrdiff_t>(cfg.elitism));
    pop = std::move(next);
    sort_by_fitness(pop);
    r.history.push_back(summarize(gen, pop));
  }
  r.best = pop.front();
  r.population = std::move(pop);
  return r;
}

std::vector<Individual> top_distinct(const GAResult& r, std::size_t k) {
  std::vector<Individual> out;
  std::set<Chromosome> seen;
  for (const auto& ind : r.population) {
    if (out.size() == k) break;
    if (seen.insert(ind.genes).second) out.push_back(ind);
  }
  return out;
}

void write_history_csv(const std::vector<HistoryRow>& h, std::ostream& os) {
  os << "generation,best_fitness,mean_fitness\n";
  for (const auto& row : h) {
    os << row.generation << ',' << csv::format(row.best_fitness) << ',' << csv::format(row.mean_fitness) << '\n';
  }
}

}  // namespace auxetic::ga
