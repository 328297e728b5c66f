#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "auxetic/errors.hpp"
#include "auxetic/ga_baseline.hpp"
#include "fakes.hpp"

using namespace auxetic;
using namespace auxetic::ga;

namespace {

GAConfig small_config() {
  GAConfig c;
  c.population = 20;
  c.generations = 15;
  return c;
}

mechanics::PropertyCurves target_from(const inverse::Surrogates& s, const geometry::DesignParams& p) {
  mechanics::PropertyCurves c;
  c.strain_grid = mechanics::default_strain_grid();
  const Eigen::Vector3d x(p.lambda, p.t, p.A);
  const Eigen::VectorXd nu = neural::predict_physical(*s.nu, x);
  const Eigen::VectorXd sg = neural::predict_physical(*s.sigma, x);
  c.nu.assign(nu.data(), nu.data() + nu.size());
  c.sigma_kpa.assign(sg.data(), sg.data() + sg.size());
  return c;
}

}  // namespace

TEST_CASE("decode maps all-zero and all-one chromosomes to the range ends") {
  const GAConfig cfg;
  const auto lo = decode(Chromosome(cfg.length(), 0), cfg);
  const auto hi = decode(Chromosome(cfg.length(), 1), cfg);
  CHECK(lo.lambda == cfg.ranges.lambda.min);
  CHECK(lo.t == cfg.ranges.t.min);
  CHECK(lo.A == cfg.ranges.A.min);
  CHECK(hi.lambda == doctest::Approx(cfg.ranges.lambda.max).epsilon(1e-15));
  CHECK(hi.t == doctest::Approx(cfg.ranges.t.max).epsilon(1e-15));
  CHECK(hi.A == doctest::Approx(cfg.ranges.A.max).epsilon(1e-15));
}

TEST_CASE("decode reads bits most significant first") {
  GAConfig cfg;
  cfg.bits_per_var = 8;
  Chromosome c(cfg.length(), 0);
  c[0] = 1;  // top bit of lambda: 128 / 255 of the range
  const auto p = decode(c, cfg);
  const double w = cfg.ranges.lambda.max - cfg.ranges.lambda.min;
  CHECK(p.lambda == doctest::Approx(cfg.ranges.lambda.min + w * 128.0 / 255.0));
  CHECK(p.t == cfg.ranges.t.min);
}

TEST_CASE("encode round trips within one quantization step") {
  const GAConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const geometry::DesignParams p{rng.uniform(2.0, 21.0), rng.uniform(0.2, 2.1), rng.uniform(0.2, 2.1)};
    const auto q = decode(encode(p, cfg), cfg);
    const double step = 1.0 / 65535.0;
    CHECK(std::abs(q.lambda - p.lambda) <= 0.5 * step * 19.0 + 1e-12);
    CHECK(std::abs(q.t - p.t) <= 0.5 * step * 1.9 + 1e-12);
    CHECK(std::abs(q.A - p.A) <= 0.5 * step * 1.9 + 1e-12);
  }
  const auto clamped = decode(encode({100.0, -1.0, 1.0}, cfg), cfg);
  CHECK(clamped.lambda == doctest::Approx(21.0));
  CHECK(clamped.t == 0.2);
}

TEST_CASE("wrong chromosome length is rejected") {
  const GAConfig cfg;
  try {
    decode(Chromosome(47, 0), cfg);
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::LengthMismatch);
  }
}

TEST_CASE("config validation") {
  GAConfig c;
  CHECK_NOTHROW(c.validate());
  c.population = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.p_crossover = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.elitism = c.population + 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("fitness is zero at the surrogate's own prediction and penalizes invalid designs") {
  fakes::Pair f;
  const geometry::DesignParams p{12.0, 1.0, 1.0};
  const auto target = target_from(f.s, p);
  Eigen::MatrixXd d(3, 2);
  d << 12.0, 4.0, 1.0, 1.0, 1.0, 1.0;  // second column has a negative gap
  const auto fit = fitness(d, target, f.s);
  CHECK(fit[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fit[1] >= kInvalidPenalty);
}

TEST_CASE("elitism keeps the best fitness monotone") {
  fakes::Pair f;
  const auto target = target_from(f.s, {10.0, 1.2, 0.8});
  const auto r = evolve(target, f.s, small_config());
  REQUIRE(r.history.size() == 16);
  CHECK(r.history.front().generation == 0);
  for (std::size_t g = 1; g < r.history.size(); ++g) CHECK(r.history[g].best_fitness <= r.history[g - 1].best_fitness);
  CHECK(r.population.size() == 20);
  CHECK(r.best.fitness == r.history.back().best_fitness);
  CHECK(std::is_sorted(r.population.begin(), r.population.end(),
                       [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; }));
}

TEST_CASE("without variation operators the population is only resampled") {
  fakes::Pair f;
  const auto target = target_from(f.s, {10.0, 1.2, 0.8});
  auto cfg = small_config();
  cfg.p_crossover = 0.0;
  cfg.p_mutation = 0.0;
  cfg.generations = 0;
  const auto start = evolve(target, f.s, cfg);
  std::set<Chromosome> initial;
  for (const auto& i : start.population) initial.insert(i.genes);
  cfg.generations = 10;
  const auto r = evolve(target, f.s, cfg);
  for (const auto& i : r.population) CHECK(initial.count(i.genes) == 1);
}

TEST_CASE("evolution is deterministic") {
  fakes::Pair f;
  const auto target = target_from(f.s, {15.0, 1.0, 1.5});
  const auto a = evolve(target, f.s, small_config());
  const auto b = evolve(target, f.s, small_config());
  CHECK(a.best.genes == b.best.genes);
  std::ostringstream ha, hb;
  write_history_csv(a.history, ha);
  write_history_csv(b.history, hb);
  CHECK(ha.str() == hb.str());
  CHECK(ha.str().rfind("generation,best_fitness,mean_fitness\n", 0) == 0);
}

TEST_CASE("evolution improves on the initial population") {
  fakes::Pair f;
  const auto target = target_from(f.s, {15.0, 1.0, 1.5});
  auto cfg = small_config();
  cfg.population = 40;
  cfg.generations = 40;
  const auto r = evolve(target, f.s, cfg);
  CHECK(r.history.back().best_fitness < r.history.front().best_fitness);
  CHECK(r.history.back().best_fitness < 0.05);
}

TEST_CASE("top distinct drops duplicate chromosomes") {
  GAResult r;
  const GAConfig cfg;
  Chromosome a(cfg.length(), 0), b(cfg.length(), 1);
  r.population = {{a, decode(a, cfg), 0.1}, {a, decode(a, cfg), 0.1}, {b, decode(b, cfg), 0.3}};
  const auto top = top_distinct(r, 3);
  REQUIRE(top.size() == 2);
  CHECK(top[0].genes == a);
  CHECK(top[1].genes == b);
}
