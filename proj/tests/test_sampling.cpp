#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "auxetic/random.hpp"
#include "auxetic/sampling.hpp"

using namespace auxetic;
using namespace auxetic::sampling;

namespace {

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// Deterministic fake oracle: curves depend smoothly on the design.
mechanics::PropertyCurves fake_curves(const geometry::ValidDesign& v) {
  mechanics::PropertyCurves c;
  c.strain_grid = mechanics::default_strain_grid();
  for (double e : c.strain_grid) {
    c.nu.push_back(-v.A() / v.lambda() * (1.0 - e));
    c.sigma_kpa.push_back(1000.0 * e * std::pow(v.t() / v.lambda(), 3));
  }
  return c;
}

}  // namespace

TEST_CASE("pool designs lie in range and are valid") {
  PoolStats stats;
  const auto pool = generate_pool({DesignRanges{}, 10, 1}, &stats);
  CHECK(pool.size() == 10);
  const DesignRanges r;
  for (const auto& d : pool) {
    CHECK(d.lambda() >= r.lambda.min);
    CHECK(d.lambda() <= r.lambda.max);
    CHECK(d.t() >= r.t.min);
    CHECK(d.t() <= r.t.max);
    CHECK(d.A() >= r.A.min);
    CHECK(d.A() <= r.A.max);
    CHECK(d.gap() > 0.0);
  }
  CHECK(stats.draws >= 10);
}

TEST_CASE("pool is deterministic and rejects invalid draws") {
  PoolStats s1;
  const auto a = generate_pool({DesignRanges{}, 500, 7}, &s1);
  const auto b = generate_pool({DesignRanges{}, 500, 7});
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].lambda() == b[i].lambda());
    CHECK(a[i].t() == b[i].t());
    CHECK(a[i].A() == b[i].A());
  }
  CHECK(s1.rejected > 0);
  CHECK(s1.draws == s1.rejected + 500);
}

TEST_CASE("sampler gives up on an empty feasible region") {
  DesignRanges r;
  r.lambda = {2.0, 2.1};
  r.t = {1.0, 2.0};
  r.A = {1.0, 2.0};
  CHECK_THROWS_AS(generate_pool({r, 5, 1}), Error);
}

TEST_CASE("greedy picks on a one-dimensional pool") {
  GreedySelector g({{0.0}, {0.1}, {0.2}, {1.0}});
  g.select(0);
  CHECK(g.next() == 3);
  CHECK(g.next() == 2);
  CHECK(g.next() == 1);
  CHECK(g.exhausted());
  CHECK_THROWS(g.next());
}

TEST_CASE("greedy ties go to the lowest index") {
  GreedySelector g({{0.5}, {0.0}, {1.0}});
  g.select(0);
  CHECK(g.next() == 1);
}

TEST_CASE("greedy budget equal to pool size is a permutation") {
  const auto pool = generate_pool({DesignRanges{}, 40, 3});
  const auto picks = greedy_select(pool, 40);
  std::set<std::size_t> s(picks.begin(), picks.end());
  CHECK(s.size() == 40);
  CHECK(*s.rbegin() == 39);
}

TEST_CASE("greedy picks equal the brute-force argmax") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto pool = generate_pool({DesignRanges{}, 300, seed});
    const auto pts = normalized_points(pool, DesignRanges{});
    const auto picks = greedy_select(pool, 60);
    CHECK(picks.front() == nearest_to_centroid(pts));
    for (std::size_t k = 1; k < picks.size(); ++k) {
      double best = -1.0;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (std::find(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(k), i) != picks.begin() + static_cast<std::ptrdiff_t>(k)) continue;
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) m = std::min(m, dist(pts[i], pts[picks[j]]));
        if (m > best) {
          best = m;
          arg = i;
        }
      }
      CHECK(picks[k] == arg);
    }
  }
}

TEST_CASE("centroid seed") {
  CHECK(nearest_to_centroid({{0.0, 0.0}, {1.0, 1.0}, {0.4, 0.6}, {2.0, 2.0}}) == 1);
}

TEST_CASE("random split is disjoint and complete") {
  const auto s = random_split(150, {}, 2);
  CHECK(s.train.size() == 132);
  CHECK(s.val.size() == 9);
  CHECK(s.test.size() == 9);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 150);
  CHECK(*all.rbegin() == 149);
  const auto again = random_split(150, {}, 2);
  CHECK(again.test == s.test);
}

TEST_CASE("labelling replaces non-converging designs") {
  const auto pool = generate_pool({DesignRanges{}, 50, 1});
  const auto picks = greedy_select(pool, 3);
  const std::size_t bad = picks[1];
  LabelOracle oracle = [&](const geometry::ValidDesign& v) {
    if (v.lambda() == pool[bad].lambda() && v.t() == pool[bad].t()) throw NonConvergence(4, 0.3, "stub failure");
    return fake_curves(v);
  };
  std::ostringstream log;
  LabelOptions opt;
  opt.sizes = {1, 1, 1};
  opt.log = &log;
  const auto d = label_and_split(pool, picks, oracle, opt);
  REQUIRE(d.records.size() == 3);
  REQUIRE(d.substitutions.size() == 1);
  CHECK(d.substitutions[0].failed == bad);
  CHECK(d.substitutions[0].replacement != bad);
  CHECK(std::none_of(d.records.begin(), d.records.end(), [&](const Record& r) { return r.pool_index == bad; }));
  CHECK(!log.str().empty());
}

TEST_CASE("labelling fails when replacements run out") {
  const auto pool = generate_pool({DesignRanges{}, 4, 1});
  const auto picks = greedy_select(pool, 3);
  LabelOracle oracle = [](const geometry::ValidDesign&) -> mechanics::PropertyCurves {
    throw NonConvergence(0, 1.0, "always");
  };
  LabelOptions opt;
  opt.sizes = {1, 1, 1};
  try {
    label_and_split(pool, picks, oracle, opt);
    FAIL("expected InsufficientLabels");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientLabels);
  }
}

TEST_CASE("parallel labelling matches sequential labelling") {
  const auto pool = generate_pool({DesignRanges{}, 200, 1});
  const auto picks = greedy_select(pool, 20);
  LabelOptions opt;
  opt.sizes = {14, 3, 3};
  const auto a = label_and_split(pool, picks, fake_curves, opt);
  opt.workers = 4;
  const auto b = label_and_split(pool, picks, fake_curves, opt);
  CHECK(dataset_to_json(a) == dataset_to_json(b));
}

TEST_CASE("dataset json round trip is byte-stable") {
  const auto pool = generate_pool({DesignRanges{}, 100, 1});
  const auto picks = greedy_select(pool, 10);
  LabelOptions opt;
  opt.sizes = {8, 1, 1};
  const auto d = label_and_split(pool, picks, fake_curves, opt);
  const std::string text = dataset_to_json(d);
  const auto back = dataset_from_json(text);
  CHECK(dataset_to_json(back) == text);
  for (const auto& r : back.records) {
    CHECK(r.curves.nu.size() == 30);
    CHECK(r.curves.sigma_kpa.size() == 30);
  }
  std::ostringstream designs, curves;
  write_designs_csv(d, designs);
  write_curves_csv(d, curves);
  CHECK(designs.str().rfind("record,pool_index,lambda_mm,t_mm,A_mm,gap_mm,split\n", 0) == 0);
  CHECK(curves.str().rfind("record,strain,nu,sigma_kPa\n", 0) == 0);
}

TEST_CASE("rng helpers") {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const auto k = c.index(7);
    CHECK(k < 7);
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
