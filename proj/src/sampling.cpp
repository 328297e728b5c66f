#include "auxetic/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "auxetic/csv.hpp"
#include "auxetic/random.hpp"
#include "auxetic/serialization.hpp"

namespace auxetic::sampling {

using geometry::DesignParams;
using geometry::ValidDesign;
using nlohmann::json;

const Range& DesignRanges::operator[](std::size_t i) const {
  switch (i) {
    case 0:
      return lambda;
    case 1:
      return t;
    case 2:
      return A;
    default:
      throw Error(ErrorKind::ShapeMismatch, "design variable index out of range");
  }
}

std::array<double, 3> to_array(const DesignParams& p) { return {p.lambda, p.t, p.A}; }

DesignParams from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

std::array<double, 3> normalize(const DesignParams& p, const DesignRanges& r) {
  const auto v = to_array(p);
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = (v[i] - r[i].min) / r[i].width();
  return out;
}

std::vector<ValidDesign> generate_pool(const PoolSpec& spec, PoolStats* stats) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(spec.ranges[i].max > spec.ranges[i].min)) {
      throw Error(ErrorKind::InvalidConfig, "pool range max must exceed min");
    }
  }
  Rng rng(spec.seed);
  std::vector<ValidDesign> pool;
  pool.reserve(spec.size);
  PoolStats local;
  constexpr std::size_t kGuardDraws = 1'000'000;
  while (pool.size() < spec.size) {
    DesignParams p;
    p.lambda = rng.uniform(spec.ranges.lambda.min, spec.ranges.lambda.max);
    p.t = rng.uniform(spec.ranges.t.min, spec.ranges.t.max);
    p.A = rng.uniform(spec.ranges.A.min, spec.ranges.A.max);
    ++local.draws;
    if (geometry::is_valid(p)) {
      pool.push_back(geometry::validate_design(p));
    } else {
      ++local.rejected;
    }
    if (local.draws >= kGuardDraws && static_cast<double>(local.rejected) > 0.999 * static_cast<double>(local.draws)) {
      throw Error(ErrorKind::ExhaustedSampler, "rejection rate above 0.999 after 1e6 draws");
    }
  }
  if (stats) *stats = local;
  return pool;
}

GreedySelector::GreedySelector(std::vector<std::vector<double>> points)
    : points_(std::move(points)),
      min_dist_(points_.size(), std::numeric_limits<double>::infinity()),
      chosen_(points_.size(), false) {}

void GreedySelector::select(std::size_t index) {
  if (index >= points_.size()) throw Error(ErrorKind::ShapeMismatch, "greedy pick out of range");
  if (chosen_[index]) return;
  chosen_[index] = true;
  picks_.push_back(index);
  const auto& a = points_[index];
  for (std::size_t i = 0; i < points_.size(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = points_[i][k] - a[k];
      sq += d * d;
    }
    min_dist_[i] = std::min(min_dist_[i], std::sqrt(sq));
  }
}

std::size_t GreedySelector::next() {
  std::size_t best = points_.size();
  double best_dist = -1.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!chosen_[i] && min_dist_[i] > best_dist) {
      best = i;
      best_dist = min_dist_[i];
    }
  }
  if (best == points_.size()) throw Error(ErrorKind::InsufficientLabels, "greedy selector has no points left");
  select(best);
  return best;
}

std::size_t nearest_to_centroid(const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw Error(ErrorKind::ShapeMismatch, "empty pool");
  const std::size_t dim = points.front().size();
  std::vector<double> centroid(dim, 0.0);
  for (const auto& p : points) {
    for (std::size_t k = 0; k < dim; ++k) centroid[k] += p[k];
  }
  for (double& c : centroid) c /= static_cast<double>(points.size());
  std::size_t best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) sq += (points[i][k] - centroid[k]) * (points[i][k] - centroid[k]);
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  return best;
}

std::vector<std::vector<double>> normalized_points(const std::vector<ValidDesign>& pool, const DesignRanges& ranges) {
  std::vector<std::vector<double>> pts;
  pts.reserve(pool.size());
  for (const auto& v : pool) {
    const auto n = normalize(v.params(), ranges);
    pts.emplace_back(n.begin(), n.end());
  }
  return pts;
}

std::vector<std::size_t> greedy_order(const std::vector<std::vector<double>>& points, std::size_t first,
                                      std::size_t budget) {
  if (budget > points.size()) throw Error(ErrorKind::InvalidConfig, "greedy budget exceeds pool size");
  GreedySelector sel(points);
  if (budget == 0) return {};
  sel.select(first);
  while (sel.picks().size() < budget) sel.next();
  return sel.picks();
}

std::vector<std::size_t> greedy_select(const std::vector<ValidDesign>& pool, std::size_t budget,
                                       const DesignRanges& ranges) {
  const auto pts = normalized_points(pool, ranges);
  return greedy_order(pts, nearest_to_centroid(pts), budget);
}

Split random_split(std::size_t n, const SplitSizes& sizes, std::uint64_t seed) {
  if (sizes.total() != n) {
    throw Error(ErrorKind::InvalidConfig, "split sizes must add up to the number of records");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sizes.train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train),
               order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val), order.end());
  return s;
}

namespace {

struct LabelOutcome {
  std::optional<mechanics::PropertyCurves> curves;
  std::string failure;
};

std::vector<LabelOutcome> label_batch(const std::vector<ValidDesign>& pool, const std::vector<std::size_t>& jobs,
                                      const LabelOracle& oracle, std::size_t workers) {
  std::vector<LabelOutcome> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> cursor{0};
  auto work = [&] {
    for (std::size_t k = cursor++; k < jobs.size(); k = cursor++) {
      try {
        out[k].curves = oracle(pool[jobs[k]]);
      } catch (const NonConvergence& e) {
        out[k].failure = e.what();
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, jobs.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

Dataset label_and_split(const std::vector<ValidDesign>& pool, const std::vector<std::size_t>& picks,
                        const LabelOracle& oracle, const LabelOptions& options) {
  for (std::size_t p : picks) {
    if (p >= pool.size()) throw Error(ErrorKind::ShapeMismatch, "pick index outside the pool");
  }
  GreedySelector selector(normalized_points(pool, options.ranges));
  for (std::size_t p : picks) selector.select(p);

  Dataset d;
  d.ranges = options.ranges;
  d.pool_seed = options.pool_seed;
  d.split_seed = options.split_seed;

  std::vector<std::size_t> jobs = picks;
  while (!jobs.empty()) {
    const auto outcomes = label_batch(pool, jobs, oracle, options.workers);
    std::vector<std::size_t> failed;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (outcomes[k].curves) {
        d.records.push_back({pool[jobs[k]], *outcomes[k].curves, jobs[k]});
      } else {
        failed.push_back(k);
      }
    }
    std::vector<std::size_t> replacements;
    for (std::size_t k : failed) {
      if (selector.exhausted()) {
        throw Error(ErrorKind::InsufficientLabels, "non-converged designs exhausted the pool");
      }
      const std::size_t r = selector.next();
      d.substitutions.push_back({jobs[k], r, outcomes[k].failure});
      if (options.log) {
        *options.log << "label: design " << jobs[k] << " did not converge (" << outcomes[k].failure
                     << "); replaced by design " << r << '\n';
      }
      replacements.push_back(r);
    }
    jobs = std::move(replacements);
  }
  d.split = random_split(d.records.size(), options.sizes, options.split_seed);
  return d;
}

Dataset label_and_split(const std::vector<ValidDesign>& pool, const std::vector<std::size_t>& picks,
                        const mechanics::Material& material, const mechanics::MechanicsConfig& config,
                        const LabelOptions& options) {
  const LabelOracle oracle = [&](const ValidDesign& v) {
    return mechanics::run_tension_test(v, material, config).curves;
  };
  return label_and_split(pool, picks, oracle, options);
}

std::string dataset_to_json(const Dataset& d) {
  json ranges = json::object();
  const char* names[] = {"lambda", "t", "A"};
  for (std::size_t i = 0; i < 3; ++i) ranges[names[i]] = {d.ranges[i].min, d.ranges[i].max};
  json records = json::array();
  for (const auto& r : d.records) {
    records.push_back({{"design", serialization::design_to_json(r.design.params())},
                       {"pool_index", r.pool_index},
                       {"strain_grid", r.curves.strain_grid},
                       {"nu", r.curves.nu},
                       {"sigma_kPa", r.curves.sigma_kpa}});
  }
  json subs = json::array();
  for (const auto& s : d.substitutions) {
    subs.push_back({{"failed", s.failed}, {"replacement", s.replacement}, {"reason", s.reason}});
  }
  json j = {{"units", {{"design", "mm"}, {"sigma", "kPa"}, {"strain", "dimensionless"}}},
            {"ranges", ranges},
            {"seeds", {{"pool", d.pool_seed}, {"split", d.split_seed}}},
            {"records", records},
            {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}},
            {"substitutions", subs}};
  return j.dump(1) + "\n";
}

Dataset dataset_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    Dataset d;
    d.ranges.lambda = {j.at("ranges").at("lambda").at(0), j.at("ranges").at("lambda").at(1)};
    d.ranges.t = {j.at("ranges").at("t").at(0), j.at("ranges").at("t").at(1)};
    d.ranges.A = {j.at("ranges").at("A").at(0), j.at("ranges").at("A").at(1)};
    d.pool_seed = j.at("seeds").at("pool");
    d.split_seed = j.at("seeds").at("split");
    for (const auto& r : j.at("records")) {
      mechanics::PropertyCurves c;
      c.strain_grid = r.at("strain_grid").get<std::vector<double>>();
      c.nu = r.at("nu").get<std::vector<double>>();
      c.sigma_kpa = r.at("sigma_kPa").get<std::vector<double>>();
      if (c.nu.size() != c.strain_grid.size() || c.sigma_kpa.size() != c.strain_grid.size()) {
        throw Error(ErrorKind::ShapeMismatch, "dataset record curves have inconsistent lengths");
      }
      d.records.push_back({geometry::validate_design(serialization::design_from_json(r.at("design"))), std::move(c),
                           r.at("pool_index").get<std::size_t>()});
    }
    d.split.train = j.at("split").at("train").get<std::vector<std::size_t>>();
    d.split.val = j.at("split").at("val").get<std::vector<std::size_t>>();
    d.split.test = j.at("split").at("test").get<std::vector<std::size_t>>();
    if (j.contains("substitutions")) {
      for (const auto& s : j.at("substitutions")) {
        d.substitutions.push_back({s.at("failed"), s.at("replacement"), s.at("reason")});
      }
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed dataset JSON: ") + e.what());
  }
}

void write_designs_csv(const Dataset& d, std::ostream& os) {
  std::vector<std::string> role(d.records.size(), "");
  for (std::size_t i : d.split.train) role[i] = "train";
  for (std::size_t i : d.split.val) role[i] = "val";
  for (std::size_t i : d.split.test) role[i] = "test";
  os << "record,pool_index,lambda_mm,t_mm,A_mm,gap_mm,split\n";
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    os << i << ',' << r.pool_index << ',' << csv::format(r.design.lambda()) << ',' << csv::format(r.design.t()) << ','
       << csv::format(r.design.A()) << ',' << csv::format(r.design.gap()) << ',' << role[i] << '\n';
  }
}

void write_curves_csv(const Dataset& d, std::ostream& os) {
  os << "record,strain,nu,sigma_kPa\n";
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& c = d.records[i].curves;
    for (std::size_t k = 0; k < c.strain_grid.size(); ++k) {
      os << i << ',' << csv::format(c.strain_grid[k]) << ',' << csv::format(c.nu[k]) << ','
         << csv::format(c.sigma_kpa[k]) << '\n';
    }
  }
}

}  // namespace auxetic::sampling
