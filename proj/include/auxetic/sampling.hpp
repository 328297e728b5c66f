#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "auxetic/geometry.hpp"
#include "auxetic/mechanics.hpp"

namespace auxetic::sampling {

struct Range {
  double min = 0.0;
  double max = 0.0;

  double width() const noexcept { return max - min; }
  double mid() const noexcept { return 0.5 * (min + max); }
};

/// Design-variable box of the unlabelled pool, in mm. Variable order
/// everywhere is (lambda, t, A).
struct DesignRanges {
  Range lambda{2.0, 21.0};
  Range t{0.2, 2.1};
  Range A{0.2, 2.1};

  const Range& operator[](std::size_t i) const;
};

std::array<double, 3> to_array(const geometry::DesignParams& p);
geometry::DesignParams from_array(const std::array<double, 3>& a);

/// Min-max normalization onto the unit cube.
std::array<double, 3> normalize(const geometry::DesignParams& p, const DesignRanges& r);

struct PoolSpec {
  DesignRanges ranges;
  std::size_t size = 5000;
  std::uint64_t seed = 1;
};

struct PoolStats {
  std::size_t draws = 0;
  std::size_t rejected = 0;
};

/// Uniform rejection sampling of valid designs inside the ranges.
std::vector<geometry::ValidDesign> generate_pool(const PoolSpec& spec, PoolStats* stats = nullptr);

/// Incremental max-min (farthest point) selection over fixed points.
class GreedySelector {
 public:
  explicit GreedySelector(std::vector<std::vector<double>> points);

  /// Marks a point as selected and updates the min-distance table.
  void select(std::size_t index);
  /// Selects and returns the unselected point with the largest distance to
  /// the selected set (lowest index on ties). Throws if none remain.
  std::size_t next();

  bool exhausted() const noexcept { return picks_.size() == points_.size(); }
  const std::vector<std::size_t>& picks() const noexcept { return picks_; }
  const std::vector<double>& min_distances() const noexcept { return min_dist_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  std::vector<std::vector<double>> points_;
  std::vector<double> min_dist_;
  std::vector<bool> chosen_;
  std::vector<std::size_t> picks_;
};

/// Index of the point nearest the centroid (lowest index on ties).
std::size_t nearest_to_centroid(const std::vector<std::vector<double>>& points);

std::vector<std::vector<double>> normalized_points(const std::vector<geometry::ValidDesign>& pool,
                                                   const DesignRanges& ranges);

/// Greedy order starting at `first`, `budget` picks in total.
std::vector<std::size_t> greedy_order(const std::vector<std::vector<double>>& points, std::size_t first,
                                      std::size_t budget);

/// Greedy sampling over the normalized pool, seeded at the centroid-nearest design.
std::vector<std::size_t> greedy_select(const std::vector<geometry::ValidDesign>& pool, std::size_t budget = 150,
                                       const DesignRanges& ranges = {});

struct Record {
  geometry::ValidDesign design;
  mechanics::PropertyCurves curves;
  std::size_t pool_index = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct SplitSizes {
  std::size_t train = 132;
  std::size_t val = 9;
  std::size_t test = 9;

  std::size_t total() const noexcept { return train + val + test; }
};

struct Substitution {
  std::size_t failed = 0;       // pool index that did not converge
  std::size_t replacement = 0;  // pool index labelled instead
  std::string reason;
};

struct Dataset {
  DesignRanges ranges;
  std::uint64_t pool_seed = 0;
  std::uint64_t split_seed = 0;
  std::vector<Record> records;
  Split split;
  std::vector<Substitution> substitutions;
};

using LabelOracle = std::function<mechanics::PropertyCurves(const geometry::ValidDesign&)>;

struct LabelOptions {
  SplitSizes sizes;
  std::uint64_t split_seed = 2;
  std::uint64_t pool_seed = 1;
  DesignRanges ranges;
  std::size_t workers = 1;
  std::ostream* log = nullptr;
};

/// Labels every pick (in parallel when workers > 1), replacing designs whose
/// oracle throws NonConvergence with the next greedy pick, then splits the
/// records at random. Records keep pick order; replacements follow.
Dataset label_and_split(const std::vector<geometry::ValidDesign>& pool, const std::vector<std::size_t>& picks,
                        const LabelOracle& oracle, const LabelOptions& options);

Dataset label_and_split(const std::vector<geometry::ValidDesign>& pool, const std::vector<std::size_t>& picks,
                        const mechanics::Material& material, const mechanics::MechanicsConfig& config,
                        const LabelOptions& options);

/// Random disjoint split of n records.
Split random_split(std::size_t n, const SplitSizes& sizes, std::uint64_t seed);

std::string dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const std::string& text);

/// Flat exports: designs (index, lambda, t, A, split) and long-format curves.
void write_designs_csv(const Dataset& d, std::ostream& os);
void write_curves_csv(const Dataset& d, std::ostream& os);

}  // namespace auxetic::sampling
