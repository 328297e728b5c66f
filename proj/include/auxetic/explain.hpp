#pragma once

// Expected-gradients attribution and distance-based sensitivity for the
// forward surrogates.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "auxetic/neural.hpp"
#include "auxetic/sampling.hpp"

namespace auxetic::explain {

/// Batch model in the space attributions are computed in: inputs d x n,
/// outputs m x n.
struct Model {
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> value;
  /// Element i holds d outputs / d x_i (m x n).
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::MatrixXd&)> jacobian;
};

/// The network of a checkpoint in its standardized input space.
Model network_model(const neural::Mlp& net);

/// Interpolation fractions shared by every (point, background) pair.
std::vector<double> interpolation_draws(std::size_t k, std::uint64_t seed);

/// Signed expected gradients for one point x: an (outputs x inputs) matrix
/// averaged over background columns and the given fractions.
Eigen::MatrixXd expected_gradients(const Model& m, const Eigen::VectorXd& x, const Eigen::MatrixXd& background,
                                   const std::vector<double>& alphas);

struct AttributionReport {
  std::array<double, 3> mean_abs{};  // lambda, t, A
  std::size_t background_size = 0;
  std::size_t samples_per_input = 0;
  std::size_t points = 0;
  std::uint64_t seed = 0;
};

/// Mean |attribution| over every output and every point (columns of x).
AttributionReport attribute(const Model& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& background,
                            std::size_t k_samples, std::uint64_t seed);

/// 50 background designs from the training split, chosen by seeded shuffle.
std::vector<std::size_t> background_indices(const sampling::Dataset& d, std::size_t count, std::uint64_t seed);

/// Attribution of a surrogate on the test split in standardized input space.
AttributionReport attribute_surrogate(const neural::ModelCheckpoint& c, const sampling::Dataset& d,
                                      std::size_t background = 50, std::size_t k_samples = 200,
                                      std::uint64_t seed = 6);

/// Physical-unit curve predictor: designs 3 x n -> curves q x n.
using CurveFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

struct VariableSensitivity {
  double slope = 0.0;            // distance per mm
  double slope_normalized = 0.0; // distance per unit of range (slope * range width)
  std::vector<double> grid;
  std::vector<double> distances;
  std::size_t baseline_index = 0;
};

struct SensitivityReport {
  std::array<VariableSensitivity, 3> vars;
};

/// Least-squares slope of y against x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

VariableSensitivity sensitivity(const CurveFn& f, std::size_t var, const sampling::DesignRanges& ranges,
                                std::size_t grid = 100);
SensitivityReport sensitivity_report(const CurveFn& f, const sampling::DesignRanges& ranges, std::size_t grid = 100);
CurveFn surrogate_curves(const neural::ModelCheckpoint& c);

struct ComparisonRow {
  std::string variable;
  double attribution = 0.0;
  double sensitivity_normalized = 0.0;
};

/// Sensitivity bars rescaled so their maximum equals the maximum attribution.
std::vector<ComparisonRow> normalized_comparison(const AttributionReport& a, const SensitivityReport& s);

/// Variable indices ordered by decreasing value (lowest index on ties).
std::array<std::size_t, 3> rank_order(const std::array<double, 3>& v);

void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& os);
nlohmann::json attribution_to_json(const AttributionReport& a);
nlohmann::json sensitivity_to_json(const SensitivityReport& s);

}  // namespace auxetic::explain
