#include "auxetic/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "auxetic/csv.hpp"
#include "auxetic/random.hpp"

namespace auxetic::explain {

using nlohmann::json;

namespace {
constexpr std::array<const char*, 3> kNames{"lambda", "t", "A"};
}

Model network_model(const neural::Mlp& net) {
  return {[&net](const Eigen::MatrixXd& x) { return net.forward(x); },
          [&net](const Eigen::MatrixXd& x) { return net.input_derivatives(x); }};
}

std::vector<double> interpolation_draws(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(k);
  for (auto& v : a) v = rng.uniform();
  return a;
}

Eigen::MatrixXd expected_gradients(const Model& m, const Eigen::VectorXd& x, const Eigen::MatrixXd& background,
                                   const std::vector<double>& alphas) {
  if (background.cols() == 0 || alphas.empty()) throw Error(ErrorKind::InvalidConfig, "empty background or draws");
  if (background.rows() != x.size()) throw Error(ErrorKind::ShapeMismatch, "background dimension differs from x");
  const auto d = x.size();
  const auto nb = background.cols();
  const auto k = static_cast<Eigen::Index>(alphas.size());
  Eigen::MatrixXd path(d, nb * k);
  for (Eigen::Index b = 0; b < nb; ++b) {
    for (Eigen::Index s = 0; s < k; ++s) {
      path.col(b * k + s) = background.col(b) + alphas[static_cast<std::size_t>(s)] * (x - background.col(b));
    }
  }
  const auto jac = m.jacobian(path);
  if (static_cast<Eigen::Index>(jac.size()) != d) throw Error(ErrorKind::ShapeMismatch, "jacobian has wrong arity");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(jac.front().rows(), d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index b = 0; b < nb; ++b) {
      const double delta = x[i] - background(i, b);
      out.col(i) += delta * jac[static_cast<std::size_t>(i)].middleCols(b * k, k).rowwise().sum();
    }
  }
  return out / static_cast<double>(nb * k);
}

AttributionReport attribute(const Model& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& background,
                            std::size_t k_samples, std::uint64_t seed) {
  if (x.rows() != 3) throw Error(ErrorKind::ShapeMismatch, "attribution expects three design variables");
  if (x.cols() == 0) throw Error(ErrorKind::InvalidConfig, "no points to explain");
  const auto alphas = interpolation_draws(k_samples, seed);
  AttributionReport r;
  Eigen::Vector3d total = Eigen::Vector3d::Zero();
  Eigen::Index outputs = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::MatrixXd eg = expected_gradients(m, x.col(j), background, alphas);
    total += eg.cwiseAbs().colwise().sum().transpose();
    outputs = eg.rows();
  }
  total /= static_cast<double>(outputs * x.cols());
  for (std::size_t i = 0; i < 3; ++i) r.mean_abs[i] = total[static_cast<Eigen::Index>(i)];
  r.background_size = static_cast<std::size_t>(background.cols());
  r.samples_per_input = k_samples;
  r.points = static_cast<std::size_t>(x.cols());
  r.seed = seed;
  return r;
}

std::vector<std::size_t> background_indices(const sampling::Dataset& d, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx = d.split.train;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(count, idx.size()));
  return idx;
}

AttributionReport attribute_surrogate(const neural::ModelCheckpoint& c, const sampling::Dataset& d,
                                      std::size_t background, std::size_t k_samples, std::uint64_t seed) {
  const auto bg_idx = background_indices(d, background, seed);
  if (bg_idx.empty()) throw Error(ErrorKind::InvalidConfig, "training split is empty");
  const auto& points = d.split.test.empty() ? d.split.val : d.split.test;
  const Eigen::MatrixXd bg = c.input.transform(neural::design_matrix(d, bg_idx));
  const Eigen::MatrixXd x = c.input.transform(neural::design_matrix(d, points));
  return attribute(network_model(c.net), x, bg, k_samples, seed + 1);
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::ShapeMismatch, "slope needs two or more pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw Error(ErrorKind::ZeroVariance, "slope undefined for a constant abscissa");
  return sxy / sxx;
}

VariableSensitivity sensitivity(const CurveFn& f, std::size_t var, const sampling::DesignRanges& ranges,
                                std::size_t grid) {
  if (var > 2) throw Error(ErrorKind::InvalidConfig, "variable index must be 0, 1 or 2");
  if (grid < 2) throw Error(ErrorKind::InvalidConfig, "sensitivity grid needs two or more points");
  VariableSensitivity v;
  const auto& r = ranges[var];
  Eigen::MatrixXd x(3, static_cast<Eigen::Index>(grid));
  for (std::size_t i = 0; i < grid; ++i) {
    const double value = r.min + r.width() * static_cast<double>(i) / static_cast<double>(grid - 1);
    v.grid.push_back(value);
    const auto col = static_cast<Eigen::Index>(i);
    x.col(col) << ranges[0].mid(), ranges[1].mid(), ranges[2].mid();
    x(static_cast<Eigen::Index>(var), col) = value;
  }
  const Eigen::MatrixXd curves = f(x);
  const Eigen::VectorXd mean_abs = curves.cwiseAbs().colwise().mean().transpose();
  Eigen::Index base = 0;
  for (Eigen::Index j = 1; j < mean_abs.size(); ++j) {
    if (mean_abs[j] < mean_abs[base]) base = j;
  }
  v.baseline_index = static_cast<std::size_t>(base);
  for (Eigen::Index j = 0; j < curves.cols(); ++j) v.distances.push_back((curves.col(j) - curves.col(base)).norm());
  v.slope = ls_slope(v.grid, v.distances);
  v.slope_normalized = v.slope * r.width();
  return v;
}

SensitivityReport sensitivity_report(const CurveFn& f, const sampling::DesignRanges& ranges, std::size_t grid) {
  SensitivityReport s;
  for (std::size_t k = 0; k < 3; ++k) s.vars[k] = sensitivity(f, k, ranges, grid);
  return s;
}

CurveFn surrogate_curves(const neural::ModelCheckpoint& c) {
  return [&c](const Eigen::MatrixXd& x) { return neural::predict_physical(c, x); };
}

std::array<std::size_t, 3> rank_order(const std::array<double, 3>& v) {
  std::array<std::size_t, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}

std::vector<ComparisonRow> normalized_comparison(const AttributionReport& a, const SensitivityReport& s) {
  std::array<double, 3> sens{};
  for (std::size_t k = 0; k < 3; ++k) sens[k] = std::abs(s.vars[k].slope_normalized);
  const double max_a = *std::max_element(a.mean_abs.begin(), a.mean_abs.end());
  const double max_s = *std::max_element(sens.begin(), sens.end());
  std::vector<ComparisonRow> rows;
  for (std::size_t k = 0; k < 3; ++k) {
    // Exact equality at the maximum rather than max_s * (max_a / max_s).
    double v = 0.0;
    if (max_s > 0.0) v = sens[k] == max_s ? max_a : sens[k] * (max_a / max_s);
    rows.push_back({kNames[k], a.mean_abs[k], v});
  }
  return rows;
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& os) {
  os << "variable,attribution,sensitivity_normalized\n";
  for (const auto& r : rows) {
    os << r.variable << ',' << csv::format(r.attribution) << ',' << csv::format(r.sensitivity_normalized) << '\n';
  }
}

json attribution_to_json(const AttributionReport& a) {
  json j = {{"background_size", a.background_size},
            {"samples_per_input", a.samples_per_input},
            {"points", a.points},
            {"seed", a.seed},
            {"space", "standardized inputs"}};
  for (std::size_t k = 0; k < 3; ++k) j["mean_abs_attribution"][kNames[k]] = a.mean_abs[k];
  const auto order = rank_order(a.mean_abs);
  for (auto i : order) j["ranking"].push_back(kNames[i]);
  return j;
}

json sensitivity_to_json(const SensitivityReport& s) {
  json j = json::object();
  std::array<double, 3> mag{};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& v = s.vars[k];
    mag[k] = std::abs(v.slope_normalized);
    j["variables"][kNames[k]] = {{"slope_per_mm", v.slope},
                                 {"slope_per_range", v.slope_normalized},
                                 {"baseline_index", v.baseline_index},
                                 {"baseline_value_mm", v.grid.at(v.baseline_index)},
                                 {"grid_mm", v.grid},
                                 {"distances", v.distances}};
  }
  for (auto i : rank_order(mag)) j["ranking"].push_back(kNames[i]);
  return j;
}

}  // namespace auxetic::explain
