#pragma once

// Tandem design network: target (nu, sigma) curves -> N design triples,
// trained through the two frozen forward surrogates.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "auxetic/geometry.hpp"
#include "auxetic/mechanics.hpp"
#include "auxetic/neural.hpp"
#include "auxetic/sampling.hpp"

namespace auxetic::inverse {

struct InverseLossConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.0;
  std::size_t N = 1;   // design groups per target
  std::size_t Q = 30;  // strain levels per curve
  std::size_t P = 3;   // variables per group
  double eps_scale = 1e-6;
  double cap = 1e6;

  /// InvalidConfig on N == 0, negative weights, gamma > 0 with N == 1, or
  /// non-positive eps/cap.
  void validate() const;
};

/// Read-only pair of trained forward surrogates.
struct Surrogates {
  const neural::ModelCheckpoint* nu = nullptr;
  const neural::ModelCheckpoint* sigma = nullptr;

  /// Strain grid both surrogates were trained on; GridMismatch if they differ.
  std::vector<double> strain_grid() const;
};

/// [60, 90, 125, 150, 100, 50, 3N]. InvalidConfig when N == 0.
neural::NetworkSpec build_design_net(std::size_t N, std::uint64_t seed = 0);

/// Numerically stable softplus and its derivative.
double softplus(double z) noexcept;
double sigmoid(double z) noexcept;

/// Scale-diversity penalty over groups (P x N, one group per column).
/// InvalidConfig when N < 2. When grad is non-null it receives dL/dgroups.
double scale_loss(const Eigen::MatrixXd& groups, const InverseLossConfig& cfg, Eigen::MatrixXd* grad = nullptr);

/// Mean squared deviation of pairwise ratios from their per-pair mean.
double ratio_deviation(const Eigen::MatrixXd& groups);

struct LossTerms {
  double nu = 0.0;
  double sigma = 0.0;
  double scale = 0.0;
  double total = 0.0;
};

/// Loss of designs against standardized targets.
///   designs      3N x B physical triples (group i in rows 3i..3i+2)
///   targets_nu   Q x B, targets_sigma Q x B, standardized with the
///                surrogates' output scalers
/// Optional d_designs receives dLoss/d designs.
LossTerms total_loss(const Eigen::MatrixXd& designs, const Eigen::MatrixXd& targets_nu,
                     const Eigen::MatrixXd& targets_sigma, const Surrogates& s, const InverseLossConfig& cfg,
                     Eigen::MatrixXd* d_designs = nullptr);

/// The design network's output map, applied per row. With a stored ceiling
/// D = floor + (ceiling - floor) * sigmoid(z); otherwise D = floor + scale * softplus(z).
Eigen::MatrixXd design_outputs(const neural::ModelCheckpoint& design, const Eigen::MatrixXd& z);

/// Standardized 60-row network input from physical target curves (Q x B each).
Eigen::MatrixXd standardize_targets(const Surrogates& s, const Eigen::MatrixXd& nu, const Eigen::MatrixXd& sigma_kpa);

/// Raw (un-rescaled) design triples for standardized 60-row inputs.
Eigen::MatrixXd run_design_net(const neural::ModelCheckpoint& design, const Eigen::MatrixXd& inputs);

/// Full objective and parameter gradient for the design net on one batch.
double design_objective(const neural::ModelCheckpoint& design, const Eigen::MatrixXd& inputs, const Surrogates& s,
                        const InverseLossConfig& cfg, Eigen::VectorXd* grad, LossTerms* terms = nullptr);

struct InverseHyper {
  neural::AdamConfig adam;
  std::size_t max_epochs = 20000;
  std::size_t patience = 2000;
  std::uint64_t seed = 4;
};

/// Trains on the curves of the train split (no design labels), selects the
/// best-on-validation parameters and checks that both surrogates are
/// byte-identical before and after.
neural::ModelCheckpoint train_design_model(const sampling::Dataset& d, const Surrogates& s,
                                           const InverseLossConfig& cfg, const InverseHyper& hyper);

InverseLossConfig loss_config_from(const neural::ModelCheckpoint& design);

struct GroupProposal {
  geometry::DesignParams raw;     // network output
  geometry::DesignParams params;  // after optional rescaling
  bool valid = false;             // positive peak gap
  std::vector<double> nu;         // surrogate predictions at params
  std::vector<double> sigma_kpa;
  double mae_nu = 0.0;
  double mae_sigma_kpa = 0.0;
};

struct DesignProposal {
  std::vector<GroupProposal> groups;
};

/// Surrogate predictions and MAEs for given designs against a target.
GroupProposal evaluate_group(const geometry::DesignParams& raw, const geometry::DesignParams& params,
                             const mechanics::PropertyCurves& target, const Surrogates& s);

/// GridMismatch when the target grid differs from the surrogates' grid.
DesignProposal propose_designs(const neural::ModelCheckpoint& design, const Surrogates& s,
                               const mechanics::PropertyCurves& target, std::optional<double> rescale_to = {});

nlohmann::json proposal_to_json(const DesignProposal& p, const nlohmann::json& config);

/// GridMismatch unless a and b agree to 1e-12 at every point.
void check_grid(const std::vector<double>& expected, const std::vector<double>& actual);

}  // namespace auxetic::inverse
