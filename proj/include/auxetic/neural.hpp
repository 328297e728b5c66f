#pragma once

// Dense ReLU networks with analytic gradients, Adam, standardization and the
// forward surrogates (lambda, t, A) -> 30-point nu or sigma curve.
//
// Batches are column-major: one sample per column.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "auxetic/geometry.hpp"
#include "auxetic/sampling.hpp"

namespace auxetic::neural {

/// Layer widths from input to output. Hidden layers use ReLU, the output is affine.
struct NetworkSpec {
  std::vector<std::size_t> layer_sizes;
  std::uint64_t seed = 0;
};

inline const std::vector<std::size_t> kForwardLayers{3, 50, 100, 125, 75, 30};

class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(std::vector<std::size_t> layer_sizes);
  /// He-normal weights (std sqrt(2 / fan_in)), zero biases.
  static Mlp he_initialized(const NetworkSpec& spec);

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  std::size_t n_layers() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t n_params() const noexcept { return static_cast<std::size_t>(params_.size()); }

  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }

  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;

  /// Reverse pass for upstream gradient d_out. Adds parameter gradients into
  /// *grad when non-null and returns the gradient with respect to the input.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& d_out, Eigen::VectorXd* grad) const;

  /// Forward-mode input derivatives: element i is d output / d x_i for every
  /// sample (output_dim x batch).
  std::vector<Eigen::MatrixXd> input_derivatives(const Eigen::MatrixXd& x) const;

 private:
  void check_input(const Eigen::MatrixXd& x) const;

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  // start of W_l; b_l follows W_l
  Eigen::VectorXd params_;
};

double relu(double x) noexcept;

/// Per-dimension standardization. Zero-variance dimensions get std 1.
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  static Scaler fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& z) const;
};

/// Batch-mean squared error over all entries.
double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// Loss and exact gradient of the batch-mean MSE with respect to all parameters.
double mse_gradient(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::VectorXd& grad);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  explicit AdamState(std::size_t n = 0)
      : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place.
void adam_step(Eigen::Ref<Eigen::VectorXd> theta, const Eigen::Ref<const Eigen::VectorXd>& grad, AdamState& state,
               const AdamConfig& cfg);

/// R^2 over all outputs flattened. Throws ZeroVariance when the targets are constant.
double r2_score(std::span<const double> y_true, std::span<const double> y_pred);
double r2_score(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred);
double mae(std::span<const double> y_true, std::span<const double> y_pred);
double mae(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred);

struct TrainingMeta {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;
};

/// Network weights with the scalers that map physical units to the network's
/// standardized space.
struct ModelCheckpoint {
  std::string kind;
  NetworkSpec spec;
  Mlp net;
  Scaler input;
  Scaler output;
  TrainingMeta meta;
  nlohmann::json extra = nlohmann::json::object();

  /// Shapes consistent with spec, stds strictly positive.
  void validate() const;
};

nlohmann::json checkpoint_to_json(const ModelCheckpoint& c);
ModelCheckpoint checkpoint_from_json(const nlohmann::json& j);
std::string checkpoint_to_string(const ModelCheckpoint& c);

/// Physical-unit evaluation through the checkpoint's scalers.
Eigen::MatrixXd predict_physical(const ModelCheckpoint& c, const Eigen::MatrixXd& x);

enum class Target { Nu, Sigma };
std::string to_string(Target t);

struct ForwardHyper {
  AdamConfig adam;
  std::size_t max_epochs = 20000;
  std::size_t patience = 2000;
  std::uint64_t seed = 3;
  /// Rescaled copies per training design; 0 trains on the raw split only.
  std::size_t scale_copies = 8;
};

/// Appends exact rescaled copies of every training column: the curves do not
/// change under uniform scaling, so design (k*lambda, k*t, k*A) keeps its
/// label. Copies sit at evenly spaced wavelengths across the lambda range and
/// are kept only when t and A stay inside their ranges.
void augment_by_scale(Eigen::MatrixXd& x, Eigen::MatrixXd& y, const sampling::DesignRanges& ranges,
                      std::size_t copies);

/// Design matrix (3 x n, physical mm) and target matrix (30 x n) for record indices.
Eigen::MatrixXd design_matrix(const sampling::Dataset& d, std::span<const std::size_t> idx);
Eigen::MatrixXd curve_matrix(const sampling::Dataset& d, std::span<const std::size_t> idx, Target target);

/// Full-batch Adam on standardized inputs and outputs (train-split scalers),
/// returning the best-on-validation parameters.
ModelCheckpoint train_forward_model(const sampling::Dataset& d, Target target, const ForwardHyper& hyper);

struct RegressionReport {
  double r2 = 0.0;
  double mae = 0.0;
};

RegressionReport evaluate_forward(const ModelCheckpoint& c, const sampling::Dataset& d,
                                  std::span<const std::size_t> idx, Target target);

}  // namespace auxetic::neural
