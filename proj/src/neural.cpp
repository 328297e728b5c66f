#include "auxetic/neural.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "auxetic/random.hpp"

namespace auxetic::neural {

using nlohmann::json;

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

Mlp::Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw Error(ErrorKind::ShapeMismatch, "network needs at least input and output widths");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw Error(ErrorKind::ShapeMismatch, "layer widths must be positive");
    offsets_.push_back(total);
    total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

Mlp Mlp::he_initialized(const NetworkSpec& spec) {
  Mlp net(spec.layer_sizes);
  Rng rng(spec.seed);
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    auto w = net.weight(l);
    const double scale = std::sqrt(2.0 / static_cast<double>(net.sizes_[l]));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.normal();
    }
  }
  return net;
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(std::size_t l) {
  return {params_.data() + offsets_.at(l), static_cast<Eigen::Index>(sizes_[l + 1]),
          static_cast<Eigen::Index>(sizes_[l])};
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t l) const {
  return {params_.data() + offsets_.at(l), static_cast<Eigen::Index>(sizes_[l + 1]),
          static_cast<Eigen::Index>(sizes_[l])};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t l) {
  return {params_.data() + offsets_.at(l) + sizes_[l + 1] * sizes_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  return {params_.data() + offsets_.at(l) + sizes_[l + 1] * sizes_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
}

void Mlp::check_input(const Eigen::MatrixXd& x) const {
  if (sizes_.empty() || static_cast<std::size_t>(x.rows()) != sizes_.front()) {
    std::ostringstream os;
    os << "network expects " << (sizes_.empty() ? 0 : sizes_.front()) << " inputs, got " << x.rows();
    throw Error(ErrorKind::ShapeMismatch, os.str());
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  check_input(x);
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < n_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < n_layers()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  check_input(x);
  tape.inputs.resize(n_layers());
  tape.pre.resize(n_layers());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < n_layers(); ++l) {
    tape.inputs[l] = a;
    tape.pre[l] = weight(l) * a;
    tape.pre[l].colwise() += bias(l);
    a = l + 1 < n_layers() ? Eigen::MatrixXd(tape.pre[l].cwiseMax(0.0)) : tape.pre[l];
  }
  return a;
}

Eigen::VectorXd Mlp::predict(const Eigen::VectorXd& x) const { return forward(Eigen::MatrixXd(x)).col(0); }

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& d_out, Eigen::VectorXd* grad) const {
  if (tape.pre.size() != n_layers() || static_cast<std::size_t>(d_out.rows()) != output_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "backward pass does not match the recorded forward pass");
  }
  if (grad && static_cast<std::size_t>(grad->size()) != n_params()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient buffer has the wrong size");
  }
  Eigen::MatrixXd d = d_out;
  for (std::size_t l = n_layers(); l-- > 0;) {
    if (l + 1 < n_layers()) d = d.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
    if (grad) {
      const std::size_t rows = sizes_[l + 1];
      const std::size_t cols = sizes_[l];
      Eigen::Map<Eigen::MatrixXd> gw(grad->data() + offsets_[l], static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
      Eigen::Map<Eigen::VectorXd> gb(grad->data() + offsets_[l] + rows * cols, static_cast<Eigen::Index>(rows));
      gw.noalias() += d * tape.inputs[l].transpose();
      gb += d.rowwise().sum();
    }
    d = weight(l).transpose() * d;
  }
  return d;
}

std::vector<Eigen::MatrixXd> Mlp::input_derivatives(const Eigen::MatrixXd& x) const {
  check_input(x);
  const auto batch = x.cols();
  std::vector<Eigen::MatrixXd> tangents(input_dim());
  for (std::size_t i = 0; i < input_dim(); ++i) {
    tangents[i] = Eigen::MatrixXd::Zero(x.rows(), batch);
    tangents[i].row(static_cast<Eigen::Index>(i)).setOnes();
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < n_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    const bool hidden = l + 1 < n_layers();
    const Eigen::MatrixXd mask = (z.array() > 0.0).cast<double>().matrix();
    for (auto& t : tangents) {
      t = weight(l) * t;
      if (hidden) t = t.cwiseProduct(mask);
    }
    a = hidden ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return tangents;
}

Scaler Scaler::fit(const Eigen::MatrixXd& x) {
  if (x.cols() == 0) throw Error(ErrorKind::ShapeMismatch, "cannot fit a scaler on zero samples");
  Scaler s;
  s.mean = x.rowwise().mean();
  s.std = ((x.colwise() - s.mean).array().square().rowwise().mean()).sqrt().matrix();
  for (Eigen::Index i = 0; i < s.std.size(); ++i) {
    if (!(s.std[i] > 1e-12 * std::max(1.0, std::abs(s.mean[i])))) s.std[i] = 1.0;
  }
  return s;
}

Eigen::MatrixXd Scaler::transform(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean.size()) throw Error(ErrorKind::ShapeMismatch, "scaler dimension mismatch");
  return (x.colwise() - mean).array().colwise() / std.array();
}

Eigen::MatrixXd Scaler::inverse(const Eigen::MatrixXd& z) const {
  if (z.rows() != mean.size()) throw Error(ErrorKind::ShapeMismatch, "scaler dimension mismatch");
  Eigen::MatrixXd x = z.array().colwise() * std.array();
  x.colwise() += mean;
  return x;
}

double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "prediction and target shapes differ");
  }
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double mse_gradient(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::VectorXd& grad) {
  if (x.cols() == 0) throw Error(ErrorKind::ShapeMismatch, "empty batch");
  if (y.cols() != x.cols() || static_cast<std::size_t>(y.rows()) != net.output_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "target batch shape does not match the network");
  }
  Mlp::Tape tape;
  const Eigen::MatrixXd pred = net.forward(x, tape);
  const Eigen::MatrixXd diff = pred - y;
  const auto n = static_cast<double>(diff.size());
  grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.n_params()));
  net.backward(tape, (2.0 / n) * diff, &grad);
  return diff.squaredNorm() / n;
}

void adam_step(Eigen::Ref<Eigen::VectorXd> theta, const Eigen::Ref<const Eigen::VectorXd>& grad, AdamState& state,
               const AdamConfig& cfg) {
  if (theta.size() != grad.size() || state.m.size() != theta.size() || state.v.size() != theta.size()) {
    throw Error(ErrorKind::ShapeMismatch, "Adam state, parameters and gradient must have equal sizes");
  }
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  theta.array() -= cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

double r2_score(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "r2_score needs equal, nonempty inputs");
  }
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(y_true.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (ss_tot == 0.0) throw Error(ErrorKind::ZeroVariance, "r2_score undefined for constant targets");
  return 1.0 - ss_res / ss_tot;
}

double r2_score(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "r2_score needs equal shapes");
  }
  return r2_score(std::span<const double>(y_true.data(), static_cast<std::size_t>(y_true.size())),
                  std::span<const double>(y_pred.data(), static_cast<std::size_t>(y_pred.size())));
}

double mae(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "mae needs equal, nonempty inputs");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += std::abs(y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

double mae(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "mae needs equal shapes");
  }
  return mae(std::span<const double>(y_true.data(), static_cast<std::size_t>(y_true.size())),
             std::span<const double>(y_pred.data(), static_cast<std::size_t>(y_pred.size())));
}

void ModelCheckpoint::validate() const {
  if (net.layer_sizes() != spec.layer_sizes) throw Error(ErrorKind::ShapeMismatch, "checkpoint layers differ from spec");
  auto check_scaler = [](const Scaler& s, std::size_t dim, const char* what) {
    if (static_cast<std::size_t>(s.mean.size()) != dim || static_cast<std::size_t>(s.std.size()) != dim) {
      throw Error(ErrorKind::ShapeMismatch, std::string(what) + " scaler has the wrong dimension");
    }
    if (!(s.std.array() > 0.0).all()) throw Error(ErrorKind::InvalidConfig, std::string(what) + " scaler std must be positive");
  };
  check_scaler(input, net.input_dim(), "input");
  if (output.mean.size() != 0) check_scaler(output, net.output_dim(), "output");
}

json checkpoint_to_json(const ModelCheckpoint& c) {
  json layers = json::array();
  for (std::size_t l = 0; l < c.net.n_layers(); ++l) {
    const auto w = c.net.weight(l);
    json rows = json::array();
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j) row[static_cast<std::size_t>(j)] = w(i, j);
      rows.push_back(row);
    }
    layers.push_back({{"W", rows}, {"b", to_std(c.net.bias(l))}});
  }
  auto scaler = [](const Scaler& s) { return json{{"mean", to_std(s.mean)}, {"std", to_std(s.std)}}; };
  return {{"kind", c.kind},
          {"spec", {{"layer_sizes", c.spec.layer_sizes}, {"hidden_activation", "relu"}, {"output_activation", "identity"},
                    {"seed", c.spec.seed}}},
          {"scalers", {{"input", scaler(c.input)}, {"output", scaler(c.output)}}},
          {"layers", layers},
          {"metadata", {{"epochs_run", c.meta.epochs_run},
                        {"best_epoch", c.meta.best_epoch},
                        {"final_train_loss", c.meta.final_train_loss},
                        {"best_val_loss", c.meta.best_val_loss},
                        {"lr", c.meta.lr},
                        {"seed", c.meta.seed}}},
          {"extra", c.extra}};
}

ModelCheckpoint checkpoint_from_json(const json& j) {
  try {
    ModelCheckpoint c;
    c.kind = j.at("kind").get<std::string>();
    c.spec.layer_sizes = j.at("spec").at("layer_sizes").get<std::vector<std::size_t>>();
    c.spec.seed = j.at("spec").at("seed").get<std::uint64_t>();
    c.net = Mlp(c.spec.layer_sizes);
    const auto& layers = j.at("layers");
    if (layers.size() != c.net.n_layers()) throw Error(ErrorKind::ShapeMismatch, "checkpoint layer count mismatch");
    for (std::size_t l = 0; l < c.net.n_layers(); ++l) {
      auto w = c.net.weight(l);
      const auto& rows = layers[l].at("W");
      if (rows.size() != static_cast<std::size_t>(w.rows())) throw Error(ErrorKind::ShapeMismatch, "weight rows mismatch");
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(w.cols())) throw Error(ErrorKind::ShapeMismatch, "weight cols mismatch");
        for (Eigen::Index k = 0; k < w.cols(); ++k) w(i, k) = row[static_cast<std::size_t>(k)];
      }
      const auto b = layers[l].at("b").get<std::vector<double>>();
      if (b.size() != static_cast<std::size_t>(c.net.bias(l).size())) throw Error(ErrorKind::ShapeMismatch, "bias mismatch");
      c.net.bias(l) = to_vector(b);
    }
    auto scaler = [](const json& s) {
      return Scaler{to_vector(s.at("mean").get<std::vector<double>>()), to_vector(s.at("std").get<std::vector<double>>())};
    };
    c.input = scaler(j.at("scalers").at("input"));
    c.output = scaler(j.at("scalers").at("output"));
    const auto& m = j.at("metadata");
    c.meta.epochs_run = m.at("epochs_run");
    c.meta.best_epoch = m.at("best_epoch");
    c.meta.final_train_loss = m.at("final_train_loss");
    c.meta.best_val_loss = m.at("best_val_loss");
    c.meta.lr = m.at("lr");
    c.meta.seed = m.at("seed");
    c.extra = j.value("extra", json::object());
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed checkpoint: ") + e.what());
  }
}

std::string checkpoint_to_string(const ModelCheckpoint& c) { return checkpoint_to_json(c).dump() + "\n"; }

Eigen::MatrixXd predict_physical(const ModelCheckpoint& c, const Eigen::MatrixXd& x) {
  return c.output.inverse(c.net.forward(c.input.transform(x)));
}

std::string to_string(Target t) { return t == Target::Nu ? "nu" : "sigma"; }

Eigen::MatrixXd design_matrix(const sampling::Dataset& d, std::span<const std::size_t> idx) {
  Eigen::MatrixXd x(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& p = d.records.at(idx[k]).design;
    x.col(static_cast<Eigen::Index>(k)) << p.lambda(), p.t(), p.A();
  }
  return x;
}

Eigen::MatrixXd curve_matrix(const sampling::Dataset& d, std::span<const std::size_t> idx, Target target) {
  if (idx.empty()) return Eigen::MatrixXd(0, 0);
  const std::size_t q = d.records.at(idx[0]).curves.nu.size();
  Eigen::MatrixXd y(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& c = d.records.at(idx[k]).curves;
    const auto& v = target == Target::Nu ? c.nu : c.sigma_kpa;
    if (v.size() != q) throw Error(ErrorKind::ShapeMismatch, "records have curves of different lengths");
    y.col(static_cast<Eigen::Index>(k)) = to_vector(v);
  }
  return y;
}

void augment_by_scale(Eigen::MatrixXd& x, Eigen::MatrixXd& y, const sampling::DesignRanges& ranges,
                      std::size_t copies) {
  if (copies == 0 || x.cols() == 0) return;
  if (x.rows() != 3 || y.cols() != x.cols()) throw Error(ErrorKind::ShapeMismatch, "augmentation needs 3 x n designs");
  std::vector<Eigen::Index> src;
  std::vector<double> factor;
  const auto inside = [](double v, const sampling::Range& r) { return v >= r.min && v <= r.max; };
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (std::size_t k = 0; k < copies; ++k) {
      const double lambda =
          ranges.lambda.min + (ranges.lambda.max - ranges.lambda.min) * (static_cast<double>(k) + 0.5) / static_cast<double>(copies);
      const double f = lambda / x(0, j);
      if (std::abs(f - 1.0) < 1e-9 || !inside(f * x(1, j), ranges.t) || !inside(f * x(2, j), ranges.A)) continue;
      src.push_back(j);
      factor.push_back(f);
    }
  }
  const Eigen::Index n = x.cols();
  const auto extra = static_cast<Eigen::Index>(src.size());
  x.conservativeResize(Eigen::NoChange, n + extra);
  y.conservativeResize(Eigen::NoChange, n + extra);
  for (Eigen::Index k = 0; k < extra; ++k) {
    const auto j = src[static_cast<std::size_t>(k)];
    x.col(n + k) = factor[static_cast<std::size_t>(k)] * x.col(j);
    y.col(n + k) = y.col(j);
  }
}

ModelCheckpoint train_forward_model(const sampling::Dataset& d, Target target, const ForwardHyper& hyper) {
  if (d.split.train.empty()) throw Error(ErrorKind::InvalidConfig, "dataset has no training split");
  Eigen::MatrixXd x_train = design_matrix(d, d.split.train);
  Eigen::MatrixXd y_train = curve_matrix(d, d.split.train, target);

  ModelCheckpoint c;
  c.kind = "forward_" + to_string(target);
  c.spec = {kForwardLayers, hyper.seed};
  c.spec.layer_sizes.back() = static_cast<std::size_t>(y_train.rows());
  // Scalers come from the labelled designs alone, before augmentation.
  c.input = Scaler::fit(x_train);
  c.output = Scaler::fit(y_train);
  c.net = Mlp::he_initialized(c.spec);
  augment_by_scale(x_train, y_train, d.ranges, hyper.scale_copies);

  const Eigen::MatrixXd xs = c.input.transform(x_train);
  const Eigen::MatrixXd ys = c.output.transform(y_train);
  const bool has_val = !d.split.val.empty();
  const Eigen::MatrixXd xv = has_val ? c.input.transform(design_matrix(d, d.split.val)) : xs;
  const Eigen::MatrixXd yv = has_val ? c.output.transform(curve_matrix(d, d.split.val, target)) : ys;

  AdamState state(c.net.n_params());
  Eigen::VectorXd grad;
  Eigen::VectorXd best = c.net.params();
  double best_val = mse(c.net.forward(xv), yv);
  std::size_t best_epoch = 0;
  double train_loss = 0.0;
  std::size_t epoch = 0;
  while (epoch < hyper.max_epochs) {
    ++epoch;
    train_loss = mse_gradient(c.net, xs, ys, grad);
    if (!std::isfinite(train_loss) || !grad.allFinite()) {
      std::ostringstream os;
      os << "non-finite training loss at epoch " << epoch << " (loss " << train_loss << ", best val " << best_val << ")";
      throw Error(ErrorKind::NonFiniteLoss, os.str());
    }
    adam_step(c.net.params(), grad, state, hyper.adam);
    const double val = mse(c.net.forward(xv), yv);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best = c.net.params();
    } else if (epoch - best_epoch >= hyper.patience) {
      break;
    }
  }
  c.net.params() = best;
  c.meta = {epoch, best_epoch, mse(c.net.forward(xs), ys), best_val, hyper.adam.lr, hyper.seed};
  c.extra = {{"target", to_string(target)},
             {"units", target == Target::Nu ? "dimensionless" : "kPa"},
             {"strain_grid", d.records.at(d.split.train.front()).curves.strain_grid},
             {"train_columns", x_train.cols()}};
  return c;
}

RegressionReport evaluate_forward(const ModelCheckpoint& c, const sampling::Dataset& d,
                                  std::span<const std::size_t> idx, Target target) {
  const Eigen::MatrixXd truth = curve_matrix(d, idx, target);
  const Eigen::MatrixXd pred = predict_physical(c, design_matrix(d, idx));
  return {r2_score(truth, pred), mae(truth, pred)};
}

}  // namespace auxetic::neural
