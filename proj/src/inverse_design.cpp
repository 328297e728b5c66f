#include "auxetic/inverse_design.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "auxetic/serialization.hpp"

namespace auxetic::inverse {

using nlohmann::json;
using neural::ModelCheckpoint;

namespace {

std::string surrogate_hash(const ModelCheckpoint& c) {
  return serialization::hex64(serialization::fnv1a(neural::checkpoint_to_string(c)));
}

std::vector<double> grid_of(const ModelCheckpoint& c) {
  if (c.extra.contains("strain_grid")) return c.extra.at("strain_grid").get<std::vector<double>>();
  return mechanics::default_strain_grid();
}

void require(const Surrogates& s) {
  if (s.nu == nullptr || s.sigma == nullptr) throw Error(ErrorKind::InvalidConfig, "both surrogates are required");
}

Eigen::VectorXd design_scale(const ModelCheckpoint& design) {
  const auto v = design.extra.at("design_scale").get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorKind::ShapeMismatch, "design scale must have three entries");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), 3);
}

// Lower bound added after the softplus; absent means zero.
Eigen::VectorXd design_floor(const ModelCheckpoint& design) {
  if (!design.extra.contains("design_floor")) return Eigen::VectorXd::Zero(3);
  const auto v = design.extra.at("design_floor").get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorKind::ShapeMismatch, "design floor must have three entries");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), 3);
}

// Upper bound of the bounded map; absent selects the unbounded softplus map.
std::optional<Eigen::VectorXd> design_ceiling(const ModelCheckpoint& design) {
  if (!design.extra.contains("design_ceiling")) return std::nullopt;
  const auto v = design.extra.at("design_ceiling").get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorKind::ShapeMismatch, "design ceiling must have three entries");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), 3);
}

}  // namespace

void InverseLossConfig::validate() const {
  if (N == 0) throw Error(ErrorKind::InvalidConfig, "N must be at least 1");
  if (N == 1 && gamma != 0.0) throw Error(ErrorKind::InvalidConfig, "gamma must be 0 for a single design group");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw Error(ErrorKind::InvalidConfig, "loss weights must be nonnegative");
  if (!(eps_scale > 0.0) || !(cap > 0.0)) throw Error(ErrorKind::InvalidConfig, "eps_scale and cap must be positive");
  if (Q == 0 || P != 3) throw Error(ErrorKind::InvalidConfig, "Q must be positive and P must be 3");
}

std::vector<double> Surrogates::strain_grid() const {
  require(*this);
  auto g = grid_of(*nu);
  check_grid(g, grid_of(*sigma));
  return g;
}

neural::NetworkSpec build_design_net(std::size_t N, std::uint64_t seed) {
  if (N == 0) throw Error(ErrorKind::InvalidConfig, "N must be at least 1");
  return {{60, 90, 125, 150, 100, 50, 3 * N}, seed};
}

double softplus(double z) noexcept { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double ratio_deviation(const Eigen::MatrixXd& g) {
  const auto P = g.rows();
  const auto N = g.cols();
  double sum = 0.0;
  std::size_t terms = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = i + 1; j < N; ++j) {
      const Eigen::ArrayXd r = g.col(i).array() / g.col(j).array();
      sum += (r - r.mean()).square().sum();
      terms += static_cast<std::size_t>(P);
    }
  }
  return terms == 0 ? 0.0 : sum / static_cast<double>(terms);
}

double scale_loss(const Eigen::MatrixXd& g, const InverseLossConfig& cfg, Eigen::MatrixXd* grad) {
  if (g.cols() < 2) throw Error(ErrorKind::InvalidConfig, "scale loss needs at least two design groups");
  const double v = ratio_deviation(g);
  const double loss = std::min(cfg.cap, 1.0 / std::max(v, cfg.eps_scale));
  if (grad == nullptr) return loss;
  *grad = Eigen::MatrixXd::Zero(g.rows(), g.cols());
  // Flat where the guard or the cap is active.
  if (v <= cfg.eps_scale || 1.0 / v >= cfg.cap) return loss;
  const double pairs = static_cast<double>(g.cols() * (g.cols() - 1) / 2);
  const double dl_dv = -1.0 / (v * v);
  const double norm = 2.0 / (static_cast<double>(g.rows()) * pairs);
  for (Eigen::Index i = 0; i < g.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < g.cols(); ++j) {
      const Eigen::ArrayXd r = g.col(i).array() / g.col(j).array();
      // The mean's own derivative cancels because deviations sum to zero.
      const Eigen::ArrayXd c = dl_dv * norm * (r - r.mean());
      grad->col(i).array() += c / g.col(j).array();
      grad->col(j).array() -= c * r / g.col(j).array();
    }
  }
  return loss;
}

LossTerms total_loss(const Eigen::MatrixXd& designs, const Eigen::MatrixXd& targets_nu,
                     const Eigen::MatrixXd& targets_sigma, const Surrogates& s, const InverseLossConfig& cfg,
                     Eigen::MatrixXd* d_designs) {
  require(s);
  cfg.validate();
  const auto N = static_cast<Eigen::Index>(cfg.N);
  const auto Q = static_cast<Eigen::Index>(cfg.Q);
  const auto B = designs.cols();
  if (designs.rows() != 3 * N || B == 0) throw Error(ErrorKind::ShapeMismatch, "designs must be 3N x B with B > 0");
  if (targets_nu.rows() != Q || targets_nu.cols() != B || targets_sigma.rows() != Q || targets_sigma.cols() != B) {
    throw Error(ErrorKind::ShapeMismatch, "targets must be Q x B");
  }

  Eigen::MatrixXd x(3, B * N);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index i = 0; i < N; ++i) x.col(b * N + i) = designs.block(3 * i, b, 3, 1);
  }
  if (d_designs) *d_designs = Eigen::MatrixXd::Zero(designs.rows(), B);

  LossTerms out;
  auto curve_term = [&](const ModelCheckpoint& m, const Eigen::MatrixXd& targets, double weight) {
    if (static_cast<Eigen::Index>(m.net.output_dim()) != Q) {
      throw Error(ErrorKind::ShapeMismatch, "surrogate output width differs from Q");
    }
    neural::Mlp::Tape tape;
    Eigen::MatrixXd diff = m.net.forward(m.input.transform(x), tape);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index i = 0; i < N; ++i) diff.col(b * N + i) -= targets.col(b);
    }
    const double count = static_cast<double>(diff.size());
    if (d_designs && weight != 0.0) {
      Eigen::MatrixXd dx = m.net.backward(tape, (2.0 * weight / count) * diff, nullptr);
      dx.array().colwise() /= m.input.std.array();
      for (Eigen::Index b = 0; b < B; ++b) {
        for (Eigen::Index i = 0; i < N; ++i) d_designs->block(3 * i, b, 3, 1) += dx.col(b * N + i);
      }
    }
    return diff.squaredNorm() / count;
  };
  out.nu = curve_term(*s.nu, targets_nu, cfg.alpha);
  out.sigma = curve_term(*s.sigma, targets_sigma, cfg.beta);

  if (N >= 2) {
    Eigen::MatrixXd g;
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::MatrixXd groups = designs.col(b).reshaped(3, N);
      const bool want = d_designs && cfg.gamma != 0.0;
      out.scale += scale_loss(groups, cfg, want ? &g : nullptr);
      if (want) d_designs->col(b) += (cfg.gamma / static_cast<double>(B)) * g.reshaped();
    }
    out.scale /= static_cast<double>(B);
  }
  out.total = cfg.alpha * out.nu + cfg.beta * out.sigma + cfg.gamma * out.scale;
  return out;
}

Eigen::MatrixXd design_outputs(const ModelCheckpoint& design, const Eigen::MatrixXd& z) {
  const Eigen::VectorXd floor = design_floor(design);
  Eigen::MatrixXd d(z.rows(), z.cols());
  if (const auto ceil = design_ceiling(design)) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double span = (*ceil)[r % 3] - floor[r % 3];
      for (Eigen::Index c = 0; c < z.cols(); ++c) d(r, c) = floor[r % 3] + span * sigmoid(z(r, c));
    }
    return d;
  }
  const Eigen::VectorXd scale = design_scale(design);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) d(r, c) = floor[r % 3] + scale[r % 3] * softplus(z(r, c));
  }
  return d;
}

Eigen::MatrixXd design_output_slopes(const ModelCheckpoint& design, const Eigen::MatrixXd& z) {
  Eigen::MatrixXd g(z.rows(), z.cols());
  if (const auto ceil = design_ceiling(design)) {
    const Eigen::VectorXd floor = design_floor(design);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double span = (*ceil)[r % 3] - floor[r % 3];
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double sg = sigmoid(z(r, c));
        g(r, c) = span * sg * (1.0 - sg);
      }
    }
    return g;
  }
  const Eigen::VectorXd scale = design_scale(design);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) g(r, c) = scale[r % 3] * sigmoid(z(r, c));
  }
  return g;
}

Eigen::MatrixXd standardize_targets(const Surrogates& s, const Eigen::MatrixXd& nu, const Eigen::MatrixXd& sigma_kpa) {
  require(s);
  if (nu.cols() != sigma_kpa.cols()) throw Error(ErrorKind::ShapeMismatch, "target batches differ in size");
  Eigen::MatrixXd x(nu.rows() + sigma_kpa.rows(), nu.cols());
  x.topRows(nu.rows()) = s.nu->output.transform(nu);
  x.bottomRows(sigma_kpa.rows()) = s.sigma->output.transform(sigma_kpa);
  return x;
}

Eigen::MatrixXd run_design_net(const ModelCheckpoint& design, const Eigen::MatrixXd& inputs) {
  return design_outputs(design, design.net.forward(inputs));
}

double design_objective(const ModelCheckpoint& design, const Eigen::MatrixXd& inputs, const Surrogates& s,
                        const InverseLossConfig& cfg, Eigen::VectorXd* grad, LossTerms* terms) {
  const auto Q = static_cast<Eigen::Index>(cfg.Q);
  if (inputs.rows() != 2 * Q) throw Error(ErrorKind::ShapeMismatch, "design inputs must have 2Q rows");
  neural::Mlp::Tape tape;
  const Eigen::MatrixXd z = design.net.forward(inputs, tape);
  const Eigen::MatrixXd d = design_outputs(design, z);
  Eigen::MatrixXd dd;
  const LossTerms t = total_loss(d, inputs.topRows(Q), inputs.bottomRows(Q), s, cfg, grad ? &dd : nullptr);
  if (terms) *terms = t;
  if (grad) {
    const Eigen::MatrixXd dz = dd.cwiseProduct(design_output_slopes(design, z));
    *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design.net.n_params()));
    design.net.backward(tape, dz, grad);
  }
  return t.total;
}

ModelCheckpoint train_design_model(const sampling::Dataset& d, const Surrogates& s, const InverseLossConfig& cfg,
                                   const InverseHyper& hyper) {
  require(s);
  cfg.validate();
  if (d.split.train.empty()) throw Error(ErrorKind::InvalidConfig, "dataset has no training split");
  const auto grid = s.strain_grid();
  for (const auto& r : d.records) check_grid(grid, r.curves.strain_grid);
  const std::string hash_nu = surrogate_hash(*s.nu);
  const std::string hash_sigma = surrogate_hash(*s.sigma);

  auto inputs_for = [&](const std::vector<std::size_t>& idx) {
    return standardize_targets(s, neural::curve_matrix(d, idx, neural::Target::Nu),
                               neural::curve_matrix(d, idx, neural::Target::Sigma));
  };
  const Eigen::MatrixXd x_train = inputs_for(d.split.train);
  const Eigen::MatrixXd x_val = d.split.val.empty() ? x_train : inputs_for(d.split.val);
  // Outputs stay inside the sampled box, where the surrogates were trained.
  // Unbounded outputs let a group grow its overall size, which leaves the
  // curves unchanged but inflates the ratio spread at extrapolated inputs.
  const Eigen::Vector3d floor(d.ranges.lambda.min, d.ranges.t.min, d.ranges.A.min);
  const Eigen::Vector3d ceil(d.ranges.lambda.max, d.ranges.t.max, d.ranges.A.max);
  const Eigen::VectorXd mean = neural::design_matrix(d, d.split.train).rowwise().mean();
  const Eigen::ArrayXd frac = (mean - floor).array() / (ceil - floor).array();
  if ((frac <= 0.0).any() || (frac >= 1.0).any())
    throw Error(ErrorKind::InvalidConfig, "training means must lie strictly inside the design ranges");

  ModelCheckpoint c;
  c.kind = "design";
  c.spec = build_design_net(cfg.N, hyper.seed);
  c.net = neural::Mlp::he_initialized(c.spec);
  // Start every output at its variable's training mean.
  auto last = c.net.bias(c.net.n_layers() - 1);
  for (Eigen::Index r = 0; r < last.size(); ++r) last[r] = std::log(frac[r % 3] / (1.0 - frac[r % 3]));
  c.input = neural::Scaler{Eigen::VectorXd::Zero(60), Eigen::VectorXd::Ones(60)};
  c.input.mean << s.nu->output.mean, s.sigma->output.mean;
  c.input.std << s.nu->output.std, s.sigma->output.std;
  c.output = neural::Scaler{};
  c.extra = {{"design_floor", std::vector<double>(floor.data(), floor.data() + 3)},
             {"design_ceiling", std::vector<double>(ceil.data(), ceil.data() + 3)},
             {"strain_grid", grid},
             {"loss",
              {{"alpha", cfg.alpha},
               {"beta", cfg.beta},
               {"gamma", cfg.gamma},
               {"N", cfg.N},
               {"Q", cfg.Q},
               {"P", cfg.P},
               {"eps_scale", cfg.eps_scale},
               {"cap", cfg.cap}}}};

  neural::AdamState state(c.net.n_params());
  Eigen::VectorXd grad;
  Eigen::VectorXd best = c.net.params();
  double best_val = design_objective(c, x_val, s, cfg, nullptr);
  std::size_t best_epoch = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  while (epoch < hyper.max_epochs) {
    ++epoch;
    train_loss = design_objective(c, x_train, s, cfg, &grad);
    if (!std::isfinite(train_loss) || !grad.allFinite()) {
      std::ostringstream os;
      os << "non-finite design loss at epoch " << epoch << " (loss " << train_loss << ", best val " << best_val << ")";
      throw Error(ErrorKind::NonFiniteLoss, os.str());
    }
    neural::adam_step(c.net.params(), grad, state, hyper.adam);
    const double val = design_objective(c, x_val, s, cfg, nullptr);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best = c.net.params();
    } else if (epoch - best_epoch >= hyper.patience) {
      break;
    }
  }
  c.net.params() = best;

  if (surrogate_hash(*s.nu) != hash_nu || surrogate_hash(*s.sigma) != hash_sigma) {
    throw Error(ErrorKind::InvalidConfig, "surrogate checkpoints changed during design training");
  }
  c.meta = {epoch, best_epoch, design_objective(c, x_train, s, cfg, nullptr), best_val, hyper.adam.lr, hyper.seed};
  c.extra["surrogate_hashes"] = {{"nu", hash_nu}, {"sigma", hash_sigma}};
  return c;
}

InverseLossConfig loss_config_from(const ModelCheckpoint& design) {
  try {
    const auto& l = design.extra.at("loss");
    InverseLossConfig cfg;
    cfg.alpha = l.at("alpha");
    cfg.beta = l.at("beta");
    cfg.gamma = l.at("gamma");
    cfg.N = l.at("N");
    cfg.Q = l.at("Q");
    cfg.P = l.at("P");
    cfg.eps_scale = l.at("eps_scale");
    cfg.cap = l.at("cap");
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("design checkpoint lacks loss settings: ") + e.what());
  }
}

void check_grid(const std::vector<double>& expected, const std::vector<double>& actual) {
  bool same = expected.size() == actual.size();
  for (std::size_t i = 0; same && i < expected.size(); ++i) same = std::abs(expected[i] - actual[i]) <= 1e-12;
  if (!same) {
    std::ostringstream os;
    os << "strain grid mismatch: expected " << expected.size() << " points, got " << actual.size();
    throw Error(ErrorKind::GridMismatch, os.str());
  }
}

GroupProposal evaluate_group(const geometry::DesignParams& raw, const geometry::DesignParams& params,
                             const mechanics::PropertyCurves& target, const Surrogates& s) {
  require(s);
  GroupProposal g;
  g.raw = raw;
  g.params = params;
  g.valid = geometry::is_valid(params);
  Eigen::MatrixXd x(3, 1);
  x << params.lambda, params.t, params.A;
  const Eigen::VectorXd nu = neural::predict_physical(*s.nu, x).col(0);
  const Eigen::VectorXd sigma = neural::predict_physical(*s.sigma, x).col(0);
  g.nu.assign(nu.data(), nu.data() + nu.size());
  g.sigma_kpa.assign(sigma.data(), sigma.data() + sigma.size());
  g.mae_nu = neural::mae(target.nu, g.nu);
  g.mae_sigma_kpa = neural::mae(target.sigma_kpa, g.sigma_kpa);
  return g;
}

DesignProposal propose_designs(const ModelCheckpoint& design, const Surrogates& s,
                               const mechanics::PropertyCurves& target, std::optional<double> rescale_to) {
  require(s);
  check_grid(s.strain_grid(), target.strain_grid);
  if (target.nu.size() != target.strain_grid.size() || target.sigma_kpa.size() != target.strain_grid.size()) {
    throw Error(ErrorKind::ShapeMismatch, "target curves must have one value per grid point");
  }
  if (rescale_to && !(*rescale_to > 0.0)) throw Error(ErrorKind::InvalidConfig, "rescale target must be positive");
  const auto q = static_cast<Eigen::Index>(target.nu.size());
  const Eigen::MatrixXd nu = Eigen::Map<const Eigen::VectorXd>(target.nu.data(), q);
  const Eigen::MatrixXd sigma = Eigen::Map<const Eigen::VectorXd>(target.sigma_kpa.data(), q);
  const Eigen::MatrixXd raw = run_design_net(design, standardize_targets(s, nu, sigma));

  DesignProposal p;
  for (Eigen::Index i = 0; i < raw.rows() / 3; ++i) {
    const geometry::DesignParams r{raw(3 * i, 0), raw(3 * i + 1, 0), raw(3 * i + 2, 0)};
    p.groups.push_back(evaluate_group(r, rescale_to ? geometry::scale_to_lambda(r, *rescale_to) : r, target, s));
  }
  return p;
}

json proposal_to_json(const DesignProposal& p, const json& config) {
  json groups = json::array();
  for (const auto& g : p.groups) {
    groups.push_back({{"lambda", g.params.lambda},
                      {"t", g.params.t},
                      {"A", g.params.A},
                      {"valid", g.valid},
                      {"mae_nu", g.mae_nu},
                      {"mae_sigma_kPa", g.mae_sigma_kpa},
                      {"raw", serialization::design_to_json(g.raw)}});
  }
  return {{"groups", groups}, {"config", config}};
}

}  // namespace auxetic::inverse
