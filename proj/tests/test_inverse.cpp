#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "auxetic/errors.hpp"
#include "auxetic/inverse_design.hpp"
#include "fakes.hpp"

using namespace auxetic;
using namespace auxetic::inverse;
using neural::ModelCheckpoint;

namespace {

using fakes::randn;
using Fixture = fakes::Pair;

ModelCheckpoint fake_design(const Surrogates& s, std::size_t N, std::uint64_t seed) {
  ModelCheckpoint c;
  c.kind = "design";
  c.spec = build_design_net(N, seed);
  c.net = neural::Mlp::he_initialized(c.spec);
  c.input.mean.resize(60);
  c.input.std.resize(60);
  c.input.mean << s.nu->output.mean, s.sigma->output.mean;
  c.input.std << s.nu->output.std, s.sigma->output.std;
  c.extra["design_scale"] = std::vector<double>{13.0, 1.3, 1.2};
  c.extra["strain_grid"] = mechanics::default_strain_grid();
  return c;
}

}  // namespace

TEST_CASE("design network widths") {
  const auto one = build_design_net(1);
  CHECK(one.layer_sizes.front() == 60);
  CHECK(one.layer_sizes.back() == 3);
  CHECK(build_design_net(3).layer_sizes.back() == 9);
  CHECK(build_design_net(3).layer_sizes == std::vector<std::size_t>{60, 90, 125, 150, 100, 50, 9});
  CHECK_THROWS_AS(build_design_net(0), Error);
}

TEST_CASE("loss config validation") {
  InverseLossConfig c;
  CHECK_NOTHROW(c.validate());
  c.N = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.gamma = 0.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c.N = 3;
  CHECK_NOTHROW(c.validate());
  c.alpha = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("softplus and sigmoid are stable") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == doctest::Approx(800.0));
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  for (double z : {-3.0, -0.2, 0.0, 1.5, 7.0}) {
    const double h = 1e-6;
    CHECK(sigmoid(z) == doctest::Approx((softplus(z + h) - softplus(z - h)) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("scale loss on proportional groups hits the cap") {
  Eigen::MatrixXd g(3, 2);
  g << 1, 2, 1, 2, 1, 2;
  InverseLossConfig cfg;
  CHECK(scale_loss(g, cfg) == cfg.cap);
  Eigen::MatrixXd grad;
  scale_loss(g, cfg, &grad);
  CHECK(grad.norm() == 0.0);
}

TEST_CASE("scale loss hand example") {
  Eigen::MatrixXd g(3, 2);
  g << 1, 1, 1, 2, 1, 3;
  // Ratios 1, 1/2, 1/3 around their mean.
  const double m = (1.0 + 0.5 + 1.0 / 3.0) / 3.0;
  const double dev = (std::pow(1 - m, 2) + std::pow(0.5 - m, 2) + std::pow(1.0 / 3.0 - m, 2)) / 3.0;
  CHECK(m == doctest::Approx(0.6111).epsilon(1e-4));
  CHECK(ratio_deviation(g) == doctest::Approx(dev).epsilon(1e-14));
  CHECK(scale_loss(g, {}) == doctest::Approx(12.462).epsilon(1e-4));
  CHECK(scale_loss(g * 7.5, {}) == doctest::Approx(scale_loss(g, {})).epsilon(1e-12));
}

TEST_CASE("scale loss needs two groups") {
  CHECK_THROWS_AS(scale_loss(Eigen::MatrixXd::Ones(3, 1), {}), Error);
}

TEST_CASE("scale loss gradient matches finite differences") {
  Eigen::MatrixXd g(3, 3);
  g << 10, 14, 8, 1.2, 0.8, 1.9, 0.7, 1.5, 1.1;
  Eigen::MatrixXd grad;
  scale_loss(g, {}, &grad);
  const double h = 1e-7;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    Eigen::MatrixXd gp = g, gm = g;
    gp(k) += h;
    gm(k) -= h;
    const double fd = (scale_loss(gp, {}) - scale_loss(gm, {})) / (2 * h);
    CHECK(grad(k) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("matching targets give zero curve loss") {
  Fixture f;
  Eigen::MatrixXd designs(3, 2);
  designs << 12, 15, 1.0, 1.6, 0.9, 1.4;
  const Eigen::MatrixXd tn = f.nu.net.forward(f.nu.input.transform(designs));
  const Eigen::MatrixXd ts = f.sigma.net.forward(f.sigma.input.transform(designs));
  const auto t = total_loss(designs, tn, ts, f.s, {});
  CHECK(t.nu == doctest::Approx(0.0));
  CHECK(t.sigma == doctest::Approx(0.0));
  CHECK(t.total == doctest::Approx(0.0));
}

TEST_CASE("total loss decomposes into weighted terms") {
  Fixture f;
  InverseLossConfig cfg;
  cfg.N = 3;
  cfg.alpha = 0.7;
  cfg.beta = 1.3;
  const Eigen::MatrixXd designs = (randn(9, 4, 3).array().abs() + 0.5).matrix();
  const Eigen::MatrixXd tn = randn(30, 4, 4), ts = randn(30, 4, 5);
  const auto t0 = total_loss(designs, tn, ts, f.s, cfg);
  CHECK(t0.total == doctest::Approx(0.7 * t0.nu + 1.3 * t0.sigma));
  CHECK(t0.scale > 0.0);
  cfg.gamma = 0.5;
  const auto t1 = total_loss(designs, tn, ts, f.s, cfg);
  CHECK(t1.total == doctest::Approx(0.7 * t1.nu + 1.3 * t1.sigma + 0.5 * t1.scale));
  CHECK(t1.nu == t0.nu);
}

TEST_CASE("design gradient matches finite differences") {
  Fixture f;
  for (std::size_t N : {1u, 3u}) {
    InverseLossConfig cfg;
    cfg.N = N;
    cfg.gamma = N > 1 ? 0.5 : 0.0;
    const auto design = fake_design(f.s, N, 8);
    const auto inputs = randn(60, 3, 9);
    Eigen::VectorXd grad;
    design_objective(design, inputs, f.s, cfg, &grad);
    auto probe = design;
    const double h = 1e-6;
    double worst = 0.0, scale = 0.0;
    for (Eigen::Index k = 0; k < grad.size(); k += 97) {
      const double p0 = probe.net.params()[k];
      probe.net.params()[k] = p0 + h;
      const double lp = design_objective(probe, inputs, f.s, cfg, nullptr);
      probe.net.params()[k] = p0 - h;
      const double lm = design_objective(probe, inputs, f.s, cfg, nullptr);
      probe.net.params()[k] = p0;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[k]));
      scale = std::max(scale, std::abs(fd));
    }
    CHECK(worst <= 1e-4 * std::max(scale, 1e-8));
  }
}

TEST_CASE("design outputs are positive and start at the scale") {
  Fixture f;
  auto design = fake_design(f.s, 2, 1);
  design.net.params().setZero();
  design.net.bias(design.net.n_layers() - 1).setConstant(std::log(std::expm1(1.0)));
  const auto d = run_design_net(design, randn(60, 2, 1));
  CHECK(d(0, 0) == doctest::Approx(13.0));
  CHECK(d(4, 1) == doctest::Approx(1.3));
  const auto far = design_outputs(design, Eigen::MatrixXd::Constant(6, 1, -40.0));
  CHECK((far.array() > 0.0).all());
}

TEST_CASE("grid mismatch is rejected") {
  auto g = mechanics::default_strain_grid();
  CHECK_NOTHROW(check_grid(g, g));
  auto h = g;
  h[3] += 1e-9;
  try {
    check_grid(g, h);
    FAIL("expected GridMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::GridMismatch);
  }
  Fixture f;
  const auto design = fake_design(f.s, 1, 2);
  mechanics::PropertyCurves target;
  target.strain_grid = std::vector<double>(29, 0.01);
  target.nu.assign(29, -0.2);
  target.sigma_kpa.assign(29, 1.0);
  CHECK_THROWS_AS(propose_designs(design, f.s, target), Error);
}

TEST_CASE("proposals rescale with the wavelength") {
  Fixture f;
  const auto design = fake_design(f.s, 3, 5);
  mechanics::PropertyCurves target;
  target.strain_grid = mechanics::default_strain_grid();
  target.nu.assign(30, -0.3);
  target.sigma_kpa.assign(30, -0.2);
  const auto p = propose_designs(design, f.s, target, 20.0);
  REQUIRE(p.groups.size() == 3);
  for (const auto& g : p.groups) {
    CHECK(g.params.lambda == doctest::Approx(20.0));
    CHECK(g.params.t / g.params.lambda == doctest::Approx(g.raw.t / g.raw.lambda));
    CHECK(g.params.A / g.params.lambda == doctest::Approx(g.raw.A / g.raw.lambda));
    CHECK(g.nu.size() == 30);
    CHECK(g.mae_nu >= 0.0);
  }
  const auto j = proposal_to_json(p, nlohmann::json::object());
  CHECK(j.at("groups").size() == 3);
}

TEST_CASE("design outputs never drop below the floor") {
  Fixture f;
  auto design = fake_design(f.s, 1, 3);
  design.extra["design_floor"] = std::vector<double>{2.0, 0.2, 0.2};
  const auto d = design_outputs(design, Eigen::MatrixXd::Constant(3, 1, -60.0));
  CHECK(d(0, 0) == doctest::Approx(2.0));
  CHECK(d(1, 0) == doctest::Approx(0.2));
  CHECK(d(2, 0) == doctest::Approx(0.2));
}

TEST_CASE("bounded design outputs stay inside the box") {
  Fixture f;
  auto design = fake_design(f.s, 2, 4);
  design.extra["design_floor"] = std::vector<double>{2.0, 0.2, 0.2};
  design.extra["design_ceiling"] = std::vector<double>{21.0, 2.1, 2.1};
  Eigen::MatrixXd z(6, 3);
  z.col(0).setConstant(-60.0);
  z.col(1).setConstant(60.0);
  z.col(2).setZero();
  const auto d = design_outputs(design, z);
  CHECK(d(0, 0) == doctest::Approx(2.0));
  CHECK(d(5, 0) == doctest::Approx(0.2));
  CHECK(d(3, 1) == doctest::Approx(21.0));
  CHECK(d(4, 1) == doctest::Approx(2.1));
  CHECK(d(0, 2) == doctest::Approx(11.5));
  CHECK(d(1, 2) == doctest::Approx(1.15));
}

TEST_CASE("bounded map gradient matches finite differences") {
  Fixture f;
  InverseLossConfig cfg;
  cfg.N = 3;
  cfg.gamma = 0.5;
  auto design = fake_design(f.s, 3, 11);
  design.extra["design_floor"] = std::vector<double>{2.0, 0.2, 0.2};
  design.extra["design_ceiling"] = std::vector<double>{21.0, 2.1, 2.1};
  const auto inputs = randn(60, 3, 12);
  Eigen::VectorXd grad;
  design_objective(design, inputs, f.s, cfg, &grad);
  auto probe = design;
  const double h = 1e-6;
  double worst = 0.0, scale = 0.0;
  for (Eigen::Index k = 0; k < grad.size(); k += 89) {
    const double p0 = probe.net.params()[k];
    probe.net.params()[k] = p0 + h;
    const double lp = design_objective(probe, inputs, f.s, cfg, nullptr);
    probe.net.params()[k] = p0 - h;
    const double lm = design_objective(probe, inputs, f.s, cfg, nullptr);
    probe.net.params()[k] = p0;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[k]));
    scale = std::max(scale, std::abs(fd));
  }
  CHECK(worst <= 1e-4 * std::max(scale, 1e-8));
}
