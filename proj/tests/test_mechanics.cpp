#include <doctest.h>

#include <Eigen/SparseLU>
#include <cmath>
#include <sstream>

#include "auxetic/geometry.hpp"
#include "auxetic/mechanics.hpp"
#include "auxetic/random.hpp"

using namespace auxetic;
using namespace auxetic::mechanics;
using geometry::Element;
using geometry::Mesh;

namespace {

// Straight beam along x from the origin, n elements of length L/n.
Mesh straight_beam(std::size_t n, double L, double t) {
  Mesh m;
  for (std::size_t i = 0; i <= n; ++i) m.nodes.push_back({L * static_cast<double>(i) / static_cast<double>(n), 0.0});
  for (std::size_t i = 0; i < n; ++i) m.elements.push_back({i, i + 1, t, 1.0});
  m.lambda = L;
  return m;
}

Eigen::VectorXd random_state(std::size_t n_nodes, double scale, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd q(static_cast<Eigen::Index>(3 * n_nodes));
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = scale * rng.uniform(-1.0, 1.0);
  return q;
}

const geometry::ValidDesign& row1() {
  static const auto v = geometry::validate_design({9.0, 1.10, 0.50});
  return v;
}

const TensionResult& row1_result() {
  static const auto r = run_tension_test(row1(), Material::linear(), MechanicsConfig{});
  return r;
}

}  // namespace

TEST_CASE("strain grid") {
  const auto g = default_strain_grid();
  REQUIRE(g.size() == 30);
  CHECK(g.front() == doctest::Approx(0.005));
  CHECK(g.back() == doctest::Approx(0.15));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] - g[i - 1] == doctest::Approx(0.005));
  MechanicsConfig c;
  c.strain_grid.pop_back();
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("material curve validation and evaluation") {
  const Material m({-0.2, 0.0, 0.1, 0.3}, {-100.0, 0.0, 80.0, 120.0});
  CHECK(m.initial_modulus() == doctest::Approx(800.0));
  CHECK(m.stress(0.05) == doctest::Approx(40.0));
  CHECK(m.stress(0.2) == doctest::Approx(100.0));
  CHECK(m.tangent(0.2) == doctest::Approx(200.0));
  CHECK(m.stress(-0.1) == doctest::Approx(-50.0));
  CHECK(m.stress(0.5) == doctest::Approx(160.0));  // linear extrapolation
  // Energy density integrates the stress.
  for (double e : {-0.3, -0.05, 0.07, 0.2, 0.4}) {
    const double h = 1e-6;
    CHECK((m.energy_density(e + h) - m.energy_density(e - h)) / (2 * h) == doctest::Approx(m.stress(e)).epsilon(1e-6));
  }
  CHECK(m.energy_density(0.0) == 0.0);

  CHECK_THROWS_AS(Material({0.0, 0.1}, {0.0, 10.0}), Error);               // no compression
  CHECK_THROWS_AS(Material({-0.1, 0.1, 0.05}, {-1.0, 1.0, 2.0}), Error);  // not increasing
  CHECK_THROWS_AS(Material({-0.1, 0.0, 0.1}, {-1.0, 0.0, -0.5}), Error);  // negative slope
  CHECK_THROWS_AS(Material({-0.1, 0.1}, {-1.0, 2.0}), Error);             // misses the origin
}

TEST_CASE("material csv round trip") {
  const Material m({-0.2, 0.0, 0.1, 0.3}, {-100.0, 0.0, 80.0, 120.0});
  std::stringstream ss;
  write_material_csv(m, ss);
  CHECK(ss.str().rfind("strain,stress_kPa\n", 0) == 0);
  const Material back = read_material_csv(ss);
  CHECK(back.strains() == m.strains());
  CHECK(back.stresses() == m.stresses());
}

TEST_CASE("single bar axial stiffness is EA/L") {
  const Mesh bar = straight_beam(1, 10.0, 0.5);
  const Material mat = Material::linear(2000.0);
  const auto sys = assemble_tangent(bar, mat, Eigen::VectorXd::Zero(6));
  const double EA_L = 2000.0 * 1e-3 * 0.5 * 1.0 / 10.0;
  CHECK(std::abs(sys.stiffness.coeff(0, 0) - EA_L) <= 1e-14 * EA_L);
  CHECK(std::abs(sys.stiffness.coeff(0, 3) + EA_L) <= 1e-14 * EA_L);

  // Pure stretch: force equals EA * strain exactly.
  Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
  q[3] = 0.01;
  const auto f = internal_force(bar, mat, q);
  CHECK(std::abs(f[3] - EA_L * 0.01) <= 1e-15);
  CHECK(std::abs(f[0] + f[3]) <= 1e-18);
}

TEST_CASE("zero state and rigid motions carry no force") {
  const auto mesh = geometry::build_patch(row1(), 1.0 / 8.0, 2, 2);
  const auto mat = Material::linear();
  const auto n = mesh.nodes.size();
  CHECK(internal_force(mesh, mat, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * n))).norm() == 0.0);

  Eigen::VectorXd shift(static_cast<Eigen::Index>(3 * n));
  for (std::size_t i = 0; i < n; ++i) shift.segment(static_cast<Eigen::Index>(3 * i), 3) << 0.7, -1.3, 0.0;
  CHECK(internal_force(mesh, mat, shift).norm() <= 1e-12);

  // Finite rigid rotation about the origin.
  const double th = 0.6;
  Eigen::VectorXd rot(static_cast<Eigen::Index>(3 * n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = mesh.nodes[i];
    rot.segment(static_cast<Eigen::Index>(3 * i), 3) << p.x * (std::cos(th) - 1) - p.y * std::sin(th),
        p.x * std::sin(th) + p.y * (std::cos(th) - 1), th;
  }
  CHECK(internal_force(mesh, mat, rot).norm() <= 1e-10);
  CHECK(strain_energy(mesh, mat, rot) <= 1e-14);
}

TEST_CASE("internal force is the energy gradient and the tangent its Jacobian") {
  const auto mesh = geometry::build_patch(geometry::validate_design({6.0, 0.6, 0.7}), 1.0 / 8.0, 1, 1);
  const Material mat({-0.5, -0.02, 0.0, 0.03, 0.5}, {-300.0, -25.0, 0.0, 30.0, 200.0});
  const auto q = random_state(mesh.nodes.size(), 0.05, 3);
  const auto sys = assemble_tangent(mesh, mat, q);
  const Eigen::MatrixXd K(sys.stiffness);
  const double h = 1e-6;
  double max_f = 0.0, err_f = 0.0, max_k = 0.0, err_k = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    Eigen::VectorXd qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    const double fd = (strain_energy(mesh, mat, qp) - strain_energy(mesh, mat, qm)) / (2 * h);
    err_f = std::max(err_f, std::abs(fd - sys.internal_force[i]));
    max_f = std::max(max_f, std::abs(sys.internal_force[i]));
    const Eigen::VectorXd col = (internal_force(mesh, mat, qp) - internal_force(mesh, mat, qm)) / (2 * h);
    err_k = std::max(err_k, (col - K.col(i)).cwiseAbs().maxCoeff());
    max_k = std::max(max_k, K.col(i).cwiseAbs().maxCoeff());
  }
  CHECK(err_f <= 1e-6 * max_f);
  CHECK(err_k <= 1e-5 * max_k);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cantilever tip deflection matches PL^3/3EI") {
  const double L = 100.0, t = 1.0;
  const Mesh beam = straight_beam(16, L, t);
  const Material mat = Material::linear(1000.0);
  const double E = 1.0;  // N/mm^2
  const double I = 1.0 * t * t * t / 12.0;
  const double P = 1e-7;
  const auto n_dof = static_cast<Eigen::Index>(3 * beam.nodes.size());
  IncrementTarget from{{0, 1, 2}, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(n_dof)};
  IncrementTarget to = from;
  to.loads[n_dof - 2] = P;
  const auto r = solve_increment(beam, mat, from, to, Eigen::VectorXd::Zero(n_dof), MechanicsConfig{});
  const double expected = P * L * L * L / (3.0 * E * I);
  CHECK(std::abs(r.state[n_dof - 2] - expected) <= 0.005 * expected);
}

TEST_CASE("zero prescribed displacement keeps the reference state") {
  const auto mesh = geometry::build_patch(row1(), 1.0 / 8.0, 2, 2);
  const auto bc = tension_bc(mesh);
  const auto n_dof = static_cast<Eigen::Index>(3 * mesh.nodes.size());
  const auto r = solve_increment(mesh, Material::linear(), bc, MechanicsConfig{}, Eigen::VectorXd::Zero(n_dof), 0.0, 0.0);
  CHECK(r.state.norm() == 0.0);
  CHECK(internal_force(mesh, Material::linear(), r.state).norm() == 0.0);
}

TEST_CASE("small increment agrees with a linear solve") {
  const auto mesh = geometry::build_patch(row1());
  const auto mat = Material::linear();
  const auto bc = tension_bc(mesh);
  const double u = 1e-6 * mesh.bounds().width();
  const auto n_dof = static_cast<Eigen::Index>(3 * mesh.nodes.size());

  // Linear reference: K0 with Dirichlet rows replaced by identity.
  const auto target = tension_target(bc, u);
  std::vector<bool> fixed(static_cast<std::size_t>(n_dof), false);
  for (auto d : target.fixed_dofs) fixed[d] = true;
  const auto K0 = assemble_tangent(mesh, mat, Eigen::VectorXd::Zero(n_dof)).stiffness;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n_dof);
  for (std::size_t k = 0; k < target.fixed_dofs.size(); ++k) g[static_cast<Eigen::Index>(target.fixed_dofs[k])] = target.fixed_values[static_cast<Eigen::Index>(k)];
  Eigen::VectorXd rhs = -(K0 * g);
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < K0.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(K0, c); it; ++it) {
      if (!fixed[static_cast<std::size_t>(it.row())] && !fixed[static_cast<std::size_t>(it.col())]) trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Eigen::Index d = 0; d < n_dof; ++d) {
    if (fixed[static_cast<std::size_t>(d)]) {
      trip.emplace_back(d, d, 1.0);
      rhs[d] = 0.0;
    }
  }
  Eigen::SparseMatrix<double> A(n_dof, n_dof);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
  const Eigen::VectorXd u_lin = lu.solve(rhs) + g;
  const Eigen::VectorXd f_lin = K0 * u_lin;
  double r_lin = 0.0;
  for (auto i : bc.right_edge) r_lin += f_lin[static_cast<Eigen::Index>(3 * i)];

  const auto step = solve_increment(mesh, mat, bc, MechanicsConfig{}, Eigen::VectorXd::Zero(n_dof), 0.0, u);
  const Eigen::VectorXd f = internal_force(mesh, mat, step.state);
  double r = 0.0;
  for (auto i : bc.right_edge) r += f[static_cast<Eigen::Index>(3 * i)];
  CHECK(std::abs(r - r_lin) <= 1e-3 * std::abs(r_lin));
  CHECK((step.state - u_lin).norm() <= 1e-3 * u_lin.norm());
}

TEST_CASE("measure_cell on affine states") {
  const auto mesh = geometry::build_patch(row1(), 1.0 / 8.0);
  const auto n = mesh.nodes.size();
  auto affine = [&](double ex, double ey) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * n));
    for (std::size_t i = 0; i < n; ++i) {
      q[static_cast<Eigen::Index>(3 * i)] = ex * mesh.nodes[i].x;
      q[static_cast<Eigen::Index>(3 * i + 1)] = ey * mesh.nodes[i].y;
    }
    return q;
  };
  auto [ex, ey] = measure_cell(mesh, affine(0.1, -0.03));
  CHECK(ex == doctest::Approx(0.1));
  CHECK(-ey / ex == doctest::Approx(0.3));
  std::tie(ex, ey) = measure_cell(mesh, affine(0.1, 0.05));
  CHECK(-ey / ex == doctest::Approx(-0.5));
  std::tie(ex, ey) = measure_cell(mesh, affine(0.0, 0.0));
  CHECK(ex == 0.0);
  CHECK(ey == 0.0);

  Mesh degenerate = mesh;
  degenerate.center_cell_nodes = {0};
  CHECK_THROWS_AS(measure_cell(degenerate, affine(0.1, 0.1)), Error);
}

TEST_CASE("nominal stress") {
  CHECK(nominal_stress(1.0, 10.0, 1.0) == doctest::Approx(20.0));
  CHECK(nominal_stress(0.0, 10.0, 1.0) == 0.0);
  CHECK(nominal_stress(3.0, 20.0, 1.0) == doctest::Approx(nominal_stress(3.0, 10.0, 1.0) / 2.0));
}

TEST_CASE("tension test of the reference design") {
  const auto& r = row1_result();
  const auto& c = r.curves;
  REQUIRE(c.nu.size() == 30);
  REQUIRE(c.sigma_kpa.size() == 30);
  REQUIRE(r.trace.steps.size() == 30);
  CHECK(c.nu[9] < 0.0);  // auxetic at 5 %
  const MechanicsConfig cfg;
  for (std::size_t j = 0; j < 30; ++j) {
    const auto& s = r.trace.steps[j];
    CHECK(s.nu == -s.eps_y / s.eps_x);
    CHECK(s.sigma_kpa == nominal_stress(s.reaction_right, 9.0, 1.0));
    CHECK(std::abs(s.reaction_left + s.reaction_right) <= 1e-8 * std::abs(s.reaction_right));
    CHECK(s.residual_ratio <= cfg.newton_tol);
    CHECK(c.nu[j] == s.nu);
    CHECK(c.strain_grid[j] == s.applied_strain);
  }
}

TEST_CASE("tension state is mirror symmetric") {
  const auto mesh = geometry::build_patch(row1());
  const auto& q = row1_result().trace.final_state;
  const auto b = mesh.bounds();
  // Mirror partner of every node by coordinate lookup.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> order(mesh.nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto c) { return mesh.nodes[a].x < mesh.nodes[c].x; });
  for (std::size_t s = 0; s < order.size(); ++s) {
    const auto& p = mesh.nodes[order[s]];
    const double my = b.y_min + b.y_max - p.y;
    for (std::size_t k = s; k < order.size() && mesh.nodes[order[k]].x - p.x <= 1e-6; ++k) {
      if (std::abs(mesh.nodes[order[k]].y - my) <= 1e-6) pairs.push_back({order[s], order[k]});
    }
    for (std::size_t k = s; k-- > 0 && p.x - mesh.nodes[order[k]].x <= 1e-6;) {
      if (std::abs(mesh.nodes[order[k]].y - my) <= 1e-6) pairs.push_back({order[s], order[k]});
    }
  }
  CHECK(pairs.size() == mesh.nodes.size());
  const double scale = q.cwiseAbs().maxCoeff();
  const auto [i0, j0] = pairs.front();
  const double vsum = q[static_cast<Eigen::Index>(3 * i0 + 1)] + q[static_cast<Eigen::Index>(3 * j0 + 1)];
  double worst = 0.0;
  for (const auto& [i, j] : pairs) {
    const auto a = static_cast<Eigen::Index>(3 * i);
    const auto c = static_cast<Eigen::Index>(3 * j);
    worst = std::max(worst, std::abs(q[a] - q[c]));
    worst = std::max(worst, std::abs(q[a + 1] + q[c + 1] - vsum));
    worst = std::max(worst, std::abs(q[a + 2] + q[c + 2]));
  }
  CHECK(worst <= 1e-8 * scale);
}

TEST_CASE("scale invariance of the curves") {
  const auto big = run_tension_test(geometry::validate_design({18.0, 2.2, 1.0}), Material::linear(), MechanicsConfig{});
  const auto& a = row1_result().curves;
  for (std::size_t j = 0; j < 30; ++j) {
    CHECK(std::abs(big.curves.nu[j] - a.nu[j]) <= 0.01 * std::abs(a.nu[j]));
    CHECK(std::abs(big.curves.sigma_kpa[j] - a.sigma_kpa[j]) <= 0.01 * std::abs(a.sigma_kpa[j]));
  }
}

TEST_CASE("mesh refinement changes nu(15%) by at most 1%") {
  MechanicsConfig fine;
  fine.segment_fraction = 1.0 / 64.0;
  const auto r = run_tension_test(row1(), Material::linear(), fine);
  const double coarse = row1_result().curves.nu.back();
  CHECK(std::abs(r.curves.nu.back() - coarse) <= 0.01 * std::abs(coarse));
}

TEST_CASE("curves csv round trip") {
  const auto& c = row1_result().curves;
  std::stringstream ss;
  write_curves_csv(c, ss);
  CHECK(ss.str().rfind("strain,nu,sigma_kPa\n", 0) == 0);
  const auto back = read_curves_csv(ss);
  CHECK(back.nu == c.nu);
  CHECK(back.sigma_kpa == c.sigma_kpa);
  CHECK(back.strain_grid == c.strain_grid);
}
