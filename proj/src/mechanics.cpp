#include "auxetic/mechanics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <nlohmann/json.hpp>

#include "auxetic/csv.hpp"

namespace auxetic::mechanics {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

constexpr double kKpaToNmm2 = 1e-3;

struct ElementResponse {
  Vec6 force = Vec6::Zero();
  Mat6 stiffness = Mat6::Zero();
  double energy = 0.0;
};

Vec6 gather(const Eigen::VectorXd& state, const geometry::Element& e) {
  Vec6 q;
  q << state[3 * e.n1], state[3 * e.n1 + 1], state[3 * e.n1 + 2], state[3 * e.n2],
      state[3 * e.n2 + 1], state[3 * e.n2 + 2];
  return q;
}

// 2D corotational Euler-Bernoulli beam. Local deformation modes are the
// engineering axial strain of the chord and the two end rotations relative to
// the rigidly rotated chord.
ElementResponse beam_response(const geometry::Point2& p1, const geometry::Point2& p2,
                              const geometry::Element& e, const Material& material, const Vec6& q,
                              bool with_stiffness) {
  const double dx0 = p2.x - p1.x;
  const double dy0 = p2.y - p1.y;
  const double length0 = std::hypot(dx0, dy0);
  if (!(length0 > 0.0)) {
    throw Error(ErrorKind::SingularElement, "element has zero reference length");
  }
  const double c0 = dx0 / length0;
  const double s0 = dy0 / length0;

  const double dx = dx0 + q[3] - q[0];
  const double dy = dy0 + q[4] - q[1];
  const double length = std::hypot(dx, dy);
  const double c = dx / length;
  const double s = dy / length;
  const double chord_rotation = std::atan2(c0 * s - s0 * c, c0 * c + s0 * s);

  const double strain = (length - length0) / length0;
  const double theta1 = q[2] - chord_rotation;
  const double theta2 = q[5] - chord_rotation;

  const double area = e.t * e.t_e;
  const double inertia = e.t_e * e.t * e.t * e.t / 12.0;
  const double ei_over_l = material.initial_modulus() * kKpaToNmm2 * inertia / length0;

  const double axial = area * material.stress(strain) * kKpaToNmm2;
  const double m1 = ei_over_l * (4.0 * theta1 + 2.0 * theta2);
  const double m2 = ei_over_l * (2.0 * theta1 + 4.0 * theta2);

  Vec6 r;
  r << -c, -s, 0.0, c, s, 0.0;
  Vec6 z;
  z << s, -c, 0.0, -s, c, 0.0;
  Vec6 b1;
  b1 << -s / length, c / length, 1.0, s / length, -c / length, 0.0;
  Vec6 b2;
  b2 << -s / length, c / length, 0.0, s / length, -c / length, 1.0;

  ElementResponse out;
  out.force = axial * r + m1 * b1 + m2 * b2;
  out.energy = length0 * area * material.energy_density(strain) * kKpaToNmm2 +
               0.5 * ei_over_l * (4.0 * theta1 * theta1 + 4.0 * theta1 * theta2 + 4.0 * theta2 * theta2);
  if (with_stiffness) {
    const double ea_over_l = area * material.tangent(strain) * kKpaToNmm2 / length0;
    out.stiffness = ea_over_l * r * r.transpose() +
                    ei_over_l * (4.0 * b1 * b1.transpose() + 2.0 * b1 * b2.transpose() +
                                 2.0 * b2 * b1.transpose() + 4.0 * b2 * b2.transpose()) +
                    (axial / length) * z * z.transpose() +
                    ((m1 + m2) / (length * length)) * (r * z.transpose() + z * r.transpose());
  }
  return out;
}

void check_state(const geometry::Mesh& mesh, const Eigen::VectorXd& state) {
  if (static_cast<std::size_t>(state.size()) != 3 * mesh.nodes.size()) {
    throw Error(ErrorKind::ShapeMismatch, "state must hold 3 DOF per node");
  }
}

struct Partition {
  std::vector<std::ptrdiff_t> free_index;   // dof -> compact free index or -1
  std::vector<std::ptrdiff_t> fixed_index;  // dof -> position in fixed list or -1
  std::size_t n_free = 0;
};

Partition partition(std::size_t n_dof, const std::vector<std::size_t>& fixed) {
  Partition p;
  p.free_index.assign(n_dof, 0);
  p.fixed_index.assign(n_dof, -1);
  for (std::size_t k = 0; k < fixed.size(); ++k) p.fixed_index[fixed[k]] = static_cast<std::ptrdiff_t>(k);
  for (std::size_t d = 0; d < n_dof; ++d) {
    p.free_index[d] = p.fixed_index[d] >= 0 ? -1 : static_cast<std::ptrdiff_t>(p.n_free++);
  }
  return p;
}

class LinearSolver {
 public:
  bool factorize(const Eigen::SparseMatrix<double>& k) {
    use_lu_ = false;
    ldlt_.compute(k);
    if (ldlt_.info() == Eigen::Success) return true;
    use_lu_ = true;
    lu_.analyzePattern(k);
    lu_.factorize(k);
    return lu_.info() == Eigen::Success;
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) {
    return use_lu_ ? Eigen::VectorXd(lu_.solve(rhs)) : Eigen::VectorXd(ldlt_.solve(rhs));
  }

 private:
  bool use_lu_ = false;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

struct Split {
  Eigen::SparseMatrix<double> free_free;
  Eigen::SparseMatrix<double> free_fixed;
};

Split split(const Eigen::SparseMatrix<double>& k, const Partition& p, std::size_t n_fixed) {
  std::vector<Eigen::Triplet<double>> ff, fc;
  ff.reserve(static_cast<std::size_t>(k.nonZeros()));
  for (int col = 0; col < k.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(k, col); it; ++it) {
      const auto row = static_cast<std::size_t>(it.row());
      const auto ri = p.free_index[row];
      if (ri < 0) continue;
      const auto cf = p.free_index[static_cast<std::size_t>(col)];
      if (cf >= 0) {
        ff.emplace_back(static_cast<int>(ri), static_cast<int>(cf), it.value());
      } else {
        fc.emplace_back(static_cast<int>(ri), static_cast<int>(p.fixed_index[static_cast<std::size_t>(col)]),
                        it.value());
      }
    }
  }
  Split s;
  s.free_free.resize(static_cast<int>(p.n_free), static_cast<int>(p.n_free));
  s.free_free.setFromTriplets(ff.begin(), ff.end());
  s.free_fixed.resize(static_cast<int>(p.n_free), static_cast<int>(n_fixed));
  s.free_fixed.setFromTriplets(fc.begin(), fc.end());
  return s;
}

Eigen::VectorXd free_part(const Eigen::VectorXd& v, const Partition& p) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(p.n_free));
  for (std::size_t d = 0; d < p.free_index.size(); ++d) {
    if (p.free_index[d] >= 0) out[p.free_index[d]] = v[static_cast<Eigen::Index>(d)];
  }
  return out;
}

double norm_at(const Eigen::VectorXd& v, const std::vector<std::size_t>& dofs) {
  double sum = 0.0;
  for (std::size_t d : dofs) sum += v[static_cast<Eigen::Index>(d)] * v[static_cast<Eigen::Index>(d)];
  return std::sqrt(sum);
}

struct Divergence {
  double residual;
};

struct NewtonOutcome {
  Eigen::VectorXd state;
  std::size_t iterations;
  double ratio;
};

double residual_ratio(const Eigen::VectorXd& f_int, const Eigen::VectorXd& loads, const Partition& p,
                      const std::vector<std::size_t>& fixed) {
  const Eigen::VectorXd r = free_part(f_int - loads, p);
  const double reference = std::max(norm_at(f_int, fixed), loads.norm());
  const double rn = r.norm();
  if (rn == 0.0) return 0.0;
  if (!(reference > 0.0)) return std::numeric_limits<double>::infinity();
  return rn / reference;
}

// Newton-Raphson for one increment without bisection. Throws Divergence.
NewtonOutcome newton(const geometry::Mesh& mesh, const Material& material, const IncrementTarget& to,
                     const Eigen::VectorXd& start, const MechanicsConfig& config) {
  const std::size_t n_dof = 3 * mesh.nodes.size();
  const Partition p = partition(n_dof, to.fixed_dofs);
  const std::size_t n_fixed = to.fixed_dofs.size();
  const Eigen::VectorXd loads = to.loads.size() == 0 ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_dof))
                                                     : to.loads;
  LinearSolver solver;

  Eigen::VectorXd q = start;
  auto apply_correction = [&](const Eigen::VectorXd& dq_free) {
    for (std::size_t d = 0; d < n_dof; ++d) {
      if (p.free_index[d] >= 0) q[static_cast<Eigen::Index>(d)] += dq_free[p.free_index[d]];
    }
  };

  // Linear predictor from the tangent at the start state.
  {
    TangentSystem sys = assemble_tangent(mesh, material, q);
    Eigen::VectorXd dq_fixed(static_cast<Eigen::Index>(n_fixed));
    for (std::size_t k = 0; k < n_fixed; ++k) {
      const auto d = static_cast<Eigen::Index>(to.fixed_dofs[k]);
      dq_fixed[static_cast<Eigen::Index>(k)] = to.fixed_values[static_cast<Eigen::Index>(k)] - q[d];
      q[d] = to.fixed_values[static_cast<Eigen::Index>(k)];
    }
    const Split s = split(sys.stiffness, p, n_fixed);
    const Eigen::VectorXd rhs = free_part(loads - sys.internal_force, p) - s.free_fixed * dq_fixed;
    if (!solver.factorize(s.free_free)) throw Divergence{std::numeric_limits<double>::infinity()};
    apply_correction(solver.solve(rhs));
  }

  double ratio = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    TangentSystem sys = assemble_tangent(mesh, material, q);
    ratio = residual_ratio(sys.internal_force, loads, p, to.fixed_dofs);
    if (!std::isfinite(ratio) || ratio > 1e12) throw Divergence{ratio};
    if (ratio <= config.newton_tol) {
      // One polishing correction; Newton's quadratic rate usually takes the
      // residual to round-off, which keeps reactions balanced to ~1e-12.
      if (ratio > 1e-13) {
        const Split s = split(sys.stiffness, p, n_fixed);
        if (solver.factorize(s.free_free)) {
          const Eigen::VectorXd backup = q;
          apply_correction(solver.solve(-free_part(sys.internal_force - loads, p)));
          const double polished =
              residual_ratio(internal_force(mesh, material, q), loads, p, to.fixed_dofs);
          if (polished < ratio) {
            ratio = polished;
          } else {
            q = backup;
          }
        }
      }
      return {q, it, ratio};
    }
    const Split s = split(sys.stiffness, p, n_fixed);
    if (!solver.factorize(s.free_free)) throw Divergence{ratio};
    apply_correction(solver.solve(-free_part(sys.internal_force - loads, p)));
    if (!q.allFinite()) throw Divergence{ratio};
  }
  throw Divergence{ratio};
}

IncrementTarget blend(const IncrementTarget& a, const IncrementTarget& b, double w) {
  IncrementTarget out = b;
  out.fixed_values = (1.0 - w) * a.fixed_values + w * b.fixed_values;
  if (a.loads.size() != 0 || b.loads.size() != 0) {
    const Eigen::Index n = std::max(a.loads.size(), b.loads.size());
    const Eigen::VectorXd la = a.loads.size() == 0 ? Eigen::VectorXd::Zero(n) : a.loads;
    const Eigen::VectorXd lb = b.loads.size() == 0 ? Eigen::VectorXd::Zero(n) : b.loads;
    out.loads = (1.0 - w) * la + w * lb;
  }
  return out;
}

struct Accumulated {
  std::size_t iterations = 0;
  std::size_t bisections = 0;
  double ratio = 0.0;
};

Eigen::VectorXd solve_span(const geometry::Mesh& mesh, const Material& material, const IncrementTarget& from,
                           const IncrementTarget& to, const Eigen::VectorXd& start,
                           const MechanicsConfig& config, std::size_t depth, std::size_t step,
                           Accumulated& acc) {
  try {
    NewtonOutcome out = newton(mesh, material, to, start, config);
    acc.iterations += out.iterations;
    acc.ratio = out.ratio;
    return std::move(out.state);
  } catch (const Divergence& d) {
    if (depth >= config.max_bisections) {
      std::ostringstream os;
      os << "Newton iterations diverged at load step " << step << " after " << depth
         << " bisections (residual ratio " << d.residual << ")";
      throw NonConvergence(step, d.residual, os.str());
    }
  }
  ++acc.bisections;
  const IncrementTarget mid = blend(from, to, 0.5);
  const Eigen::VectorXd half = solve_span(mesh, material, from, mid, start, config, depth + 1, step, acc);
  return solve_span(mesh, material, mid, to, half, config, depth + 1, step, acc);
}

}  // namespace

std::vector<double> default_strain_grid() {
  std::vector<double> g(kGridSize);
  for (std::size_t i = 0; i < kGridSize; ++i) g[i] = kGridStep * static_cast<double>(i + 1);
  return g;
}

void MechanicsConfig::validate() const {
  if (strain_grid.size() != kGridSize) {
    throw Error(ErrorKind::InvalidConfig, "strain grid must have 30 points");
  }
  for (std::size_t i = 0; i < kGridSize; ++i) {
    if (std::abs(strain_grid[i] - kGridStep * static_cast<double>(i + 1)) > 1e-12) {
      throw Error(ErrorKind::InvalidConfig, "strain grid must be 0.005, 0.010, ..., 0.150");
    }
  }
  if (!(t_e > 0.0)) throw Error(ErrorKind::InvalidConfig, "t_e must be positive");
  if (!(newton_tol > 0.0)) throw Error(ErrorKind::InvalidConfig, "newton_tol must be positive");
  if (max_iters == 0) throw Error(ErrorKind::InvalidConfig, "max_iters must be positive");
  if (!(segment_fraction > 0.0)) throw Error(ErrorKind::InvalidConfig, "segment_fraction must be positive");
}

Material::Material(std::vector<double> strains, std::vector<double> stresses_kpa)
    : strains_(std::move(strains)), stresses_(std::move(stresses_kpa)) {
  if (strains_.size() != stresses_.size() || strains_.size() < 2) {
    throw Error(ErrorKind::InvalidConfig, "material curve needs at least two (strain, stress) pairs");
  }
  for (std::size_t i = 1; i < strains_.size(); ++i) {
    if (!(strains_[i] > strains_[i - 1])) {
      throw Error(ErrorKind::InvalidConfig, "material strains must be strictly increasing");
    }
    if (!(stresses_[i] > stresses_[i - 1])) {
      throw Error(ErrorKind::InvalidConfig, "material tangent modulus must be positive on every segment");
    }
  }
  if (!(strains_.front() < 0.0 && strains_.back() > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "material curve must cover tension and compression");
  }
  const std::size_t k0 = segment(0.0);
  const double slope0 = (stresses_[k0 + 1] - stresses_[k0]) / (strains_[k0 + 1] - strains_[k0]);
  const double at_zero = stresses_[k0] + slope0 * (0.0 - strains_[k0]);
  if (std::abs(at_zero) > 1e-9 * std::max(1.0, std::abs(stresses_.back()))) {
    throw Error(ErrorKind::InvalidConfig, "material curve must pass through (0, 0)");
  }
  e0_ = slope0;

  // Energy density at each vertex, integrated from the origin along the curve.
  const std::size_t n = strains_.size();
  cumulative_energy_.assign(n, 0.0);
  cumulative_energy_[k0] = 0.5 * stresses_[k0] * strains_[k0];
  cumulative_energy_[k0 + 1] = 0.5 * stresses_[k0 + 1] * strains_[k0 + 1];
  for (std::size_t i = k0 + 2; i < n; ++i) {
    cumulative_energy_[i] = cumulative_energy_[i - 1] +
                            0.5 * (stresses_[i - 1] + stresses_[i]) * (strains_[i] - strains_[i - 1]);
  }
  for (std::size_t i = k0; i-- > 0;) {
    cumulative_energy_[i] = cumulative_energy_[i + 1] +
                            0.5 * (stresses_[i] + stresses_[i + 1]) * (strains_[i] - strains_[i + 1]);
  }
}

Material Material::linear(double e0_kpa) {
  if (!(e0_kpa > 0.0)) throw Error(ErrorKind::InvalidConfig, "E0 must be positive");
  return Material({-1.0, 1.0}, {-e0_kpa, e0_kpa});
}

std::size_t Material::segment(double strain) const {
  const auto it = std::upper_bound(strains_.begin(), strains_.end(), strain);
  std::size_t k = it == strains_.begin() ? 0 : static_cast<std::size_t>(it - strains_.begin()) - 1;
  return std::min(k, strains_.size() - 2);
}

double Material::tangent(double strain) const {
  const std::size_t k = segment(strain);
  return (stresses_[k + 1] - stresses_[k]) / (strains_[k + 1] - strains_[k]);
}

double Material::stress(double strain) const {
  const std::size_t k = segment(strain);
  return stresses_[k] + tangent(strain) * (strain - strains_[k]);
}

double Material::energy_density(double strain) const {
  const std::size_t k = segment(strain);
  // W(e) = W(e_k) + integral from e_k to e of the linear segment.
  return cumulative_energy_[k] + 0.5 * (stresses_[k] + stress(strain)) * (strain - strains_[k]);
}

Material read_material_csv(std::istream& is) {
  const auto table = csv::read(is);
  const std::size_t ce = table.column("strain");
  const std::size_t cs = table.column("stress_kPa");
  std::vector<double> e, s;
  for (const auto& row : table.rows) {
    e.push_back(row[ce]);
    s.push_back(row[cs]);
  }
  return Material(std::move(e), std::move(s));
}

void write_material_csv(const Material& m, std::ostream& os) {
  os << "strain,stress_kPa\n";
  for (std::size_t i = 0; i < m.strains().size(); ++i) {
    os << csv::format(m.strains()[i]) << ',' << csv::format(m.stresses()[i]) << '\n';
  }
}

TangentSystem assemble_tangent(const geometry::Mesh& mesh, const Material& material,
                               const Eigen::VectorXd& state) {
  check_state(mesh, state);
  const auto n_dof = static_cast<Eigen::Index>(3 * mesh.nodes.size());
  TangentSystem sys;
  sys.internal_force = Eigen::VectorXd::Zero(n_dof);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(36 * mesh.elements.size());
  for (const auto& e : mesh.elements) {
    const ElementResponse r =
        beam_response(mesh.nodes[e.n1], mesh.nodes[e.n2], e, material, gather(state, e), true);
    const std::array<Eigen::Index, 6> dofs{static_cast<Eigen::Index>(3 * e.n1),     static_cast<Eigen::Index>(3 * e.n1 + 1),
                                           static_cast<Eigen::Index>(3 * e.n1 + 2), static_cast<Eigen::Index>(3 * e.n2),
                                           static_cast<Eigen::Index>(3 * e.n2 + 1), static_cast<Eigen::Index>(3 * e.n2 + 2)};
    for (int a = 0; a < 6; ++a) {
      sys.internal_force[dofs[a]] += r.force[a];
      for (int b = 0; b < 6; ++b) {
        triplets.emplace_back(static_cast<int>(dofs[a]), static_cast<int>(dofs[b]),
                              0.5 * (r.stiffness(a, b) + r.stiffness(b, a)));
      }
    }
  }
  sys.stiffness.resize(n_dof, n_dof);
  sys.stiffness.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

Eigen::VectorXd internal_force(const geometry::Mesh& mesh, const Material& material,
                               const Eigen::VectorXd& state) {
  check_state(mesh, state);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * mesh.nodes.size()));
  for (const auto& e : mesh.elements) {
    const ElementResponse r =
        beam_response(mesh.nodes[e.n1], mesh.nodes[e.n2], e, material, gather(state, e), false);
    f.segment<3>(static_cast<Eigen::Index>(3 * e.n1)) += r.force.head<3>();
    f.segment<3>(static_cast<Eigen::Index>(3 * e.n2)) += r.force.tail<3>();
  }
  return f;
}

double strain_energy(const geometry::Mesh& mesh, const Material& material, const Eigen::VectorXd& state) {
  check_state(mesh, state);
  double energy = 0.0;
  for (const auto& e : mesh.elements) {
    energy += beam_response(mesh.nodes[e.n1], mesh.nodes[e.n2], e, material, gather(state, e), false).energy;
  }
  return energy;
}

TensionBC tension_bc(const geometry::Mesh& mesh) {
  TensionBC bc{mesh.left_edge, mesh.right_edge, 0};
  for (std::size_t i = 1; i < mesh.nodes.size(); ++i) {
    const auto& a = mesh.nodes[i];
    const auto& b = mesh.nodes[bc.anchor];
    if (a.x < b.x || (a.x == b.x && a.y < b.y)) bc.anchor = i;
  }
  return bc;
}

IncrementTarget tension_target(const TensionBC& bc, double right_u) {
  IncrementTarget target;
  for (std::size_t n : bc.left_edge) target.fixed_dofs.push_back(3 * n);
  for (std::size_t n : bc.right_edge) target.fixed_dofs.push_back(3 * n);
  target.fixed_dofs.push_back(3 * bc.anchor + 1);
  target.fixed_values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(target.fixed_dofs.size()));
  for (std::size_t k = 0; k < bc.right_edge.size(); ++k) {
    target.fixed_values[static_cast<Eigen::Index>(bc.left_edge.size() + k)] = right_u;
  }
  return target;
}

IncrementResult solve_increment(const geometry::Mesh& mesh, const Material& material, const IncrementTarget& from,
                                const IncrementTarget& to, const Eigen::VectorXd& prev_state,
                                const MechanicsConfig& config, std::size_t step_index) {
  check_state(mesh, prev_state);
  if (from.fixed_dofs != to.fixed_dofs || to.fixed_values.size() != static_cast<Eigen::Index>(to.fixed_dofs.size())) {
    throw Error(ErrorKind::ShapeMismatch, "increment endpoints must constrain the same DOFs");
  }
  Accumulated acc;
  IncrementResult out;
  out.state = solve_span(mesh, material, from, to, prev_state, config, 0, step_index, acc);
  out.iterations = acc.iterations;
  out.bisections = acc.bisections;
  out.residual_ratio = acc.ratio;
  return out;
}

IncrementResult solve_increment(const geometry::Mesh& mesh, const Material& material, const TensionBC& bc,
                                const MechanicsConfig& config, const Eigen::VectorXd& prev_state, double prev_u,
                                double target_u, std::size_t step_index) {
  return solve_increment(mesh, material, tension_target(bc, prev_u), tension_target(bc, target_u), prev_state,
                         config, step_index);
}

std::pair<double, double> measure_cell(const geometry::Mesh& mesh, const Eigen::VectorXd& state) {
  check_state(mesh, state);
  if (mesh.center_cell_nodes.empty()) {
    throw Error(ErrorKind::DegenerateCell, "central cell has no nodes");
  }
  geometry::Box ref{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  geometry::Box cur = ref;
  for (std::size_t n : mesh.center_cell_nodes) {
    const auto& p = mesh.nodes[n];
    const double x = p.x + state[static_cast<Eigen::Index>(3 * n)];
    const double y = p.y + state[static_cast<Eigen::Index>(3 * n + 1)];
    ref.x_min = std::min(ref.x_min, p.x);
    ref.x_max = std::max(ref.x_max, p.x);
    ref.y_min = std::min(ref.y_min, p.y);
    ref.y_max = std::max(ref.y_max, p.y);
    cur.x_min = std::min(cur.x_min, x);
    cur.x_max = std::max(cur.x_max, x);
    cur.y_min = std::min(cur.y_min, y);
    cur.y_max = std::max(cur.y_max, y);
  }
  if (!(ref.width() > 0.0) || !(ref.height() > 0.0)) {
    throw Error(ErrorKind::DegenerateCell, "central cell has zero reference width or height");
  }
  return {(cur.width() - ref.width()) / ref.width(), (cur.height() - ref.height()) / ref.height()};
}

double nominal_stress(double reaction_n, double lambda_mm, double t_e_mm) {
  // N/mm^2 = MPa = 1000 kPa
  return reaction_n / (5.0 * lambda_mm * t_e_mm) * 1000.0;
}

TensionResult run_tension_test(const geometry::Mesh& mesh, const Material& material,
                               const MechanicsConfig& config) {
  config.validate();
  const TensionBC bc = tension_bc(mesh);
  const double width = mesh.bounds().width();
  const double lambda = mesh.lambda;

  TensionResult result;
  result.curves.strain_grid = config.strain_grid;
  Eigen::VectorXd state = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * mesh.nodes.size()));
  double prev_u = 0.0;
  for (std::size_t k = 0; k < config.strain_grid.size(); ++k) {
    const double u = config.strain_grid[k] * width;
    IncrementResult inc = solve_increment(mesh, material, bc, config, state, prev_u, u, k);
    state = std::move(inc.state);
    prev_u = u;

    const Eigen::VectorXd f = internal_force(mesh, material, state);
    TraceStep step;
    step.applied_strain = config.strain_grid[k];
    for (std::size_t n : bc.right_edge) step.reaction_right += f[static_cast<Eigen::Index>(3 * n)];
    for (std::size_t n : bc.left_edge) step.reaction_left += f[static_cast<Eigen::Index>(3 * n)];
    std::tie(step.eps_x, step.eps_y) = measure_cell(mesh, state);
    step.nu = -step.eps_y / step.eps_x;
    step.sigma_kpa = nominal_stress(step.reaction_right, lambda, config.t_e);
    step.iterations = inc.iterations;
    step.bisections = inc.bisections;
    step.residual_ratio = inc.residual_ratio;
    result.trace.steps.push_back(step);
    result.curves.nu.push_back(step.nu);
    result.curves.sigma_kpa.push_back(step.sigma_kpa);
  }
  result.trace.final_state = std::move(state);
  return result;
}

TensionResult run_tension_test(const geometry::ValidDesign& v, const Material& material,
                               const MechanicsConfig& config) {
  config.validate();
  const geometry::Mesh mesh = geometry::build_patch(v, config.segment_fraction, config.nx, config.ny, config.t_e);
  return run_tension_test(mesh, material, config);
}

void write_curves_csv(const PropertyCurves& c, std::ostream& os) {
  os << "strain,nu,sigma_kPa\n";
  for (std::size_t i = 0; i < c.strain_grid.size(); ++i) {
    os << csv::format(c.strain_grid[i]) << ',' << csv::format(c.nu[i]) << ',' << csv::format(c.sigma_kpa[i])
       << '\n';
  }
}

PropertyCurves read_curves_csv(std::istream& is) {
  const auto table = csv::read(is);
  const std::size_t ce = table.column("strain");
  const std::size_t cn = table.column("nu");
  const std::size_t cs = table.column("sigma_kPa");
  PropertyCurves c;
  for (const auto& row : table.rows) {
    c.strain_grid.push_back(row[ce]);
    c.nu.push_back(row[cn]);
    c.sigma_kpa.push_back(row[cs]);
  }
  return c;
}

std::string trace_to_json(const SolveTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"applied_strain", s.applied_strain},
                     {"reaction_right_N", s.reaction_right},
                     {"reaction_left_N", s.reaction_left},
                     {"eps_x", s.eps_x},
                     {"eps_y", s.eps_y},
                     {"nu", s.nu},
                     {"sigma_kPa", s.sigma_kpa},
                     {"iterations", s.iterations},
                     {"bisections", s.bisections},
                     {"residual_ratio", s.residual_ratio}});
  }
  return nlohmann::json{{"steps", steps}}.dump(2);
}

}  // namespace auxetic::mechanics
