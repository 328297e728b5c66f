#pragma once

// Displacement-controlled tension test of a patch lattice modelled as a 2D
// frame of corotational Euler-Bernoulli beams (u, v, theta per node).
//
// Units: lengths mm, forces N, material stresses kPa (converted to N/mm^2
// internally), reported nominal stress kPa.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "auxetic/geometry.hpp"

namespace auxetic::mechanics {

inline constexpr std::size_t kGridSize = 30;
inline constexpr double kGridStep = 0.005;

/// 0.005, 0.010, ..., 0.150
std::vector<double> default_strain_grid();

struct MechanicsConfig {
  double t_e = 1.0;
  std::vector<double> strain_grid = default_strain_grid();
  double newton_tol = 1e-6;
  std::size_t max_iters = 50;
  std::size_t max_bisections = 4;
  double segment_fraction = 1.0 / 32.0;  // max segment length / lambda
  std::size_t nx = 5;
  std::size_t ny = 5;

  /// Throws InvalidConfig unless the grid is the 30-point 0.5% grid ending at 15%.
  void validate() const;
};

/// Piecewise-linear uniaxial stress-strain law (stress in kPa), extrapolated
/// linearly past both ends. Axial forces follow the curve; bending uses E0.
class Material {
 public:
  Material(std::vector<double> strains, std::vector<double> stresses_kpa);

  /// Single-segment linear law through the origin, E0 in kPa.
  static Material linear(double e0_kpa = 1000.0);

  double stress(double strain) const;          // kPa
  double tangent(double strain) const;         // kPa
  double energy_density(double strain) const;  // kPa (integral of stress)
  double initial_modulus() const noexcept { return e0_; }

  const std::vector<double>& strains() const noexcept { return strains_; }
  const std::vector<double>& stresses() const noexcept { return stresses_; }

 private:
  std::size_t segment(double strain) const;

  std::vector<double> strains_;
  std::vector<double> stresses_;
  std::vector<double> cumulative_energy_;  // energy at each vertex
  double e0_ = 0.0;
};

/// Reads "strain,stress_kPa" rows (header required).
Material read_material_csv(std::istream& is);
void write_material_csv(const Material& m, std::ostream& os);

struct TangentSystem {
  Eigen::SparseMatrix<double> stiffness;  // symmetrized
  Eigen::VectorXd internal_force;
};

/// Tangent stiffness and internal force for nodal state (u, v, theta per node).
TangentSystem assemble_tangent(const geometry::Mesh& mesh, const Material& material,
                               const Eigen::VectorXd& state);

/// Internal force only (cheaper; used by residual checks and tests).
Eigen::VectorXd internal_force(const geometry::Mesh& mesh, const Material& material,
                               const Eigen::VectorXd& state);

/// Total strain energy of the frame (N mm).
double strain_energy(const geometry::Mesh& mesh, const Material& material,
                     const Eigen::VectorXd& state);

/// Tension boundary conditions: u = 0 on the left edge, u = applied on the
/// right edge, v = 0 at the anchor node (minimum x, then minimum y).
struct TensionBC {
  std::vector<std::size_t> left_edge;
  std::vector<std::size_t> right_edge;
  std::size_t anchor = 0;
};

TensionBC tension_bc(const geometry::Mesh& mesh);

/// Constrained DOFs with their values plus external nodal loads (empty = none)
/// at one end of a load increment.
struct IncrementTarget {
  std::vector<std::size_t> fixed_dofs;
  Eigen::VectorXd fixed_values;
  Eigen::VectorXd loads;
};

IncrementTarget tension_target(const TensionBC& bc, double right_u);

struct IncrementResult {
  Eigen::VectorXd state;
  std::size_t iterations = 0;
  std::size_t bisections = 0;
  double residual_ratio = 0.0;
};

/// Advances from a converged state at right-edge displacement prev_u to
/// target_u with Newton-Raphson, bisecting the increment on divergence.
IncrementResult solve_increment(const geometry::Mesh& mesh, const Material& material,
                                const TensionBC& bc, const MechanicsConfig& config,
                                const Eigen::VectorXd& prev_state, double prev_u, double target_u,
                                std::size_t step_index = 0);

/// General form: both ends must constrain the same DOFs; values and loads are
/// interpolated linearly when the increment is bisected.
IncrementResult solve_increment(const geometry::Mesh& mesh, const Material& material,
                                const IncrementTarget& from, const IncrementTarget& to,
                                const Eigen::VectorXd& prev_state, const MechanicsConfig& config,
                                std::size_t step_index = 0);

/// Central-cell nominal strains from the deformed bounding box of
/// mesh.center_cell_nodes.
std::pair<double, double> measure_cell(const geometry::Mesh& mesh, const Eigen::VectorXd& state);

/// sigma = F_R / (5 lambda t_e), returned in kPa (F_R in N, lengths in mm).
double nominal_stress(double reaction_n, double lambda_mm, double t_e_mm);

struct PropertyCurves {
  std::vector<double> strain_grid;
  std::vector<double> nu;
  std::vector<double> sigma_kpa;
};

struct TraceStep {
  double applied_strain = 0.0;
  double reaction_right = 0.0;  // N, sum of x-reactions on the loaded edge
  double reaction_left = 0.0;   // N
  double eps_x = 0.0;
  double eps_y = 0.0;
  double nu = 0.0;
  double sigma_kpa = 0.0;
  std::size_t iterations = 0;
  std::size_t bisections = 0;
  double residual_ratio = 0.0;
};

struct SolveTrace {
  std::vector<TraceStep> steps;
  Eigen::VectorXd final_state;
};

struct TensionResult {
  PropertyCurves curves;
  SolveTrace trace;
};

TensionResult run_tension_test(const geometry::ValidDesign& v, const Material& material,
                               const MechanicsConfig& config);

/// Same protocol on a prebuilt mesh (lambda taken from mesh.lambda).
TensionResult run_tension_test(const geometry::Mesh& mesh, const Material& material,
                               const MechanicsConfig& config);

/// "strain,nu,sigma_kPa" header followed by one row per grid point.
void write_curves_csv(const PropertyCurves& c, std::ostream& os);
PropertyCurves read_curves_csv(std::istream& is);

std::string trace_to_json(const SolveTrace& trace);

}  // namespace auxetic::mechanics
