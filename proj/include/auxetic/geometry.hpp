#pragma once

// Sinusoidal re-entrant unit cells and their tiling into patch lattices.
//
// Cell layout (local frame, all lengths in mm):
//   row ligaments    y = j*lambda/2 + t/2 + s_j * A sin(2 pi x / lambda),  s_j = +1, -1
//   column ligaments x = i*lambda/2 + c_i * A sin(2 pi (y - t/2) / lambda), c_i = -1, +1
// Rows of opposite sign face each other peak to peak, leaving the gap
// d = lambda/2 - 2A - t between the ligament surfaces. Rows and columns cross
// at the sine zeros, and the tangents of both ligaments at a crossing are the
// same rigid rotation of the coordinate axes.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "auxetic/errors.hpp"

namespace auxetic::geometry {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using Polyline = std::vector<Point2>;

/// The three design variables of a sinusoidal metastructure, in mm.
struct DesignParams {
  double lambda = 0.0;  // wavelength
  double t = 0.0;       // ligament thickness
  double A = 0.0;       // amplitude
};

/// Peak gap d = lambda/2 - 2A - t.
double peak_gap(const DesignParams& p);

/// A design that passed validation. Only validate_design() constructs one.
class ValidDesign {
 public:
  const DesignParams& params() const noexcept { return params_; }
  double lambda() const noexcept { return params_.lambda; }
  double t() const noexcept { return params_.t; }
  double A() const noexcept { return params_.A; }
  /// Peak gap, stored exactly as computed at validation.
  double gap() const noexcept { return gap_; }

 private:
  ValidDesign(const DesignParams& p, double gap) : params_(p), gap_(gap) {}
  friend ValidDesign validate_design(const DesignParams& p);

  DesignParams params_;
  double gap_;
};

/// Throws Error(InvalidGeometry) unless lambda, t, A > 0 and the peak gap is positive.
ValidDesign validate_design(const DesignParams& p);

/// True iff validate_design(p) would succeed.
bool is_valid(const DesignParams& p) noexcept;

/// Multiplies all three variables by target_lambda / lambda.
DesignParams scale_to_lambda(const DesignParams& p, double target_lambda);
ValidDesign rescale_design(const ValidDesign& v, double target_lambda);

struct UnitCell {
  // Ligament surfaces: for each of the four ligaments (row 0, row 1,
  // column 0, column 1) the two copies offset by -t/2 and +t/2 from the axis.
  // curves[0] is the base curve y = A sin(2 pi x / lambda) on [0, lambda].
  std::array<Polyline, 8> curves;
  // Ligament axes in the same order: row 0, row 1, column 0, column 1.
  std::array<Polyline, 4> centerlines;
  double cell_width = 0.0;
  double cell_height = 0.0;
  ValidDesign design;
  std::size_t segments_per_wave = 0;
};

/// Number of straight segments used per full sine so that no chord exceeds
/// max_segment. Always a multiple of four so crossings and quarter points are
/// sample points.
std::size_t segments_per_wave(const DesignParams& p, double max_segment);

UnitCell build_unit_cell(const ValidDesign& v, double max_segment);

struct Element {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double t = 0.0;    // in-plane section depth (ligament thickness), mm
  double t_e = 1.0;  // out-of-plane thickness, mm
};

struct Box {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  bool contains(const Point2& p, double tol) const noexcept;
};

struct Mesh {
  std::vector<Point2> nodes;
  std::vector<Element> elements;
  std::vector<std::size_t> left_edge;
  std::vector<std::size_t> right_edge;
  std::vector<std::size_t> center_cell_nodes;
  Box center_box;
  double lambda = 0.0;
  std::size_t nx = 0;
  std::size_t ny = 0;

  Box bounds() const;
};

inline constexpr double kMergeTolerance = 1e-6;

/// Tiles nx x ny cells. Rows run the full patch width; columns on the patch
/// boundary are omitted and columns stop at the top row, so the lattice is
/// mirror-symmetric about its horizontal midline. The central measurement box
/// is the lambda x lambda window centred on cell (nx/2) horizontally and on the
/// patch midline vertically.
Mesh tile_patch(const UnitCell& cell, std::size_t nx, std::size_t ny, double t_e = 1.0);

/// Builds the standard patch for a design: cell at max_segment = lambda *
/// segment_fraction, tiled nx x ny.
Mesh build_patch(const ValidDesign& v, double segment_fraction = 1.0 / 32.0,
                 std::size_t nx = 5, std::size_t ny = 5, double t_e = 1.0);

void write_nodes_csv(const Mesh& mesh, std::ostream& os);
void write_elements_csv(const Mesh& mesh, std::ostream& os);

}  // namespace auxetic::geometry
