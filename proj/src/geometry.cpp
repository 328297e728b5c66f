#include "auxetic/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <utility>

namespace auxetic::geometry {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

class NodeMerger {
 public:
  explicit NodeMerger(double tol) : tol_(tol) {}

  std::size_t insert(const Point2& p) {
    const auto kx = static_cast<long long>(std::floor(p.x / tol_));
    const auto ky = static_cast<long long>(std::floor(p.y / tol_));
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = buckets_.find({kx + dx, ky + dy});
        if (it == buckets_.end()) continue;
        for (std::size_t id : it->second) {
          if (std::hypot(nodes_[id].x - p.x, nodes_[id].y - p.y) <= tol_) return id;
        }
      }
    }
    const std::size_t id = nodes_.size();
    nodes_.push_back(p);
    buckets_[{kx, ky}].push_back(id);
    return id;
  }

  std::vector<Point2> release() { return std::move(nodes_); }

 private:
  double tol_;
  std::vector<Point2> nodes_;
  std::map<std::pair<long long, long long>, std::vector<std::size_t>> buckets_;
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

bool is_connected(std::size_t n_nodes, const std::vector<Element>& elements) {
  if (n_nodes == 0) return false;
  std::vector<std::size_t> parent(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) parent[i] = i;
  for (const auto& e : elements) {
    parent[find_root(parent, e.n1)] = find_root(parent, e.n2);
  }
  const std::size_t root = find_root(parent, 0);
  for (std::size_t i = 1; i < n_nodes; ++i) {
    if (find_root(parent, i) != root) return false;
  }
  return true;
}

}  // namespace

double peak_gap(const DesignParams& p) { return p.lambda / 2.0 - 2.0 * p.A - p.t; }

bool is_valid(const DesignParams& p) noexcept {
  return p.lambda > 0.0 && p.t > 0.0 && p.A > 0.0 && peak_gap(p) > 0.0;
}

ValidDesign validate_design(const DesignParams& p) {
  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << "invalid design (lambda=" << p.lambda << ", t=" << p.t << ", A=" << p.A << "): " << why;
    throw Error(ErrorKind::InvalidGeometry, os.str());
  };
  if (!(p.lambda > 0.0)) fail("lambda must be positive");
  if (!(p.t > 0.0)) fail("t must be positive");
  if (!(p.A > 0.0)) fail("A must be positive");
  const double d = peak_gap(p);
  if (!(d > 0.0)) fail("peak gap lambda/2 - 2A - t must be positive, got " + std::to_string(d));
  return ValidDesign(p, d);
}

DesignParams scale_to_lambda(const DesignParams& p, double target_lambda) {
  if (!(target_lambda > 0.0) || !(p.lambda > 0.0)) {
    throw Error(ErrorKind::InvalidGeometry, "rescale needs positive lambda values");
  }
  const double f = target_lambda / p.lambda;
  return {target_lambda, p.t * f, p.A * f};
}

ValidDesign rescale_design(const ValidDesign& v, double target_lambda) {
  return validate_design(scale_to_lambda(v.params(), target_lambda));
}

bool Box::contains(const Point2& p, double tol) const noexcept {
  return p.x >= x_min - tol && p.x <= x_max + tol && p.y >= y_min - tol && p.y <= y_max + tol;
}

Box Mesh::bounds() const {
  Box b{nodes.front().x, nodes.front().x, nodes.front().y, nodes.front().y};
  for (const auto& p : nodes) {
    b.x_min = std::min(b.x_min, p.x);
    b.x_max = std::max(b.x_max, p.x);
    b.y_min = std::min(b.y_min, p.y);
    b.y_max = std::max(b.y_max, p.y);
  }
  return b;
}

std::size_t segments_per_wave(const DesignParams& p, double max_segment) {
  if (!(max_segment > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "max_segment must be positive");
  }
  // Uniform abscissa spacing h bounds every chord by h * sqrt(1 + (2 pi A / lambda)^2).
  const double slope = kTwoPi * p.A / p.lambda;
  const double n_min = p.lambda * std::sqrt(1.0 + slope * slope) / max_segment;
  auto n = static_cast<std::size_t>(std::ceil(n_min - 1e-12));
  n = std::max<std::size_t>(n, 4);
  return (n + 3) / 4 * 4;
}

UnitCell build_unit_cell(const ValidDesign& v, double max_segment) {
  const double lambda = v.lambda();
  const double t = v.t();
  const double A = v.A();
  const std::size_t n = segments_per_wave(v.params(), max_segment);

  // Unit sine sampled once; every curve is a translated or rotated copy.
  std::vector<double> s(n + 1), sine(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    s[k] = lambda * static_cast<double>(k) / static_cast<double>(n);
    sine[k] = A * std::sin(kTwoPi * static_cast<double>(k) / static_cast<double>(n));
  }

  auto row = [&](double base, double sign) {
    Polyline line(n + 1);
    for (std::size_t k = 0; k <= n; ++k) line[k] = {s[k], base + sign * sine[k]};
    return line;
  };
  auto column = [&](double base, double sign) {
    Polyline line(n + 1);
    for (std::size_t k = 0; k <= n; ++k) line[k] = {base + sign * sine[k], t / 2.0 + s[k]};
    return line;
  };

  UnitCell cell{{}, {}, lambda, lambda, v, n};
  cell.centerlines[0] = row(t / 2.0, 1.0);
  cell.centerlines[1] = row(lambda / 2.0 + t / 2.0, -1.0);
  cell.centerlines[2] = column(0.0, -1.0);
  cell.centerlines[3] = column(lambda / 2.0, 1.0);

  cell.curves[0] = row(0.0, 1.0);
  cell.curves[1] = row(t, 1.0);
  cell.curves[2] = row(lambda / 2.0, -1.0);
  cell.curves[3] = row(lambda / 2.0 + t, -1.0);
  cell.curves[4] = column(-t / 2.0, -1.0);
  cell.curves[5] = column(t / 2.0, -1.0);
  cell.curves[6] = column(lambda / 2.0 - t / 2.0, 1.0);
  cell.curves[7] = column(lambda / 2.0 + t / 2.0, 1.0);
  return cell;
}

Mesh tile_patch(const UnitCell& cell, std::size_t nx, std::size_t ny, double t_e) {
  if (nx == 0 || ny == 0) {
    throw Error(ErrorKind::InvalidConfig, "tile_patch needs nx >= 1 and ny >= 1");
  }
  const double lambda = cell.cell_width;
  const double t = cell.design.t();
  const std::size_t n = cell.segments_per_wave;

  NodeMerger merger(kMergeTolerance);
  std::vector<Element> elements;
  auto add_polyline = [&](const Polyline& line, std::size_t first, std::size_t last, double ox,
                          double oy) {
    std::size_t prev = merger.insert({line[first].x + ox, line[first].y + oy});
    for (std::size_t k = first + 1; k <= last; ++k) {
      const std::size_t cur = merger.insert({line[k].x + ox, line[k].y + oy});
      if (cur != prev) elements.push_back({prev, cur, t, t_e});
      prev = cur;
    }
  };

  for (std::size_t cy = 0; cy < ny; ++cy) {
    const double oy = lambda * static_cast<double>(cy);
    const bool top = cy + 1 == ny;
    for (std::size_t cx = 0; cx < nx; ++cx) {
      const double ox = lambda * static_cast<double>(cx);
      add_polyline(cell.centerlines[0], 0, n, ox, oy);
      add_polyline(cell.centerlines[1], 0, n, ox, oy);
      // Columns end at the top row of the patch.
      const std::size_t col_last = top ? n / 2 : n;
      if (cx > 0) add_polyline(cell.centerlines[2], 0, col_last, ox, oy);
      add_polyline(cell.centerlines[3], 0, col_last, ox, oy);
    }
  }

  Mesh mesh;
  mesh.nodes = merger.release();
  mesh.elements = std::move(elements);
  mesh.lambda = lambda;
  mesh.nx = nx;
  mesh.ny = ny;

  if (!is_connected(mesh.nodes.size(), mesh.elements)) {
    throw Error(ErrorKind::DisconnectedMesh, "patch element graph is not connected");
  }

  const Box b = mesh.bounds();
  const double edge_tol = 1e-9 * lambda;
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    if (mesh.nodes[i].x <= b.x_min + edge_tol) mesh.left_edge.push_back(i);
    if (mesh.nodes[i].x >= b.x_max - edge_tol) mesh.right_edge.push_back(i);
  }

  const double cx0 = lambda * static_cast<double>(nx / 2);
  const double y_mid = t / 2.0 + lambda * (2.0 * static_cast<double>(ny) - 1.0) / 4.0;
  mesh.center_box = {cx0, cx0 + lambda, y_mid - lambda / 2.0, y_mid + lambda / 2.0};
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    if (mesh.center_box.contains(mesh.nodes[i], edge_tol)) mesh.center_cell_nodes.push_back(i);
  }
  return mesh;
}

Mesh build_patch(const ValidDesign& v, double segment_fraction, std::size_t nx, std::size_t ny,
                 double t_e) {
  return tile_patch(build_unit_cell(v, v.lambda() * segment_fraction), nx, ny, t_e);
}

void write_nodes_csv(const Mesh& mesh, std::ostream& os) {
  os << "id,x_mm,y_mm\n";
  os.precision(17);
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    os << i << ',' << mesh.nodes[i].x << ',' << mesh.nodes[i].y << '\n';
  }
}

void write_elements_csv(const Mesh& mesh, std::ostream& os) {
  os << "id,n1,n2,t_mm,t_e_mm\n";
  os.precision(17);
  for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
    const auto& e = mesh.elements[i];
    os << i << ',' << e.n1 << ',' << e.n2 << ',' << e.t << ',' << e.t_e << '\n';
  }
}

}  // namespace auxetic::geometry
