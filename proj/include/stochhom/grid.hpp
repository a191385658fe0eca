#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "stochhom/errors.hpp"

namespace stochhom {

// Dyadic Cartesian mesh hierarchy on the unit box [0,1]^d with d in {1,2}.
// Three nested levels: coarse cells of width H = 2^-log_coarse, oscillation
// cells of width eps = 2^-log_eps carrying the piecewise-constant random
// coefficient, and fine cells of width h = 2^-log_fine carrying the Q1
// discretization. Nesting (log_coarse <= log_eps <= log_fine) makes every
// coarser cell an exact union of finer ones.
struct GridSpec {
  int dim = 2;
  int log_coarse = 3;
  int log_eps = 5;
  int log_fine = 7;

  int axis_cells(int log_level) const { return 1 << log_level; }
  int coarse_per_axis() const { return axis_cells(log_coarse); }
  int eps_per_axis() const { return axis_cells(log_eps); }
  int fine_per_axis() const { return axis_cells(log_fine); }

  long level_cell_count(int log_level) const {
    const long n = axis_cells(log_level);
    return dim == 1 ? n : n * n;
  }
  long coarse_count() const { return level_cell_count(log_coarse); }
  long eps_count() const { return level_cell_count(log_eps); }
  long fine_count() const { return level_cell_count(log_fine); }

  double width(int log_level) const { return std::ldexp(1.0, -log_level); }
  double coarse_h() const { return width(log_coarse); }
  double eps_h() const { return width(log_eps); }
  double fine_h() const { return width(log_fine); }

  // Measure of one cell at the given level.
  double cell_measure(int log_level) const {
    const double w = width(log_level);
    return dim == 1 ? w : w * w;
  }
};

inline GridSpec build_hierarchy(int dim, int log_coarse, int log_eps, int log_fine) {
  if (dim != 1 && dim != 2)
    throw GridError("build_hierarchy: dim must be 1 or 2, got " + std::to_string(dim));
  if (log_coarse < 1 || log_coarse > log_eps || log_eps > log_fine || log_fine > 30)
    throw GridError("build_hierarchy: need 1 <= log_coarse <= log_eps <= log_fine <= 30, got (" +
                    std::to_string(log_coarse) + ", " + std::to_string(log_eps) + ", " +
                    std::to_string(log_fine) + ")");
  return GridSpec{dim, log_coarse, log_eps, log_fine};
}

// Multi-index of a coarse element; iy stays 0 in one dimension. Linearization
// is lexicographic with x running fastest.
struct ElementIndex {
  int ix = 0;
  int iy = 0;

  friend bool operator==(const ElementIndex&, const ElementIndex&) = default;
};

inline long element_linear(const GridSpec& g, ElementIndex e) {
  return e.ix + static_cast<long>(g.coarse_per_axis()) * e.iy;
}

inline ElementIndex element_from_linear(const GridSpec& g, long linear) {
  const int n = g.coarse_per_axis();
  if (linear < 0 || linear >= g.coarse_count())
    throw GridError("element_from_linear: index " + std::to_string(linear) + " out of range");
  return ElementIndex{static_cast<int>(linear % n), static_cast<int>(linear / n)};
}

inline void validate_element(const GridSpec& g, ElementIndex e) {
  const int n = g.coarse_per_axis();
  const bool ok_x = e.ix >= 0 && e.ix < n;
  const bool ok_y = g.dim == 1 ? e.iy == 0 : (e.iy >= 0 && e.iy < n);
  if (!ok_x || !ok_y)
    throw GridError("element index (" + std::to_string(e.ix) + ", " + std::to_string(e.iy) +
                    ") out of range for " + std::to_string(n) + " coarse cells per axis");
}

// ell-th order patch around a coarse element: the box of coarse elements
// within ell steps per axis, clamped to the domain. Equivalent to ell
// applications of the one-ring neighborhood on a box domain.
struct Patch {
  GridSpec grid;
  ElementIndex center;
  int ell = 1;
  std::array<int, 2> lo{0, 0};  // coarse element range per axis, inclusive
  std::array<int, 2> hi{0, 0};

  int nx() const { return hi[0] - lo[0] + 1; }
  int ny() const { return grid.dim == 2 ? hi[1] - lo[1] + 1 : 1; }
  int element_count() const { return nx() * ny(); }

  // Lexicographic (x fastest) list of the patch's coarse elements.
  std::vector<ElementIndex> elements() const {
    std::vector<ElementIndex> out;
    out.reserve(static_cast<std::size_t>(element_count()));
    for (int iy = 0; iy < ny(); ++iy)
      for (int ix = 0; ix < nx(); ++ix)
        out.push_back(ElementIndex{lo[0] + ix, grid.dim == 2 ? lo[1] + iy : 0});
    return out;
  }

  int local_index(ElementIndex e) const {
    return (e.ix - lo[0]) + nx() * (grid.dim == 2 ? e.iy - lo[1] : 0);
  }
  int center_local() const { return local_index(center); }
  bool contains(ElementIndex e) const {
    if (e.ix < lo[0] || e.ix > hi[0]) return false;
    if (grid.dim == 2 && (e.iy < lo[1] || e.iy > hi[1])) return false;
    return true;
  }
};

inline Patch make_patch(const GridSpec& g, ElementIndex center, int ell) {
  validate_element(g, center);
  if (ell < 0) throw GridError("make_patch: ell must be nonnegative");
  const int n = g.coarse_per_axis();
  Patch p;
  p.grid = g;
  p.center = center;
  p.ell = ell;
  p.lo[0] = std::max(0, center.ix - ell);
  p.hi[0] = std::min(n - 1, center.ix + ell);
  if (g.dim == 2) {
    p.lo[1] = std::max(0, center.iy - ell);
    p.hi[1] = std::min(n - 1, center.iy + ell);
  }
  bool whole = p.lo[0] == 0 && p.hi[0] == n - 1;
  if (g.dim == 2) whole = whole && p.lo[1] == 0 && p.hi[1] == n - 1;
  if (whole)
    throw GridError("make_patch: patch of order " + std::to_string(ell) + " around element (" +
                    std::to_string(center.ix) + ", " + std::to_string(center.iy) +
                    ") covers the whole domain; choose a smaller ell or finer coarse mesh");
  return p;
}

// Largest ell <= requested for which the patch stays a proper subdomain;
// returns 0 if even the one-ring fails (degenerately coarse mesh).
inline int max_proper_ell(const GridSpec& g, ElementIndex center, int requested) {
  for (int ell = requested; ell >= 1; --ell) {
    const int n = g.coarse_per_axis();
    bool whole = std::max(0, center.ix - ell) == 0 && std::min(n - 1, center.ix + ell) == n - 1;
    if (g.dim == 2)
      whole = whole && std::max(0, center.iy - ell) == 0 && std::min(n - 1, center.iy + ell) == n - 1;
    if (!whole) return ell;
  }
  return 0;
}

enum class NodeKind : unsigned char { kInterior, kGamma, kArtificial };

// Axis-aligned box of fine cells, together with the node classification used
// by all solves: interior nodes are the free unknowns; region-boundary nodes
// split into Gamma nodes (lying on the domain boundary, always homogeneous
// Dirichlet) and artificial nodes (cut by localization, carrying prescribed
// data in harmonic extensions). Both patches and the global domain are
// regions, so assembly and solves are written once.
struct Region {
  GridSpec grid;
  std::array<int, 2> cell_lo{0, 0};  // fine-cell range per axis, inclusive
  std::array<int, 2> cell_hi{0, 0};

  int cells_x() const { return cell_hi[0] - cell_lo[0] + 1; }
  int cells_y() const { return grid.dim == 2 ? cell_hi[1] - cell_lo[1] + 1 : 1; }
  long cell_count() const { return static_cast<long>(cells_x()) * cells_y(); }
  int nodes_x() const { return cells_x() + 1; }
  int nodes_y() const { return grid.dim == 2 ? cells_y() + 1 : 1; }
  long node_count() const { return static_cast<long>(nodes_x()) * nodes_y(); }

  long node_id(int ix, int iy) const { return ix + static_cast<long>(nodes_x()) * iy; }
  long cell_id(int ix, int iy) const { return ix + static_cast<long>(cells_x()) * iy; }

  bool face_on_domain_boundary(int axis, int side) const {
    if (axis >= grid.dim) return false;
    return side == 0 ? cell_lo[axis] == 0 : cell_hi[axis] == grid.fine_per_axis() - 1;
  }

  NodeKind node_kind(int ix, int iy) const {
    const bool bx = ix == 0 || ix == nodes_x() - 1;
    const bool by = grid.dim == 2 && (iy == 0 || iy == nodes_y() - 1);
    if (!bx && !by) return NodeKind::kInterior;
    const bool gamma = (ix == 0 && face_on_domain_boundary(0, 0)) ||
                       (ix == nodes_x() - 1 && face_on_domain_boundary(0, 1)) ||
                       (grid.dim == 2 &&
                        ((iy == 0 && face_on_domain_boundary(1, 0)) ||
                         (iy == nodes_y() - 1 && face_on_domain_boundary(1, 1))));
    return gamma ? NodeKind::kGamma : NodeKind::kArtificial;
  }
  NodeKind node_kind(long id) const {
    return node_kind(static_cast<int>(id % nodes_x()), static_cast<int>(id / nodes_x()));
  }

  // Global coordinate of a local node.
  std::array<double, 2> node_coord(long id) const {
    const double h = grid.fine_h();
    const int ix = static_cast<int>(id % nodes_x());
    const int iy = static_cast<int>(id / nodes_x());
    return {(cell_lo[0] + ix) * h, grid.dim == 2 ? (cell_lo[1] + iy) * h : 0.0};
  }

  // Global coordinate of a local cell midpoint.
  std::array<double, 2> cell_center(long id) const {
    const double h = grid.fine_h();
    const int ix = static_cast<int>(id % cells_x());
    const int iy = static_cast<int>(id / cells_x());
    return {(cell_lo[0] + ix + 0.5) * h, grid.dim == 2 ? (cell_lo[1] + iy + 0.5) * h : 0.0};
  }

  // Interior (free) node ids, ascending.
  std::vector<long> free_nodes() const {
    std::vector<long> out;
    out.reserve(static_cast<std::size_t>(node_count()));
    for (long id = 0; id < node_count(); ++id)
      if (node_kind(id) == NodeKind::kInterior) out.push_back(id);
    return out;
  }

  std::vector<long> artificial_nodes() const {
    std::vector<long> out;
    for (long id = 0; id < node_count(); ++id)
      if (node_kind(id) == NodeKind::kArtificial) out.push_back(id);
    return out;
  }

  // Cell counts per axis after coarsening to `log_level`; validates that the
  // region is aligned to that level.
  std::array<int, 2> level_cells(int log_level) const {
    if (log_level > grid.log_fine)
      throw GridError("region: requested level is finer than the stored fine mesh");
    const int shift = grid.log_fine - log_level;
    const int step = 1 << shift;
    for (int a = 0; a < grid.dim; ++a) {
      if (cell_lo[a] % step != 0 || (cell_hi[a] + 1) % step != 0)
        throw GridError("region: box is not aligned to cells of level 2^-" +
                        std::to_string(log_level));
    }
    return {cells_x() >> shift, grid.dim == 2 ? cells_y() >> shift : 1};
  }
};

inline Region make_region(const Patch& p) {
  const int rho = 1 << (p.grid.log_fine - p.grid.log_coarse);
  Region r;
  r.grid = p.grid;
  r.cell_lo[0] = p.lo[0] * rho;
  r.cell_hi[0] = (p.hi[0] + 1) * rho - 1;
  if (p.grid.dim == 2) {
    r.cell_lo[1] = p.lo[1] * rho;
    r.cell_hi[1] = (p.hi[1] + 1) * rho - 1;
  }
  return r;
}

inline Region global_region(const GridSpec& g) {
  Region r;
  r.grid = g;
  r.cell_lo[0] = 0;
  r.cell_hi[0] = g.fine_per_axis() - 1;
  if (g.dim == 2) {
    r.cell_lo[1] = 0;
    r.cell_hi[1] = g.fine_per_axis() - 1;
  }
  return r;
}

// One dyadic coarsening sweep on cell data: children are combined with
// balanced pair sums, (a+b) in 1D and ((a+b)+(c+d)) in 2D, before dividing.
// Balanced sums make the averaging exact for constant data and bit-stable
// under repetition, which the projection tests rely on.
inline Eigen::VectorXd coarsen_once(const Eigen::VectorXd& values, int cells_x, int cells_y,
                                    int dim) {
  if (dim == 1) {
    Eigen::VectorXd out(cells_x / 2);
    for (int i = 0; i < cells_x / 2; ++i) out[i] = (values[2 * i] + values[2 * i + 1]) * 0.5;
    return out;
  }
  const int ox = cells_x / 2, oy = cells_y / 2;
  Eigen::VectorXd out(static_cast<long>(ox) * oy);
  for (int iy = 0; iy < oy; ++iy)
    for (int ix = 0; ix < ox; ++ix) {
      const long b = 2 * ix + static_cast<long>(cells_x) * (2 * iy);
      const double s = (values[b] + values[b + 1]) + (values[b + cells_x] + values[b + cells_x + 1]);
      out[ix + static_cast<long>(ox) * iy] = s * 0.25;
    }
  return out;
}

// Averages cell data given at level `from_log` down to `to_log` (both dyadic,
// region-aligned). Repeated halving; exact on constants.
inline Eigen::VectorXd coarsen_cells(const Region& r, Eigen::VectorXd values, int from_log,
                                     int to_log) {
  if (to_log > from_log) throw GridError("coarsen_cells: target level finer than source level");
  auto from = r.level_cells(from_log);
  (void)r.level_cells(to_log);  // alignment check for the target
  if (values.size() != static_cast<long>(from[0]) * from[1])
    throw GridError("coarsen_cells: value count does not match source level");
  int cx = from[0], cy = from[1];
  for (int l = from_log; l > to_log; --l) {
    values = coarsen_once(values, cx, cy, r.grid.dim);
    cx /= 2;
    if (r.grid.dim == 2) cy /= 2;
  }
  return values;
}

// L2-orthogonal projection of a Q1 nodal function onto piecewise constants at
// `target_log`: per fine cell the mean of its corner values (trapezoidal rule,
// exact for Q1), then balanced dyadic averaging up to the target level.
// Idempotent by construction and exact for constants.
inline Eigen::VectorXd project_p0(const Region& r, const Eigen::VectorXd& nodal, int target_log) {
  if (nodal.size() != r.node_count())
    throw GridError("project_p0: nodal value count does not match the region");
  const int ncx = r.cells_x(), ncy = r.cells_y(), nx = r.nodes_x();
  Eigen::VectorXd cell_means(r.cell_count());
  if (r.grid.dim == 1) {
    for (int i = 0; i < ncx; ++i) cell_means[i] = (nodal[i] + nodal[i + 1]) * 0.5;
  } else {
    for (int iy = 0; iy < ncy; ++iy)
      for (int ix = 0; ix < ncx; ++ix) {
        const long b = ix + static_cast<long>(nx) * iy;
        const double s = (nodal[b] + nodal[b + 1]) + (nodal[b + nx] + nodal[b + nx + 1]);
        cell_means[ix + static_cast<long>(ncx) * iy] = s * 0.25;
      }
  }
  return coarsen_cells(r, std::move(cell_means), r.grid.log_fine, target_log);
}

// Distance-graded selection weights on the patch elements: w(K) =
// (|m_K - m_T|_inf / H)^r, an integer per-axis step distance raised to the
// power r, and exactly zero on the center element.
inline Eigen::VectorXd weight_function(const Patch& p, double r) {
  if (r < 0) throw ConfigError("weight_function: exponent must be nonnegative");
  Eigen::VectorXd w(p.element_count());
  const auto elems = p.elements();
  for (std::size_t k = 0; k < elems.size(); ++k) {
    const int dx = std::abs(elems[k].ix - p.center.ix);
    const int dy = p.grid.dim == 2 ? std::abs(elems[k].iy - p.center.iy) : 0;
    const int dist = std::max(dx, dy);
    w[static_cast<long>(k)] = dist == 0 ? 0.0 : std::pow(static_cast<double>(dist), r);
  }
  return w;
}

}  // namespace stochhom
