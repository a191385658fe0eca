#pragma once

#include <lapacke.h>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "stochhom/errors.hpp"
#include "stochhom/grid.hpp"

namespace stochhom {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Q1 function on a region: nodal values at all region nodes, boundary included.
struct FineFunction {
  Region region;
  Eigen::VectorXd nodal;
};

namespace detail {

// Closed-form Q1 element matrices. 1D: stiffness (1/h)[[1,-1],[-1,1]], mass
// (h/6)[[2,1],[1,2]]. 2D (corner order (0,0),(1,0),(0,1),(1,1)): stiffness is
// h-independent with diagonal 2/3, edge-neighbor -1/6, diagonal-neighbor -1/3;
// mass is the tensor square of the 1D mass.
inline const Eigen::Matrix2d& stiffness_1d_ref() {
  static const Eigen::Matrix2d k = (Eigen::Matrix2d() << 1, -1, -1, 1).finished();
  return k;
}
inline const Eigen::Matrix2d& mass_1d_ref() {
  static const Eigen::Matrix2d m = (Eigen::Matrix2d() << 2, 1, 1, 2).finished() / 6.0;
  return m;
}
inline const Eigen::Matrix4d& stiffness_2d_ref() {
  static const Eigen::Matrix4d k = [] {
    Eigen::Matrix4d out;
    const double d = 2.0 / 3.0, e = -1.0 / 6.0, c = -1.0 / 3.0;
    out << d, e, e, c,
           e, d, c, e,
           e, c, d, e,
           c, e, e, d;
    return out;
  }();
  return k;
}
inline const Eigen::Matrix4d& mass_2d_ref() {
  static const Eigen::Matrix4d m = [] {
    const Eigen::Matrix2d m1 = (Eigen::Matrix2d() << 2, 1, 1, 2).finished() / 6.0;
    Eigen::Matrix4d out;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) out(a, b) = m1(a % 2, b % 2) * m1(a / 2, b / 2);
    return out;
  }();
  return m;
}

}  // namespace detail

// Sparse SPD operator of the bilinear form (A grad u, grad v) on a region with
// homogeneous Dirichlet values on the whole region boundary. The free
// unknowns are the interior nodes in lexicographic order, which on a tensor
// grid yields a small, fixed bandwidth; factorization uses LAPACK's banded
// Cholesky, with an Eigen sparse Cholesky fallback once the band would not
// fit in memory. Solves process all right-hand sides in one sweep over the
// band so repeated sampling stays cheap.
class SparseOperator {
 public:
  static constexpr double kDefaultBandLimitBytes = 256.0 * 1024 * 1024;

  SparseOperator(const Region& region, std::vector<double> cell_coeff,
                 double band_limit_bytes = kDefaultBandLimitBytes)
      : region_(region), coeff_(std::move(cell_coeff)) {
    if (coeff_.size() != static_cast<std::size_t>(region_.cell_count()))
      throw ConfigError("assemble_stiffness: coefficient count " + std::to_string(coeff_.size()) +
                        " does not match " + std::to_string(region_.cell_count()) +
                        " region cells");
    for (double a : coeff_)
      if (!(a > 0.0) || !std::isfinite(a))
        throw ConfigError("assemble_stiffness: coefficient values must be positive and finite");
    free_x_ = region_.nodes_x() - 2;
    free_y_ = region_.grid.dim == 2 ? region_.nodes_y() - 2 : 1;
    if (free_x_ < 0) free_x_ = 0;
    n_free_ = static_cast<long>(std::max(free_x_, 0)) * std::max(free_y_, 1);
    kd_ = region_.grid.dim == 2 ? free_x_ + 1 : 1;
    use_band_ = static_cast<double>(n_free_) * (kd_ + 1) * 8.0 < band_limit_bytes;
  }

  bool uses_band() const { return use_band_; }

  const Region& region() const { return region_; }
  const std::vector<double>& coefficient() const { return coeff_; }
  long free_count() const { return n_free_; }

  // Free index of a node id, -1 for boundary nodes.
  long free_index(long node) const {
    const int ix = static_cast<int>(node % region_.nodes_x());
    const int iy = static_cast<int>(node / region_.nodes_x());
    if (ix < 1 || ix > free_x_) return -1;
    if (region_.grid.dim == 2 && (iy < 1 || iy > free_y_)) return -1;
    return (ix - 1) + static_cast<long>(free_x_) * (region_.grid.dim == 2 ? iy - 1 : 0);
  }
  long free_to_node(long f) const {
    const int ix = static_cast<int>(f % free_x_) + 1;
    const int iy = region_.grid.dim == 2 ? static_cast<int>(f / free_x_) + 1 : 0;
    return region_.node_id(ix, iy);
  }

  // Rows of A at the free nodes applied to a full nodal vector; equals
  // A_ff x_f + A_fb x_b, which serves extension loads and residual checks.
  Eigen::VectorXd apply_free(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_free_);
    for_each_cell([&](long cell, const long* nodes, int n_nodes, const double* kref) {
      const double a = coeff_[static_cast<std::size_t>(cell)] * scale_1d_factor();
      for (int i = 0; i < n_nodes; ++i) {
        const long fi = free_index(nodes[i]);
        if (fi < 0) continue;
        double acc = 0.0;
        for (int j = 0; j < n_nodes; ++j) acc += kref[i * n_nodes + j] * full[nodes[j]];
        out[fi] += a * acc;
      }
    });
    return out;
  }

  // Energy bilinear form a(u, v) over the whole region (all rows).
  double bilinear(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    if (u.size() != region_.node_count() || v.size() != region_.node_count())
      throw ConfigError("bilinear: nodal sizes do not match the region");
    double total = 0.0;
    for_each_cell([&](long cell, const long* nodes, int n_nodes, const double* kref) {
      const double a = coeff_[static_cast<std::size_t>(cell)] * scale_1d_factor();
      double local = 0.0;
      for (int i = 0; i < n_nodes; ++i)
        for (int j = 0; j < n_nodes; ++j) local += kref[i * n_nodes + j] * u[nodes[i]] * v[nodes[j]];
      total += a * local;
    });
    return total;
  }

  void factorize() {
    if (factored_) return;
    if (n_free_ == 0) {
      factored_ = true;
      return;
    }
    if (use_band_) {
      band_.setZero(kd_ + 1, n_free_);
      assemble_into([&](long fi, long fj, double v) {
        if (fi >= fj) band_(fi - fj, fj) += v;  // lower band layout
      });
      const lapack_int info = LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', static_cast<lapack_int>(n_free_),
                                             static_cast<lapack_int>(kd_), band_.data(),
                                             static_cast<lapack_int>(kd_ + 1));
      if (info != 0)
        throw SolverError("banded Cholesky failed (matrix not SPD?), dpbtrf info=" +
                          std::to_string(info));
    } else {
      std::vector<Eigen::Triplet<double>> trips;
      assemble_into([&](long fi, long fj, double v) {
        trips.emplace_back(static_cast<int>(fi), static_cast<int>(fj), v);
      });
      Eigen::SparseMatrix<double> aff(n_free_, n_free_);
      aff.setFromTriplets(trips.begin(), trips.end());
      sparse_llt_ = std::make_unique<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
      sparse_llt_->compute(aff);
      if (sparse_llt_->info() != Eigen::Success)
        throw SolverError("sparse Cholesky failed (matrix not SPD?)");
    }
    factored_ = true;
  }

  // In-place solve A_ff X = X for a block of right-hand sides (row-major,
  // n_free x m). The banded path sweeps the factor once per triangular solve
  // and updates all columns simultaneously, so cost scales with the band, not
  // with m times the band.
  void solve_in_place(RowMat& X) const {
    if (!factored_) throw SolverError("solve_in_place: operator not factorized");
    if (X.rows() != n_free_) throw SolverError("solve_in_place: row count mismatch");
    if (n_free_ == 0) return;
    const long m = X.cols();
    if (!use_band_) {
      Eigen::VectorXd col(n_free_);
      for (long j = 0; j < m; ++j) {
        col = X.col(j);
        col = sparse_llt_->solve(col);
        X.col(j) = col;
      }
      return;
    }
    const double* ab = band_.data();
    const long ldab = kd_ + 1;
    double* x = X.data();
    // forward sweep: L y = b, column-oriented updates keep rows contiguous
    for (long j = 0; j < n_free_; ++j) {
      double* xj = x + j * m;
      const double* col = ab + j * ldab;
      const double inv = 1.0 / col[0];
      for (long k = 0; k < m; ++k) xj[k] *= inv;
      const long iend = std::min(j + kd_, n_free_ - 1);
      for (long i = j + 1; i <= iend; ++i) {
        const double lij = col[i - j];
        if (lij == 0.0) continue;
        double* xi = x + i * m;
        for (long k = 0; k < m; ++k) xi[k] -= lij * xj[k];
      }
    }
    // backward sweep: L^T x = y, dot-product form reading rows below
    for (long j = n_free_ - 1; j >= 0; --j) {
      double* xj = x + j * m;
      const double* col = ab + j * ldab;
      const long iend = std::min(j + kd_, n_free_ - 1);
      for (long i = j + 1; i <= iend; ++i) {
        const double lij = col[i - j];
        if (lij == 0.0) continue;
        const double* xi = x + i * m;
        for (long k = 0; k < m; ++k) xj[k] -= lij * xi[k];
      }
      const double inv = 1.0 / col[0];
      for (long k = 0; k < m; ++k) xj[k] *= inv;
    }
  }

  Eigen::VectorXd solve_free(const Eigen::VectorXd& rhs_free) const {
    RowMat X = rhs_free;
    solve_in_place(X);
    return X.col(0);
  }

  // Iterates cells, handing local->global node ids and the unit-coefficient
  // reference stiffness to the callback.
  template <class F>
  void for_each_cell(const F& f) const {
    const int ncx = region_.cells_x(), ncy = region_.cells_y();
    const int nx = region_.nodes_x();
    if (region_.grid.dim == 1) {
      const double* kref = detail::stiffness_1d_ref().data();
      for (int ix = 0; ix < ncx; ++ix) {
        const long nodes[2] = {ix, ix + 1};
        f(static_cast<long>(ix), nodes, 2, kref);
      }
    } else {
      const double* kref = detail::stiffness_2d_ref().data();
      for (int iy = 0; iy < ncy; ++iy)
        for (int ix = 0; ix < ncx; ++ix) {
          const long base = ix + static_cast<long>(nx) * iy;
          const long nodes[4] = {base, base + 1, base + nx, base + nx + 1};
          f(region_.cell_id(ix, iy), nodes, 4, kref);
        }
    }
  }

  // 1D element stiffness carries a 1/h factor; 2D is h-independent.
  double scale_1d_factor() const {
    return region_.grid.dim == 1 ? 1.0 / region_.grid.fine_h() : 1.0;
  }

 private:
  template <class Sink>
  void assemble_into(const Sink& sink) const {
    for_each_cell([&](long cell, const long* nodes, int n_nodes, const double* kref) {
      const double a = coeff_[static_cast<std::size_t>(cell)] * scale_1d_factor();
      for (int i = 0; i < n_nodes; ++i) {
        const long fi = free_index(nodes[i]);
        if (fi < 0) continue;
        for (int j = 0; j < n_nodes; ++j) {
          const long fj = free_index(nodes[j]);
          if (fj < 0) continue;
          sink(fi, fj, a * kref[i * n_nodes + j]);
        }
      }
    });
  }

  Region region_;
  std::vector<double> coeff_;
  int free_x_ = 0, free_y_ = 1;
  long n_free_ = 0;
  long kd_ = 1;
  bool use_band_ = true;
  bool factored_ = false;
  Eigen::MatrixXd band_;
  std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> sparse_llt_;
};

inline SparseOperator assemble_stiffness(
    const Region& r, std::vector<double> cell_coeff,
    double band_limit_bytes = SparseOperator::kDefaultBandLimitBytes) {
  return SparseOperator(r, std::move(cell_coeff), band_limit_bytes);
}

// Load vector of a piecewise-constant source given at an aligned dyadic level:
// each fine cell distributes value * h^d / 2^d to its corner nodes (midpoint
// rule per corner; exact for P0 data against Q1 hat functions).
inline Eigen::VectorXd assemble_load_p0(const Region& r, const Eigen::VectorXd& values,
                                        int value_log) {
  const auto counts = r.level_cells(value_log);
  if (values.size() != static_cast<long>(counts[0]) * counts[1])
    throw ConfigError("assemble_load_p0: value count does not match the level");
  const int shift = r.grid.log_fine - value_log;
  const double h = r.grid.fine_h();
  const double w = r.grid.dim == 1 ? h / 2.0 : h * h / 4.0;
  Eigen::VectorXd load = Eigen::VectorXd::Zero(r.node_count());
  const int nx = r.nodes_x();
  for (int iy = 0; iy < r.cells_y(); ++iy) {
    const int vy = r.grid.dim == 2 ? iy >> shift : 0;
    for (int ix = 0; ix < r.cells_x(); ++ix) {
      const double g = values[(ix >> shift) + static_cast<long>(counts[0]) * vy] * w;
      const long base = ix + static_cast<long>(nx) * iy;
      if (r.grid.dim == 1) {
        load[base] += g;
        load[base + 1] += g;
      } else {
        load[base] += g;
        load[base + 1] += g;
        load[base + nx] += g;
        load[base + nx + 1] += g;
      }
    }
  }
  return load;
}

// Load vector for a continuous source via the midpoint rule: the source is
// replaced by its fine-cell midpoint values and assembled as P0 data.
template <class F>
inline Eigen::VectorXd assemble_load_midpoint(const Region& r, const F& f) {
  Eigen::VectorXd values(r.cell_count());
  for (long c = 0; c < r.cell_count(); ++c) {
    const auto x = r.cell_center(c);
    values[c] = f(x[0], x[1]);
  }
  return assemble_load_p0(r, values, r.grid.log_fine);
}

// Solves A u = load with homogeneous Dirichlet data on the entire region
// boundary; verifies the residual before returning.
inline FineFunction solve_dirichlet(SparseOperator& op, const Eigen::VectorXd& load) {
  const Region& r = op.region();
  if (load.size() != r.node_count())
    throw ConfigError("solve_dirichlet: load size does not match the region");
  op.factorize();
  Eigen::VectorXd rhs(op.free_count());
  for (long f = 0; f < op.free_count(); ++f) rhs[f] = load[op.free_to_node(f)];
  Eigen::VectorXd sol_free = op.solve_free(rhs);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(r.node_count());
  for (long f = 0; f < op.free_count(); ++f) full[op.free_to_node(f)] = sol_free[f];
  const Eigen::VectorXd residual = op.apply_free(full) - rhs;
  const double scale = std::max(1.0, rhs.norm());
  if (!(residual.norm() <= 1e-8 * scale))
    throw SolverError("solve_dirichlet: residual check failed, |r| = " +
                      std::to_string(residual.norm()));
  return FineFunction{r, std::move(full)};
}

// Discrete harmonic extension of boundary data: prescribed values at the
// artificial nodes (one row per entry of region.artificial_nodes()), zero at
// Gamma nodes, A-harmonic inside. Block version: one column per data set.
inline RowMat harmonic_extension_multi(SparseOperator& op, const RowMat& artificial_values) {
  const Region& r = op.region();
  const auto artificial = r.artificial_nodes();
  if (artificial_values.rows() != static_cast<long>(artificial.size()))
    throw ConfigError("harmonic_extension: row count does not match artificial node count");
  const long m = artificial_values.cols();
  RowMat full = RowMat::Zero(r.node_count(), m);
  for (std::size_t i = 0; i < artificial.size(); ++i)
    full.row(artificial[i]) = artificial_values.row(static_cast<long>(i));
  op.factorize();
  RowMat rhs = RowMat::Zero(op.free_count(), m);
  // only cells touching the region boundary see nonzero data
  const int ncx = r.cells_x(), ncy = r.cells_y();
  op.for_each_cell([&](long cell, const long* nodes, int n_nodes, const double* kref) {
    const int cx = static_cast<int>(cell % ncx), cy = static_cast<int>(cell / ncx);
    const bool ring = cx == 0 || cx == ncx - 1 || (r.grid.dim == 2 && (cy == 0 || cy == ncy - 1));
    if (!ring) return;
    const double a = op.coefficient()[static_cast<std::size_t>(cell)] * op.scale_1d_factor();
    for (int i = 0; i < n_nodes; ++i) {
      const long fi = op.free_index(nodes[i]);
      if (fi < 0) continue;
      for (int j = 0; j < n_nodes; ++j) {
        if (op.free_index(nodes[j]) >= 0) continue;
        const double v = a * kref[i * n_nodes + j];
        if (v != 0.0) rhs.row(fi) -= v * full.row(nodes[j]);
      }
    }
  });
  op.solve_in_place(rhs);
  for (long f = 0; f < op.free_count(); ++f) full.row(op.free_to_node(f)) = rhs.row(f);
  return full;
}

inline FineFunction harmonic_extension(SparseOperator& op, const Eigen::VectorXd& artificial_values) {
  RowMat cols = artificial_values;
  RowMat full = harmonic_extension_multi(op, cols);
  return FineFunction{op.region(), full.col(0)};
}

struct Norms {
  double l2 = 0.0;
  double h1_semi = 0.0;
};

// Exact L2 norm and H1 seminorm of a Q1 function (consistent mass and unit
// stiffness element forms).
inline Norms norms(const FineFunction& f) {
  const Region& r = f.region;
  if (f.nodal.size() != r.node_count()) throw ConfigError("norms: nodal size mismatch");
  const double h = r.grid.fine_h();
  double l2_sq = 0.0, h1_sq = 0.0;
  const int ncx = r.cells_x(), ncy = r.cells_y(), nx = r.nodes_x();
  if (r.grid.dim == 1) {
    const Eigen::Matrix2d& kref = detail::stiffness_1d_ref();
    const Eigen::Matrix2d& mref = detail::mass_1d_ref();
    for (int ix = 0; ix < ncx; ++ix) {
      const Eigen::Vector2d v(f.nodal[ix], f.nodal[ix + 1]);
      l2_sq += h * v.dot(mref * v);
      h1_sq += (1.0 / h) * v.dot(kref * v);
    }
  } else {
    const Eigen::Matrix4d& kref = detail::stiffness_2d_ref();
    const Eigen::Matrix4d& mref = detail::mass_2d_ref();
    for (int iy = 0; iy < ncy; ++iy)
      for (int ix = 0; ix < ncx; ++ix) {
        const long b = ix + static_cast<long>(nx) * iy;
        const Eigen::Vector4d v(f.nodal[b], f.nodal[b + 1], f.nodal[b + nx], f.nodal[b + nx + 1]);
        l2_sq += h * h * v.dot(mref * v);
        h1_sq += v.dot(kref * v);
      }
  }
  return Norms{std::sqrt(l2_sq), std::sqrt(h1_sq)};
}

// Unit-coefficient H1 form (consistent mass plus stiffness, h-scaled) as a
// sparse matrix over all region nodes. Coefficient-independent, so one matrix
// per region serves every sample of a streaming loop.
inline Eigen::SparseMatrix<double, Eigen::RowMajor> h1_combo_matrix(const Region& r) {
  const double h = r.grid.fine_h();
  const int ncx = r.cells_x(), ncy = r.cells_y(), nx = r.nodes_x();
  std::vector<Eigen::Triplet<double>> trips;
  if (r.grid.dim == 1) {
    const Eigen::Matrix2d combo =
        h * detail::mass_1d_ref() + (1.0 / h) * detail::stiffness_1d_ref();
    trips.reserve(static_cast<std::size_t>(ncx) * 4);
    for (int ix = 0; ix < ncx; ++ix)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) trips.emplace_back(ix + i, ix + j, combo(i, j));
  } else {
    const Eigen::Matrix4d combo = h * h * detail::mass_2d_ref() + detail::stiffness_2d_ref();
    trips.reserve(static_cast<std::size_t>(ncx) * ncy * 16);
    for (int iy = 0; iy < ncy; ++iy)
      for (int ix = 0; ix < ncx; ++ix) {
        const long b = ix + static_cast<long>(nx) * iy;
        const int nodes[4] = {static_cast<int>(b), static_cast<int>(b + 1),
                              static_cast<int>(b + nx), static_cast<int>(b + nx + 1)};
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) trips.emplace_back(nodes[i], nodes[j], combo(i, j));
      }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> out(r.node_count(), r.node_count());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Squared full H1 norms (L2^2 + seminorm^2) of each column of a nodal block,
// as quadratic forms in a precomputed combo matrix.
inline Eigen::VectorXd h1_norm_sq_cols(const Eigen::SparseMatrix<double, Eigen::RowMajor>& combo,
                                       const RowMat& full) {
  if (full.rows() != combo.rows()) throw ConfigError("h1_norm_sq_cols: nodal size mismatch");
  const RowMat applied = combo * full;
  return full.cwiseProduct(applied).colwise().sum().transpose();
}

inline Eigen::VectorXd h1_norm_sq_cols(const Region& r, const RowMat& full) {
  if (full.rows() != r.node_count()) throw ConfigError("h1_norm_sq_cols: nodal size mismatch");
  return h1_norm_sq_cols(h1_combo_matrix(r), full);
}

enum class P0Scaling {
  kAverage,      // row K applied to nodal values yields the mean over K
  kSqrtMeasure,  // mean times sqrt(|K|): Euclidean norms equal L2 norms
};

// Rows of the P0 projection onto level-`level_log` cells of a region, as a
// sparse matrix acting on all region nodes. Row order is lexicographic over
// the level cells and matches Patch::elements() on patch regions.
struct P0ConstraintMatrix {
  int level_log = 0;
  P0Scaling scaling = P0Scaling::kAverage;
  double cell_measure = 0.0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> rows;
};

inline P0ConstraintMatrix p0_constraints(const Region& r, int level_log, P0Scaling scaling) {
  const auto counts = r.level_cells(level_log);
  const int step = 1 << (r.grid.log_fine - level_log);
  const double h = r.grid.fine_h();
  const double measure = r.grid.cell_measure(level_log);
  const double scale = (scaling == P0Scaling::kAverage ? 1.0 / measure : 1.0 / std::sqrt(measure));
  const double cell_w = (r.grid.dim == 1 ? h / 2.0 : h * h / 4.0) * scale;
  std::vector<Eigen::Triplet<double>> trips;
  const long rows_n = static_cast<long>(counts[0]) * counts[1];
  // each fine cell contributes cell_w to each of its corners within row K
  for (int ky = 0; ky < counts[1]; ++ky)
    for (int kx = 0; kx < counts[0]; ++kx) {
      const int row = kx + counts[0] * ky;
      for (int cy = 0; cy < (r.grid.dim == 2 ? step : 1); ++cy)
        for (int cx = 0; cx < step; ++cx) {
          const int ix = kx * step + cx;
          const int iy = r.grid.dim == 2 ? ky * step + cy : 0;
          const long base = r.node_id(ix, iy);
          trips.emplace_back(row, static_cast<int>(base), cell_w);
          trips.emplace_back(row, static_cast<int>(base + 1), cell_w);
          if (r.grid.dim == 2) {
            trips.emplace_back(row, static_cast<int>(base + r.nodes_x()), cell_w);
            trips.emplace_back(row, static_cast<int>(base + r.nodes_x() + 1), cell_w);
          }
        }
    }
  P0ConstraintMatrix out;
  out.level_log = level_log;
  out.scaling = scaling;
  out.cell_measure = measure;
  out.rows.resize(rows_n, r.node_count());
  out.rows.setFromTriplets(trips.begin(), trips.end());
  return out;
}

struct SaddleSolution {
  FineFunction solution;
  Eigen::VectorXd multiplier;  // P0 density per constraint cell
};

// KKT system [A C^T; C 0][x; mu] = [load; 0] on the free nodes, solved via
// the dense Schur complement S = C A^{-1} C^T (the constraint count is the
// small number of coarse cells). Residuals of both blocks are verified. The
// returned multiplier is rescaled to a P0 density: the corresponding load is
// assemble_load_p0(region, multiplier, level).
inline SaddleSolution solve_saddle_point(SparseOperator& op, const P0ConstraintMatrix& c,
                                         const Eigen::VectorXd& load) {
  const Region& r = op.region();
  if (load.size() != r.node_count())
    throw ConfigError("solve_saddle_point: load size does not match the region");
  const long n_rows = c.rows.rows();
  if (n_rows == 0) {
    FineFunction plain = solve_dirichlet(op, load);
    return SaddleSolution{std::move(plain), Eigen::VectorXd::Zero(0)};
  }
  op.factorize();
  if (op.free_count() == 0)
    throw SolverError("solve_saddle_point: no free unknowns but nonempty constraint set");
  // restrict constraint rows to the free nodes
  RowMat ct = RowMat::Zero(op.free_count(), n_rows);
  for (int row = 0; row < c.rows.outerSize(); ++row)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(c.rows, row); it; ++it) {
      const long fi = op.free_index(it.col());
      if (fi >= 0) ct(fi, row) += it.value();
    }
  const RowMat cf_t = ct;  // keep C^T for residuals
  op.solve_in_place(ct);   // ct = A^{-1} C^T
  Eigen::MatrixXd schur = cf_t.transpose() * ct;
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (schur + schur.transpose()));
  if (llt.info() != Eigen::Success)
    throw SolverError("solve_saddle_point: Schur complement not SPD (dependent constraints?)");
  Eigen::VectorXd rhs(op.free_count());
  for (long f = 0; f < op.free_count(); ++f) rhs[f] = load[op.free_to_node(f)];
  const Eigen::VectorXd t = op.solve_free(rhs);
  const Eigen::VectorXd mu = llt.solve(cf_t.transpose() * t);
  const Eigen::VectorXd x = t - ct * mu;
  Eigen::VectorXd full = Eigen::VectorXd::Zero(r.node_count());
  for (long f = 0; f < op.free_count(); ++f) full[op.free_to_node(f)] = x[f];
  // residuals: A x + C^T mu = rhs and C x = 0
  const Eigen::VectorXd res1 = op.apply_free(full) + cf_t * mu - rhs;
  const double scale1 = std::max({1.0, rhs.norm(), (cf_t * mu).norm()});
  if (!(res1.norm() <= 1e-8 * scale1))
    throw SolverError("solve_saddle_point: stationarity residual check failed");
  const double res2 = (cf_t.transpose() * x).norm();
  if (!(res2 <= 1e-8 * std::max(1.0, x.norm())))
    throw SolverError("solve_saddle_point: constraint residual check failed");
  // mu pairs with average-scaled rows; convert to a P0 density
  const double to_density =
      c.scaling == P0Scaling::kAverage ? 1.0 / c.cell_measure : 1.0 / std::sqrt(c.cell_measure);
  return SaddleSolution{FineFunction{r, std::move(full)}, mu * to_density};
}

}  // namespace stochhom
