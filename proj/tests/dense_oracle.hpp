#pragma once

// Independent verification route for the sparse solvers: all forms are
// assembled by Gauss quadrature on the reference cell (no closed-form element
// matrices) and every system is solved by dense full-pivot LU over the full
// node set. Deliberately simple and slow; only for systems of a few hundred
// unknowns.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "stochhom/grid.hpp"

namespace stochhom::testing {

struct QuadPoint {
  double x = 0, y = 0, w = 1;
};

// Tensor two-point Gauss rule on the unit reference cell; exact for the
// bilinear products appearing in Q1 stiffness and mass forms.
inline std::vector<QuadPoint> quad_points(int dim) {
  const double a = 0.5 - 0.5 / std::sqrt(3.0);
  const double b = 0.5 + 0.5 / std::sqrt(3.0);
  if (dim == 1) return {{a, 0.0, 0.5}, {b, 0.0, 0.5}};
  return {{a, a, 0.25}, {b, a, 0.25}, {a, b, 0.25}, {b, b, 0.25}};
}

// Q1 shape values and reference gradients, corner order (0,0),(1,0),(0,1),(1,1).
inline int shape(int dim, double x, double y, double* val, double* gx, double* gy) {
  if (dim == 1) {
    val[0] = 1 - x;
    val[1] = x;
    gx[0] = -1;
    gx[1] = 1;
    gy[0] = gy[1] = 0;
    return 2;
  }
  val[0] = (1 - x) * (1 - y);
  val[1] = x * (1 - y);
  val[2] = (1 - x) * y;
  val[3] = x * y;
  gx[0] = -(1 - y);
  gx[1] = 1 - y;
  gx[2] = -y;
  gx[3] = y;
  gy[0] = -(1 - x);
  gy[1] = -x;
  gy[2] = 1 - x;
  gy[3] = x;
  return 4;
}

// Local-to-global corner node ids of one region cell.
inline int cell_nodes(const Region& r, long cell, long* nodes) {
  const int cx = static_cast<int>(cell % r.cells_x());
  const int cy = static_cast<int>(cell / r.cells_x());
  if (r.grid.dim == 1) {
    nodes[0] = cx;
    nodes[1] = cx + 1;
    return 2;
  }
  nodes[0] = r.node_id(cx, cy);
  nodes[1] = r.node_id(cx + 1, cy);
  nodes[2] = r.node_id(cx, cy + 1);
  nodes[3] = r.node_id(cx + 1, cy + 1);
  return 4;
}

inline Eigen::MatrixXd dense_stiffness(const Region& r, const std::vector<double>& coeff) {
  const int dim = r.grid.dim;
  const double h = r.grid.fine_h();
  const double vol = dim == 1 ? h : h * h;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r.node_count(), r.node_count());
  const auto qps = quad_points(dim);
  double val[4], gx[4], gy[4];
  long nodes[4];
  for (long c = 0; c < r.cell_count(); ++c) {
    const int nn = cell_nodes(r, c, nodes);
    for (const QuadPoint& q : qps) {
      shape(dim, q.x, q.y, val, gx, gy);
      for (int i = 0; i < nn; ++i)
        for (int j = 0; j < nn; ++j)
          a(nodes[i], nodes[j]) += coeff[static_cast<std::size_t>(c)] * q.w * vol *
                                   (gx[i] * gx[j] + gy[i] * gy[j]) / (h * h);
    }
  }
  return a;
}

inline Eigen::MatrixXd dense_mass(const Region& r) {
  const int dim = r.grid.dim;
  const double h = r.grid.fine_h();
  const double vol = dim == 1 ? h : h * h;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(r.node_count(), r.node_count());
  const auto qps = quad_points(dim);
  double val[4], gx[4], gy[4];
  long nodes[4];
  for (long c = 0; c < r.cell_count(); ++c) {
    const int nn = cell_nodes(r, c, nodes);
    for (const QuadPoint& q : qps) {
      shape(dim, q.x, q.y, val, gx, gy);
      for (int i = 0; i < nn; ++i)
        for (int j = 0; j < nn; ++j) m(nodes[i], nodes[j]) += q.w * vol * val[i] * val[j];
    }
  }
  return m;
}

// Load vector of a piecewise-constant source given on the region's fine cells.
inline Eigen::VectorXd dense_load_fine_p0(const Region& r, const Eigen::VectorXd& cell_values) {
  const int dim = r.grid.dim;
  const double h = r.grid.fine_h();
  const double vol = dim == 1 ? h : h * h;
  Eigen::VectorXd load = Eigen::VectorXd::Zero(r.node_count());
  const auto qps = quad_points(dim);
  double val[4], gx[4], gy[4];
  long nodes[4];
  for (long c = 0; c < r.cell_count(); ++c) {
    const int nn = cell_nodes(r, c, nodes);
    for (const QuadPoint& q : qps) {
      shape(dim, q.x, q.y, val, gx, gy);
      for (int i = 0; i < nn; ++i) load[nodes[i]] += cell_values[c] * q.w * vol * val[i];
    }
  }
  return load;
}

// Mean of a Q1 function over each level-cell of the region, by quadrature.
inline Eigen::VectorXd dense_cell_means(const Region& r, const Eigen::VectorXd& nodal,
                                        int level_log) {
  const int dim = r.grid.dim;
  const double h = r.grid.fine_h();
  const double vol = dim == 1 ? h : h * h;
  const auto counts = r.level_cells(level_log);
  const int step = 1 << (r.grid.log_fine - level_log);
  const double measure = r.grid.cell_measure(level_log);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<long>(counts[0]) * counts[1]);
  const auto qps = quad_points(dim);
  double val[4], gx[4], gy[4];
  long nodes[4];
  for (long c = 0; c < r.cell_count(); ++c) {
    const int cx = static_cast<int>(c % r.cells_x());
    const int cy = static_cast<int>(c / r.cells_x());
    const long row = (cx / step) + static_cast<long>(counts[0]) * (dim == 2 ? cy / step : 0);
    const int nn = cell_nodes(r, c, nodes);
    double integral = 0.0;
    for (const QuadPoint& q : qps) {
      shape(dim, q.x, q.y, val, gx, gy);
      double u = 0.0;
      for (int i = 0; i < nn; ++i) u += val[i] * nodal[nodes[i]];
      integral += q.w * vol * u;
    }
    out[row] += integral / measure;
  }
  return out;
}

inline std::vector<long> free_node_list(const Region& r) {
  return r.free_nodes();
}

// Dirichlet solve with zero values on the whole region boundary.
inline Eigen::VectorXd dense_dirichlet(const Region& r, const std::vector<double>& coeff,
                                       const Eigen::VectorXd& load) {
  const Eigen::MatrixXd a = dense_stiffness(r, coeff);
  const auto free = free_node_list(r);
  const long nf = static_cast<long>(free.size());
  Eigen::MatrixXd aff(nf, nf);
  Eigen::VectorXd rhs(nf);
  for (long i = 0; i < nf; ++i) {
    rhs[i] = load[free[static_cast<std::size_t>(i)]];
    for (long j = 0; j < nf; ++j)
      aff(i, j) = a(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
  }
  const Eigen::VectorXd x = Eigen::FullPivLU<Eigen::MatrixXd>(aff).solve(rhs);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(r.node_count());
  for (long i = 0; i < nf; ++i) full[free[static_cast<std::size_t>(i)]] = x[i];
  return full;
}

// Harmonic extension: prescribed values at the artificial nodes, zero at
// domain-boundary nodes, interior solved densely.
inline Eigen::VectorXd dense_extension(const Region& r, const std::vector<double>& coeff,
                                       const Eigen::VectorXd& artificial_values) {
  const Eigen::MatrixXd a = dense_stiffness(r, coeff);
  const auto art = r.artificial_nodes();
  Eigen::VectorXd full = Eigen::VectorXd::Zero(r.node_count());
  for (std::size_t i = 0; i < art.size(); ++i) full[art[i]] = artificial_values[static_cast<long>(i)];
  const auto free = free_node_list(r);
  const long nf = static_cast<long>(free.size());
  Eigen::MatrixXd aff(nf, nf);
  Eigen::VectorXd rhs(nf);
  for (long i = 0; i < nf; ++i) {
    const long gi = free[static_cast<std::size_t>(i)];
    double s = 0.0;
    for (long j = 0; j < r.node_count(); ++j) s += a(gi, j) * full[j];
    rhs[i] = -s;
    for (long j = 0; j < nf; ++j) aff(i, j) = a(gi, free[static_cast<std::size_t>(j)]);
  }
  const Eigen::VectorXd x = Eigen::FullPivLU<Eigen::MatrixXd>(aff).solve(rhs);
  for (long i = 0; i < nf; ++i) full[free[static_cast<std::size_t>(i)]] = x[i];
  return full;
}

struct DenseSaddleResult {
  Eigen::VectorXd solution;    // full nodal values
  Eigen::VectorXd multiplier;  // one per constraint row (average scaling)
};

// KKT system with mean-value constraint rows over the level cells, assembled
// and solved densely. Multipliers pair with average-scaled rows.
inline DenseSaddleResult dense_saddle(const Region& r, const std::vector<double>& coeff,
                                      int level_log, const Eigen::VectorXd& load) {
  const Eigen::MatrixXd a = dense_stiffness(r, coeff);
  const auto counts = r.level_cells(level_log);
  const long nc = static_cast<long>(counts[0]) * counts[1];
  // constraint row K: mean over K, column i obtained by pushing the i-th unit
  // nodal vector through the quadrature cell means.
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(nc, r.node_count());
  for (long i = 0; i < r.node_count(); ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(r.node_count());
    e[i] = 1.0;
    c.col(i) = dense_cell_means(r, e, level_log);
  }
  const auto free = free_node_list(r);
  const long nf = static_cast<long>(free.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + nc, nf + nc);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + nc);
  for (long i = 0; i < nf; ++i) {
    rhs[i] = load[free[static_cast<std::size_t>(i)]];
    for (long j = 0; j < nf; ++j)
      kkt(i, j) = a(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
    for (long k = 0; k < nc; ++k) {
      kkt(i, nf + k) = c(k, free[static_cast<std::size_t>(i)]);
      kkt(nf + k, i) = c(k, free[static_cast<std::size_t>(i)]);
    }
  }
  const Eigen::VectorXd xm = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(r.node_count());
  for (long i = 0; i < nf; ++i) full[free[static_cast<std::size_t>(i)]] = xm[i];
  return DenseSaddleResult{std::move(full), xm.tail(nc)};
}

}  // namespace stochhom::testing
