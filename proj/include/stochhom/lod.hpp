#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stochhom/errors.hpp"
#include "stochhom/fem.hpp"
#include "stochhom/grid.hpp"

namespace stochhom {

// Tensor-product hat ("bubble") supported on one coarse element, scaled so
// that its P0 projection onto the coarse mesh equals the indicator of that
// element exactly: peak 2 in one dimension, 4 in two (the average of a tent
// with peak 2 is 1 per axis). All nodal values are dyadic rationals, so the
// balanced projection reproduces the indicator to the last bit.
inline FineFunction bubble_function(const Region& r, ElementIndex t) {
  const GridSpec& g = r.grid;
  validate_element(g, t);
  const int rho = 1 << (g.log_fine - g.log_coarse);
  const int bx = t.ix * rho - r.cell_lo[0];
  const int by = g.dim == 2 ? t.iy * rho - r.cell_lo[1] : 0;
  if (bx < 0 || bx + rho > r.cells_x() || (g.dim == 2 && (by < 0 || by + rho > r.cells_y())))
    throw GridError("bubble_function: element lies outside the region");
  Eigen::VectorXd nodal = Eigen::VectorXd::Zero(r.node_count());
  auto tent = [rho](int offset) {
    const double s = 2.0 * offset / rho - 1.0;
    return 2.0 * (1.0 - std::abs(s));
  };
  if (g.dim == 1) {
    for (int i = 0; i <= rho; ++i) nodal[bx + i] = tent(i);
  } else {
    for (int j = 0; j <= rho; ++j)
      for (int i = 0; i <= rho; ++i) nodal[r.node_id(bx + i, by + j)] = tent(i) * tent(j);
  }
  return FineFunction{r, std::move(nodal)};
}

struct LodCorrection {
  // Fine-scale part x of the bubble: coarse averages of x vanish and
  // a(x, v) = a(bubble, v) for every v with vanishing coarse averages.
  FineFunction fine_part;
  // P0 density per patch coarse element; the corrected basis bubble - x
  // solves the Dirichlet problem with exactly this right-hand side.
  Eigen::VectorXd source;
};

// Saddle-point correction of a bubble for one coefficient realization:
// [A C^T; C 0][x; mu] = [A b; 0] with C the coarse-average constraints.
inline LodCorrection lod_correction(SparseOperator& op, const P0ConstraintMatrix& avg,
                                    const FineFunction& bubble) {
  const Region& r = op.region();
  if (bubble.nodal.size() != r.node_count())
    throw ConfigError("lod_correction: bubble does not live on the operator's region");
  Eigen::VectorXd load = Eigen::VectorXd::Zero(r.node_count());
  const Eigen::VectorXd rows = op.apply_free(bubble.nodal);
  for (long f = 0; f < op.free_count(); ++f) load[op.free_to_node(f)] = rows[f];
  SaddleSolution sol = solve_saddle_point(op, avg, load);
  return LodCorrection{std::move(sol.solution), std::move(sol.multiplier)};
}

// Empirical mean over M coefficient samples of the LOD source density of the
// patch's center element, normalized to unit L2 norm. The running mean is
// updated increment-wise, which is exact for identical samples and
// independent of any parallel schedule (samples run strictly in order).
inline Eigen::VectorXd mean_lod_source(
    const Patch& patch, const std::function<std::vector<double>(std::uint64_t)>& coefficient,
    int samples) {
  if (samples < 1) throw ConfigError("mean_lod_source: sample count must be positive");
  const Region region = make_region(patch);
  const P0ConstraintMatrix avg =
      p0_constraints(region, patch.grid.log_coarse, P0Scaling::kAverage);
  const FineFunction bubble = bubble_function(region, patch.center);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(patch.element_count());
  for (int i = 0; i < samples; ++i) {
    SparseOperator op = assemble_stiffness(region, coefficient(static_cast<std::uint64_t>(i)));
    const LodCorrection corr = lod_correction(op, avg, bubble);
    mean += (corr.source - mean) / static_cast<double>(i + 1);
  }
  const double measure = patch.grid.cell_measure(patch.grid.log_coarse);
  const double norm = std::sqrt(mean.squaredNorm() * measure);
  if (!(norm > 0.0))
    throw SolverError("mean_lod_source: mean source vanishes; cannot normalize");
  return mean / norm;
}

}  // namespace stochhom
