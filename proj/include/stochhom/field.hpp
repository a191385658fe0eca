#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stochhom/errors.hpp"
#include "stochhom/grid.hpp"
#include "stochhom/rng.hpp"

namespace stochhom {

// Law of the random coefficient: i.i.d. uniform values on [alpha, beta] per
// oscillation cell. alpha = beta gives a deterministic constant field.
struct FieldLaw {
  double alpha = 0.1;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta >= alpha) || !std::isfinite(beta))
      throw ConfigError("field law requires 0 < alpha <= beta < inf, got alpha=" +
                        std::to_string(alpha) + " beta=" + std::to_string(beta));
  }
};

// One realization of the coefficient: a value per oscillation cell in
// lexicographic order, plus the provenance needed to reproduce it.
struct FieldSample {
  std::vector<double> values;
  std::uint64_t sample_index = 0;
  std::uint64_t stream_key = 0;
};

// Draws sample `sample_index` of the stream identified by (purpose,
// object_id). Pure function of its arguments: no global state, no draw-order
// coupling between samples.
inline FieldSample sample_field(const GridSpec& g, const FieldLaw& law, const SeedScheme& seeds,
                                StreamPurpose purpose, std::uint64_t object_id,
                                std::uint64_t sample_index) {
  law.validate();
  FieldSample out;
  out.sample_index = sample_index;
  out.stream_key = seeds.stream_key(purpose, object_id, sample_index);
  CounterRng rng(out.stream_key);
  const long count = g.eps_count();
  out.values.resize(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i)
    out.values[static_cast<std::size_t>(i)] = rng.next_uniform(law.alpha, law.beta);
  return out;
}

inline FieldSample sample_field(const GridSpec& g, const FieldLaw& law, const SeedScheme& seeds,
                                std::uint64_t sample_index) {
  return sample_field(g, law, seeds, StreamPurpose::kReference, 0, sample_index);
}

// Low-discrepancy variant: sample k is the k-th Halton point of dimension
// equal to the number of oscillation cells, mapped affinely to [alpha, beta].
// Deterministic in the sample index alone.
inline FieldSample sample_field_lowdiscrepancy(const GridSpec& g, const FieldLaw& law,
                                               std::uint64_t sample_index) {
  law.validate();
  const long count = g.eps_count();
  const auto point = halton_point(sample_index, static_cast<int>(count));
  FieldSample out;
  out.sample_index = sample_index;
  out.stream_key = 0;
  out.values.resize(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i)
    out.values[static_cast<std::size_t>(i)] =
        law.alpha + (law.beta - law.alpha) * point[static_cast<std::size_t>(i)];
  return out;
}

// Restriction of a global field to the fine cells of a region: each fine cell
// inherits the value of the oscillation cell containing it.
inline std::vector<double> restrict_field(const FieldSample& field, const GridSpec& g,
                                          const Region& r) {
  if (field.values.size() != static_cast<std::size_t>(g.eps_count()))
    throw ConfigError("restrict_field: field size does not match the oscillation mesh");
  const int shift = g.log_fine - g.log_eps;
  const int n_eps = g.eps_per_axis();
  std::vector<double> out(static_cast<std::size_t>(r.cell_count()));
  for (int iy = 0; iy < r.cells_y(); ++iy) {
    const int gy = g.dim == 2 ? (r.cell_lo[1] + iy) >> shift : 0;
    for (int ix = 0; ix < r.cells_x(); ++ix) {
      const int gx = (r.cell_lo[0] + ix) >> shift;
      out[static_cast<std::size_t>(r.cell_id(ix, iy))] =
          field.values[static_cast<std::size_t>(gx) + static_cast<std::size_t>(n_eps) * gy];
    }
  }
  return out;
}

inline std::vector<double> restrict_field(const FieldSample& field, const Patch& p) {
  return restrict_field(field, p.grid, make_region(p));
}

}  // namespace stochhom
