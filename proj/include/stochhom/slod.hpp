#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stochhom/errors.hpp"
#include "stochhom/fem.hpp"
#include "stochhom/field.hpp"
#include "stochhom/grid.hpp"
#include "stochhom/lod.hpp"
#include "stochhom/parallel.hpp"
#include "stochhom/rng.hpp"
#include "stochhom/version.hpp"

namespace stochhom {

// Parameters of the randomized source construction: M coefficient samples,
// sampled space dimension m = m_factor * (patch element count), threshold
// exponent p for the candidate set, weight exponent r for the distance-graded
// selection, and the absolute threshold floor.
struct SamplingConfig {
  int M = 5000;
  int m_factor = 3;
  double p = 1.5;
  double r = 6.0;
  double threshold_floor = 1e-10;

  enum class Objective { kMinimize, kMaximize };
  Objective objective = Objective::kMinimize;

  void validate() const {
    if (M < 1) throw ConfigError("sampling: M must be at least 1");
    if (m_factor < 1) throw ConfigError("sampling: mFactor must be at least 1");
    if (!(p > 1.0)) throw ConfigError("sampling: p must exceed 1");
    if (!(r >= 0.0)) throw ConfigError("sampling: r must be nonnegative");
    if (!(threshold_floor > 0.0 && threshold_floor < 1.0))
      throw ConfigError("sampling: thresholdFloor must lie in (0,1)");
  }
};

// Accumulates the Gram matrix of the stacked sample blocks X = [P_1 ... P_M]
// as a running mean of the per-sample outer products P_i P_i^T, updated in
// block-index order. The running-mean form is exact for identical blocks
// (increments vanish), which keeps degenerate-randomness runs bit-stable.
class GramAccumulator {
 public:
  explicit GramAccumulator(long n) : mean_(Eigen::MatrixXd::Zero(n, n)) {}

  void add(const Eigen::MatrixXd& block) {
    if (block.rows() != mean_.rows())
      throw ConfigError("GramAccumulator: block row count mismatch");
    Eigen::MatrixXd outer = block * block.transpose();
    ++count_;
    mean_ += (outer - mean_) / static_cast<double>(count_);
  }

  long count() const { return count_; }
  const Eigen::MatrixXd& mean() const { return mean_; }
  // X X^T over all blocks seen so far.
  Eigen::MatrixXd gram() const { return mean_ * static_cast<double>(count_); }

 private:
  Eigen::MatrixXd mean_;
  long count_ = 0;
};

// Singular values of the implicit stacked matrix X from its Gram matrix
// G = X X^T: square roots of the eigenvalues (clamped at zero), descending.
inline Eigen::VectorXd singular_values_descending(const Eigen::MatrixXd& gram) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw SolverError("eigendecomposition of Gram matrix failed");
  const Eigen::VectorXd& ev = eig.eigenvalues();  // ascending
  Eigen::VectorXd sv(ev.size());
  for (long i = 0; i < ev.size(); ++i) sv[i] = std::sqrt(std::max(ev[ev.size() - 1 - i], 0.0));
  return sv;
}

// Indices (into the descending singular basis) whose relative singular value
// falls below max((sv_last/sv_first)^(1/p), floor). The last index always
// qualifies for p >= 1; a vanishing leading singular value degenerates to the
// minimal singular vector alone.
inline std::vector<int> candidate_set(const Eigen::VectorXd& sv, double p, double floor) {
  if (!(p >= 1.0)) throw ConfigError("candidate_set: p must be at least 1");
  const long n = sv.size();
  if (n == 0) throw ConfigError("candidate_set: empty singular value list");
  if (!(sv[0] > 0.0)) return {static_cast<int>(n - 1)};
  const double threshold = std::max(std::pow(sv[n - 1] / sv[0], 1.0 / p), floor);
  std::vector<int> out;
  for (long i = 0; i < n; ++i)
    if (sv[i] / sv[0] <= threshold) out.push_back(static_cast<int>(i));
  if (out.empty()) out.push_back(static_cast<int>(n - 1));
  return out;
}

struct SourceSelection {
  Eigen::VectorXd scaled;       // selected source in sqrt-measure coordinates, unit norm
  std::vector<int> candidates;  // candidate indices that spanned the search space
  double objective_value = 0.0;
};

// Stabilized source selection: within the span of the candidate singular
// vectors, extremize the distance-weighted norm sum_K w_K v_K^2 over unit
// vectors v. Since the candidate basis is orthonormal this is a small
// symmetric eigenproblem. Ties fall to the eigensolver's deterministic
// ordering (first extremal column); the sign is fixed by making the largest
// component positive (first occurrence on ties).
inline SourceSelection select_source(const Eigen::MatrixXd& gram, const Eigen::VectorXd& weights,
                                     const SamplingConfig& cfg) {
  const long n = gram.rows();
  if (weights.size() != n) throw ConfigError("select_source: weight count mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw SolverError("eigendecomposition of Gram matrix failed");
  Eigen::VectorXd sv(n);
  for (long i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(eig.eigenvalues()[n - 1 - i], 0.0));
  const std::vector<int> cand = candidate_set(sv, cfg.p, cfg.threshold_floor);
  Eigen::MatrixXd qc(n, static_cast<long>(cand.size()));
  for (std::size_t k = 0; k < cand.size(); ++k)
    qc.col(static_cast<long>(k)) = eig.eigenvectors().col(n - 1 - cand[k]);
  Eigen::MatrixXd weighted = qc.transpose() * weights.asDiagonal() * qc;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> inner(0.5 * (weighted + weighted.transpose()));
  if (inner.info() != Eigen::Success) throw SolverError("source selection eigenproblem failed");
  const long pick = cfg.objective == SamplingConfig::Objective::kMinimize
                        ? 0
                        : static_cast<long>(cand.size()) - 1;
  Eigen::VectorXd v = qc * inner.eigenvectors().col(pick);
  long arg = 0;
  for (long i = 1; i < n; ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  if (v[arg] < 0.0) v = -v;
  return SourceSelection{std::move(v), cand, inner.eigenvalues()[pick]};
}

enum class SamplerMode { kPseudo, kCommonRandom, kLowDiscrepancy };

enum class SourceKind { kSlod, kLod };

// Sample access for one patch: coefficient realization per sample index
// (restricted to the patch region) and one boundary-data column per sampled
// basis direction. Boundary columns are indexed by column, not by sample, so
// the same columns are reused across coefficient samples.
struct PatchSampler {
  std::function<std::vector<double>(std::uint64_t)> coefficient;
  std::function<Eigen::VectorXd(int)> boundary_column;
};

inline PatchSampler make_patch_sampler(const GridSpec& g, const FieldLaw& law,
                                       const SeedScheme& seeds, const Patch& patch,
                                       std::uint64_t stream_id, SamplerMode mode) {
  const Region region = make_region(patch);
  const long n_art = static_cast<long>(region.artificial_nodes().size());
  PatchSampler s;
  s.coefficient = [g, law, seeds, region, stream_id, mode](std::uint64_t i) {
    switch (mode) {
      case SamplerMode::kPseudo:
        return restrict_field(sample_field(g, law, seeds, StreamPurpose::kBasisSampling, stream_id, i),
                              g, region);
      case SamplerMode::kCommonRandom:
        return restrict_field(sample_field(g, law, seeds, StreamPurpose::kReference, 0, i), g, region);
      case SamplerMode::kLowDiscrepancy:
        return restrict_field(sample_field_lowdiscrepancy(g, law, i), g, region);
    }
    throw ConfigError("unknown sampler mode");
  };
  s.boundary_column = [seeds, stream_id, n_art](int j) {
    CounterRng rng(seeds.stream_key(StreamPurpose::kBoundaryData, stream_id,
                                    static_cast<std::uint64_t>(j)));
    Eigen::VectorXd col(n_art);
    do {
      for (long k = 0; k < n_art; ++k) col[k] = rng.next_normal();
    } while (col.norm() == 0.0);
    return col;
  };
  return s;
}

// P0 source density on the patch elements (unit L2 norm over the patch).
struct LocalSourceTerm {
  ElementIndex center;
  int ell = 1;
  Eigen::VectorXd values;
};

struct LocalBasis {
  LocalSourceTerm source;
  double sigma_t = 0.0;             // calibrated localization error indicator
  Eigen::VectorXd singular_values;  // calibrated spectrum, descending (diagnostics)
  Eigen::VectorXd mean_response;    // empirical mean of the projected local responses
  Eigen::VectorXd response_m2;      // second central moments (diagnostics)
  int m = 0;                        // sampled space dimension
  int sample_count = 0;
  std::vector<int> selected;        // candidate indices spanning the selection
};

struct LocalBasisOptions {
  SourceKind kind = SourceKind::kSlod;
  bool with_response = true;
};

// Runs the per-patch pipeline. Phase one streams M coefficient samples: each
// sample harmonically extends the fixed boundary-data columns, normalizes the
// extensions in H1, projects them to coarse averages and accumulates the Gram
// matrix; singular values are calibrated by 1/sqrt(mM). The source is then
// either the distance-weighted selection from the near-kernel candidates
// (standard kind) or the normalized mean multiplier of the bubble correction
// (comparator kind). Phase two streams the same samples again, solving the
// patch Dirichlet problem with the selected source and averaging the
// projected responses. Sample loops run strictly in index order, so results
// do not depend on threading; boundary columns are reused across samples, so
// a deterministic coefficient law yields bit-identical results for any M.
inline LocalBasis compute_local_basis(const Patch& patch, const PatchSampler& sampler,
                                      const SamplingConfig& cfg,
                                      const LocalBasisOptions& opt = {}) {
  cfg.validate();
  const Region region = make_region(patch);
  const long n_elems = patch.element_count();
  const int m = cfg.m_factor * static_cast<int>(n_elems);
  const double measure = patch.grid.cell_measure(patch.grid.log_coarse);
  const P0ConstraintMatrix proj =
      p0_constraints(region, patch.grid.log_coarse, P0Scaling::kSqrtMeasure);
  const long n_art = static_cast<long>(region.artificial_nodes().size());
  if (n_art == 0) throw GridError("compute_local_basis: patch has no artificial boundary");

  RowMat boundary(n_art, m);
  for (int j = 0; j < m; ++j) boundary.col(j) = sampler.boundary_column(j);

  const Eigen::SparseMatrix<double, Eigen::RowMajor> h1_combo = h1_combo_matrix(region);
  GramAccumulator acc(n_elems);
  for (int i = 0; i < cfg.M; ++i) {
    SparseOperator op = assemble_stiffness(region, sampler.coefficient(static_cast<std::uint64_t>(i)));
    const RowMat ext = harmonic_extension_multi(op, boundary);
    const Eigen::VectorXd nsq = h1_norm_sq_cols(h1_combo, ext);
    Eigen::MatrixXd p = proj.rows * ext;
    for (int j = 0; j < m; ++j) {
      if (!(nsq[j] > 0.0))
        throw SolverError("compute_local_basis: extension column has zero H1 norm");
      p.col(j) /= std::sqrt(nsq[j]);
    }
    acc.add(p);
  }
  const Eigen::MatrixXd gram_mean = acc.mean();
  Eigen::VectorXd sv = singular_values_descending(gram_mean);
  for (long i = 0; i < sv.size(); ++i) sv[i] /= std::sqrt(static_cast<double>(m));

  LocalBasis out;
  out.source.center = patch.center;
  out.source.ell = patch.ell;
  out.m = m;
  out.sample_count = cfg.M;
  out.singular_values = sv;

  Eigen::VectorXd scaled;
  if (opt.kind == SourceKind::kSlod) {
    SourceSelection sel = select_source(gram_mean, weight_function(patch, cfg.r), cfg);
    scaled = std::move(sel.scaled);
    out.selected = std::move(sel.candidates);
    out.sigma_t = sv[sv.size() - 1];
  } else {
    const Eigen::VectorXd density = mean_lod_source(patch, sampler.coefficient, cfg.M);
    scaled = density * std::sqrt(measure);
    out.sigma_t = std::sqrt(std::max(scaled.dot(gram_mean * scaled), 0.0) /
                            static_cast<double>(m));
  }
  out.source.values = scaled / std::sqrt(measure);

  if (opt.with_response) {
    const Eigen::VectorXd load = assemble_load_p0(region, out.source.values, patch.grid.log_coarse);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_elems);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(n_elems);
    for (int i = 0; i < cfg.M; ++i) {
      SparseOperator op =
          assemble_stiffness(region, sampler.coefficient(static_cast<std::uint64_t>(i)));
      const FineFunction sol = solve_dirichlet(op, load);
      const Eigen::VectorXd resp = project_p0(region, sol.nodal, patch.grid.log_coarse);
      const Eigen::VectorXd delta = resp - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta.cwiseProduct(resp - mean);
    }
    out.mean_response = std::move(mean);
    out.response_m2 = std::move(m2);
  } else {
    out.mean_response = Eigen::VectorXd::Zero(n_elems);
    out.response_m2 = Eigen::VectorXd::Zero(n_elems);
  }
  return out;
}

// Geometry-class partition of the coarse elements: two elements share a class
// when their patches have the same per-axis extents and touch the domain
// boundary the same way, so (for per-class seeded streams) the pipeline
// output of one is the literal translate of the other. Without stationarity
// every element is its own class. Elements with ell_effective < 0 are skipped.
struct PatchClassPartition {
  std::vector<long> representative_of;  // -1 for skipped elements
  std::vector<long> representatives;    // ascending
};

inline PatchClassPartition partition_by_geometry(const GridSpec& g,
                                                 const std::vector<int>& ell_eff,
                                                 bool stationarity) {
  const long n = g.coarse_count();
  if (ell_eff.size() != static_cast<std::size_t>(n))
    throw ConfigError("partition_by_geometry: ell list size mismatch");
  PatchClassPartition out;
  out.representative_of.assign(static_cast<std::size_t>(n), -1);
  std::map<std::array<int, 9>, long> seen;
  for (long id = 0; id < n; ++id) {
    const int ell = ell_eff[static_cast<std::size_t>(id)];
    if (ell < 0) continue;
    if (!stationarity) {
      out.representative_of[static_cast<std::size_t>(id)] = id;
      out.representatives.push_back(id);
      continue;
    }
    const Patch p = make_patch(g, element_from_linear(g, id), ell);
    std::array<int, 9> key{};
    key[0] = ell;
    for (int a = 0; a < g.dim; ++a) {
      const int c = a == 0 ? p.center.ix : p.center.iy;
      key[1 + 4 * a] = c - p.lo[a];
      key[2 + 4 * a] = p.hi[a] - c;
      key[3 + 4 * a] = p.lo[a] == 0 ? 1 : 0;
      key[4 + 4 * a] = p.hi[a] == g.coarse_per_axis() - 1 ? 1 : 0;
    }
    auto [it, inserted] = seen.emplace(key, id);
    if (inserted) out.representatives.push_back(id);
    out.representative_of[static_cast<std::size_t>(id)] = it->second;
  }
  return out;
}

struct ModelOptions {
  int ell = 2;
  SourceKind kind = SourceKind::kSlod;
  SamplerMode sampler = SamplerMode::kPseudo;
  bool stationarity = false;
  bool with_response = true;
  int threads = 1;
  std::string cache_dir;  // empty disables the per-patch cache
};

// Coarse surrogate model: one local source term and mean response per coarse
// element, plus the global expansion matrix whose column T is the
// zero-extension of source T in sqrt-measure coordinates. The source Gram
// matrix G = B^T B yields the Riesz bound 1/lambda_min(G).
struct CoarseModel {
  GridSpec grid;
  FieldLaw law;
  SamplingConfig sampling;
  SeedScheme seeds;
  ModelOptions options;
  std::vector<LocalBasis> bases;
  std::vector<int> ell_effective;
  Eigen::SparseMatrix<double> expansion;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double crb = 0.0;
  double sigma = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::uint64_t hash_bytes(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string basis_cache_key(const GridSpec& g, const FieldLaw& law,
                                   const SamplingConfig& cfg, const SeedScheme& seeds,
                                   const ModelOptions& opt, long element_id, int ell_eff) {
  std::ostringstream os;
  os << "v1|" << g.dim << ' ' << g.log_coarse << ' ' << g.log_eps << ' ' << g.log_fine << '|'
     << format_full(law.alpha) << ' ' << format_full(law.beta) << '|' << cfg.M << ' '
     << cfg.m_factor << ' ' << format_full(cfg.p) << ' ' << format_full(cfg.r) << ' '
     << format_full(cfg.threshold_floor) << ' '
     << (cfg.objective == SamplingConfig::Objective::kMinimize ? "min" : "max") << '|'
     << seeds.global_seed << '|' << (opt.kind == SourceKind::kSlod ? "slod" : "lod") << '|'
     << static_cast<int>(opt.sampler) << '|' << (opt.with_response ? 1 : 0) << '|' << element_id
     << '|' << ell_eff;
  std::ostringstream hex;
  hex << std::hex << hash_bytes(os.str());
  return hex.str();
}

inline void write_vector(std::ostream& os, const char* tag, const Eigen::VectorXd& v) {
  os << tag << ' ' << v.size();
  for (long i = 0; i < v.size(); ++i) os << ' ' << format_full(v[i]);
  os << '\n';
}

}  // namespace detail

// Grid parameters are part of the file name so sweeps over several meshes can
// share one cache directory without colliding; everything else that affects
// the content is covered by the key hash inside the file.
inline std::filesystem::path basis_cache_path(const std::string& dir, const GridSpec& g,
                                              long element_id, int ell_eff, SourceKind kind) {
  std::ostringstream name;
  name << "basis_d" << g.dim << "_H" << g.log_coarse << "_e" << g.log_eps << "_h" << g.log_fine
       << "_" << element_id << "_ell" << ell_eff
       << (kind == SourceKind::kSlod ? "_slod" : "_lod") << ".txt";
  return std::filesystem::path(dir) / name.str();
}

inline void write_basis_cache(const std::string& dir, const GridSpec& g, const std::string& key,
                              long element_id, const LocalBasis& basis, int ell_eff,
                              SourceKind kind) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = basis_cache_path(dir, g, element_id, ell_eff, kind);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot write basis cache file " + tmp);
    os << "stochhom-basis-cache v1\n";
    os << "key " << key << '\n';
    os << "center " << basis.source.center.ix << ' ' << basis.source.center.iy << '\n';
    os << "ell " << basis.source.ell << '\n';
    os << "m " << basis.m << " samples " << basis.sample_count << '\n';
    os << "sigma " << detail::format_full(basis.sigma_t) << '\n';
    detail::write_vector(os, "svals", basis.singular_values);
    detail::write_vector(os, "source", basis.source.values);
    detail::write_vector(os, "response", basis.mean_response);
    detail::write_vector(os, "m2", basis.response_m2);
    os << "selected " << basis.selected.size();
    for (int idx : basis.selected) os << ' ' << idx;
    os << '\n';
    if (!os) throw IoError("failed while writing basis cache file " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Returns the cached basis if the file exists and its key matches; otherwise
// nothing (the caller recomputes and records a warning if the file existed).
inline std::optional<LocalBasis> read_basis_cache(const std::string& dir, const GridSpec& g,
                                                  const std::string& key, long element_id,
                                                  int ell_eff, SourceKind kind, bool* stale) {
  if (stale) *stale = false;
  const auto path = basis_cache_path(dir, g, element_id, ell_eff, kind);
  std::ifstream is(path);
  if (!is) return std::nullopt;
  auto fail = [&]() {
    if (stale) *stale = true;
    return std::nullopt;
  };
  std::string word;
  std::string line;
  if (!std::getline(is, line) || line != "stochhom-basis-cache v1") return fail();
  std::string file_key;
  if (!(is >> word >> file_key) || word != "key" || file_key != key) return fail();
  LocalBasis b;
  long n = 0;
  if (!(is >> word >> b.source.center.ix >> b.source.center.iy) || word != "center") return fail();
  if (!(is >> word >> b.source.ell) || word != "ell") return fail();
  if (!(is >> word >> b.m) || word != "m") return fail();
  if (!(is >> word >> b.sample_count) || word != "samples") return fail();
  if (!(is >> word >> b.sigma_t) || word != "sigma") return fail();
  auto read_vec = [&](const char* tag, Eigen::VectorXd& v) {
    if (!(is >> word >> n) || word != tag || n < 0) return false;
    v.resize(n);
    for (long i = 0; i < n; ++i)
      if (!(is >> v[i])) return false;
    return true;
  };
  if (!read_vec("svals", b.singular_values)) return fail();
  if (!read_vec("source", b.source.values)) return fail();
  if (!read_vec("response", b.mean_response)) return fail();
  if (!read_vec("m2", b.response_m2)) return fail();
  if (!(is >> word >> n) || word != "selected" || n < 0) return fail();
  b.selected.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    if (!(is >> b.selected[static_cast<std::size_t>(i)])) return fail();
  return b;
}

// Runs the per-patch pipeline for every class representative, honoring the
// cache when a directory is set. Representatives are processed in parallel
// into indexed slots, so the result is independent of the thread count.
inline std::vector<LocalBasis> compute_representatives(
    const GridSpec& grid, const FieldLaw& law, const SamplingConfig& sampling,
    const SeedScheme& seeds, const ModelOptions& options, const std::vector<int>& ell_eff,
    const PatchClassPartition& classes, std::vector<std::string>* warnings) {
  if (options.stationarity && options.sampler != SamplerMode::kPseudo)
    throw ConfigError(
        "stationarity requires independent per-patch streams; disable it for common-random-number "
        "or low-discrepancy sampling");
  std::vector<LocalBasis> rep_results(classes.representatives.size());
  std::vector<std::string> rep_warnings(classes.representatives.size());
  parallel_for(classes.representatives.size(), options.threads, [&](std::size_t k) {
    const long rep = classes.representatives[k];
    const int ell = ell_eff[static_cast<std::size_t>(rep)];
    std::string key;
    if (!options.cache_dir.empty()) {
      key = detail::basis_cache_key(grid, law, sampling, seeds, options, rep, ell);
      bool stale = false;
      if (auto cached =
              read_basis_cache(options.cache_dir, grid, key, rep, ell, options.kind, &stale)) {
        rep_results[k] = std::move(*cached);
        return;
      }
      if (stale)
        rep_warnings[k] = "cache-recomputed:" + std::to_string(rep);
    }
    const Patch patch = make_patch(grid, element_from_linear(grid, rep), ell);
    const PatchSampler sampler =
        make_patch_sampler(grid, law, seeds, patch, static_cast<std::uint64_t>(rep), options.sampler);
    rep_results[k] = compute_local_basis(patch, sampler, sampling,
                                         LocalBasisOptions{options.kind, options.with_response});
    if (!options.cache_dir.empty())
      write_basis_cache(options.cache_dir, grid, key, rep, rep_results[k], ell, options.kind);
  });
  if (warnings)
    for (const auto& w : rep_warnings)
      if (!w.empty()) warnings->push_back(w);
  return rep_results;
}

// Builds the full coarse model. Patches that would cover the whole domain are
// shrunk to the largest proper neighborhood order (recorded per element in
// ell_effective, with a warning). Under stationarity, one pipeline runs per
// geometry class with streams keyed to the class representative, and every
// member receives the representative's data verbatim (patch-local layouts of
// translates are identical).
inline CoarseModel build_coarse_model(const GridSpec& grid, const FieldLaw& law,
                                      const SamplingConfig& sampling, const SeedScheme& seeds,
                                      const ModelOptions& options) {
  law.validate();
  sampling.validate();
  const long n_elems = grid.coarse_count();
  CoarseModel model;
  model.grid = grid;
  model.law = law;
  model.sampling = sampling;
  model.seeds = seeds;
  model.options = options;
  model.ell_effective.resize(static_cast<std::size_t>(n_elems));
  long reduced = 0;
  for (long id = 0; id < n_elems; ++id) {
    const int ell = max_proper_ell(grid, element_from_linear(grid, id), options.ell);
    if (ell == 0)
      throw GridError("build_coarse_model: no proper patch exists around element " +
                      std::to_string(id) + "; refine the coarse mesh");
    if (ell < options.ell) ++reduced;
    model.ell_effective[static_cast<std::size_t>(id)] = ell;
  }
  if (reduced > 0) model.warnings.push_back("ell-reduced:" + std::to_string(reduced));
  const PatchClassPartition classes =
      partition_by_geometry(grid, model.ell_effective, options.stationarity);
  std::vector<LocalBasis> rep_results = compute_representatives(
      grid, law, sampling, seeds, options, model.ell_effective, classes, &model.warnings);

  std::map<long, std::size_t> rep_slot;
  for (std::size_t k = 0; k < classes.representatives.size(); ++k)
    rep_slot[classes.representatives[k]] = k;
  model.bases.resize(static_cast<std::size_t>(n_elems));
  for (long id = 0; id < n_elems; ++id) {
    const long rep = classes.representative_of[static_cast<std::size_t>(id)];
    LocalBasis b = rep_results[rep_slot.at(rep)];
    b.source.center = element_from_linear(grid, id);
    model.bases[static_cast<std::size_t>(id)] = std::move(b);
  }

  // global expansion matrix: column T holds source T, zero-extended, in
  // sqrt-measure coordinates (Euclidean norms are L2 norms)
  const double sqrt_measure = std::sqrt(grid.cell_measure(grid.log_coarse));
  std::vector<Eigen::Triplet<double>> trips;
  for (long id = 0; id < n_elems; ++id) {
    const LocalBasis& b = model.bases[static_cast<std::size_t>(id)];
    const Patch patch = make_patch(grid, b.source.center,
                                   model.ell_effective[static_cast<std::size_t>(id)]);
    const auto elems = patch.elements();
    for (std::size_t k = 0; k < elems.size(); ++k)
      trips.emplace_back(static_cast<int>(element_linear(grid, elems[k])), static_cast<int>(id),
                         b.source.values[static_cast<long>(k)] * sqrt_measure);
  }
  model.expansion.resize(n_elems, n_elems);
  model.expansion.setFromTriplets(trips.begin(), trips.end());

  const Eigen::MatrixXd source_gram =
      Eigen::MatrixXd(Eigen::SparseMatrix<double>(model.expansion.transpose()) * model.expansion);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(source_gram);
  if (eig.info() != Eigen::Success)
    throw SolverError("eigendecomposition of the source Gram matrix failed");
  model.lambda_min = eig.eigenvalues()[0];
  model.lambda_max = eig.eigenvalues()[n_elems - 1];
  if (!(model.lambda_min > 0.0))
    throw SolverError(
        "local source terms are not a Riesz basis (lambda_min <= 0); increase the selection "
        "weight exponent r or tighten the candidate threshold exponent p to stabilize the "
        "weighted selection");
  model.crb = 1.0 / model.lambda_min;
  model.sigma = 0.0;
  for (const auto& b : model.bases) model.sigma = std::max(model.sigma, b.sigma_t);
  return model;
}

// Coarse solution for a P0 right-hand side (plain cell averages over the
// coarse mesh): expand f in the local sources, then combine the mean local
// responses with the expansion coefficients. Accumulation order is fixed.
inline Eigen::VectorXd assemble_coarse_solution(const CoarseModel& model,
                                                const Eigen::VectorXd& f_coarse) {
  const long n = model.grid.coarse_count();
  if (f_coarse.size() != n)
    throw ConfigError("assemble_coarse_solution: right-hand side has wrong size");
  if (!(model.lambda_min > 0.0) ||
      std::sqrt(model.lambda_max / model.lambda_min) > 1e12)
    throw SolverError(
        "assemble_coarse_solution: source expansion is too ill-conditioned; increase the "
        "selection weight exponent r or tighten the candidate threshold exponent p to stabilize "
        "the weighted selection");
  const double sqrt_measure = std::sqrt(model.grid.cell_measure(model.grid.log_coarse));
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(model.expansion);
  if (lu.info() != Eigen::Success)
    throw SolverError("assemble_coarse_solution: expansion matrix is singular");
  const Eigen::VectorXd f_scaled = f_coarse * sqrt_measure;
  const Eigen::VectorXd c = lu.solve(f_scaled);
  const double resid = (model.expansion * c - f_scaled).norm();
  if (!(resid <= 1e-9 * std::max(1.0, f_scaled.norm())))
    throw SolverError("assemble_coarse_solution: expansion residual check failed");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  for (long id = 0; id < n; ++id) {
    const LocalBasis& b = model.bases[static_cast<std::size_t>(id)];
    const Patch patch = make_patch(model.grid, b.source.center,
                                   model.ell_effective[static_cast<std::size_t>(id)]);
    const auto elems = patch.elements();
    for (std::size_t k = 0; k < elems.size(); ++k)
      u[element_linear(model.grid, elems[k])] += c[id] * b.mean_response[static_cast<long>(k)];
  }
  return u;
}

}  // namespace stochhom
