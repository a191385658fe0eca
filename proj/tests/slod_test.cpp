#include "stochhom/slod.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "test_util.hpp"

namespace stochhom {
namespace {

using testing::bit_equal;
using testing::temp_dir;

TEST(Gram, AccumulatorMatchesDirectSum) {
  std::vector<Eigen::MatrixXd> blocks;
  for (int i = 0; i < 5; ++i) {
    Eigen::MatrixXd b(3, 4);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) b(r, c) = std::sin(1.0 + i + 0.37 * r + 1.7 * c);
    blocks.push_back(b);
  }
  GramAccumulator acc(3);
  Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(3, 3);
  for (const auto& b : blocks) {
    acc.add(b);
    direct += b * b.transpose();
  }
  EXPECT_EQ(acc.count(), 5);
  EXPECT_LT((acc.gram() - direct).norm(), 1e-13 * direct.norm());
  EXPECT_LT((acc.mean() - direct / 5.0).norm(), 1e-13 * direct.norm());
  EXPECT_THROW(acc.add(Eigen::MatrixXd::Zero(2, 4)), ConfigError);
}

TEST(Gram, RunningMeanIsBitStableOnIdenticalBlocks) {
  Eigen::MatrixXd b(2, 3);
  b << 0.1, -0.7, 0.3, 1.1, 0.2, -0.4;
  GramAccumulator acc(2);
  acc.add(b);
  const Eigen::MatrixXd after_one = acc.mean();
  for (int i = 0; i < 99; ++i) acc.add(b);
  const Eigen::MatrixXd after_hundred = acc.mean();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) EXPECT_EQ(after_one(r, c), after_hundred(r, c));
}

TEST(Spectrum, MatchesSvdOfStackedMatrix) {
  // full-rank input: singular values from the squared (Gram) route lose half
  // the digits near zero, so rank-deficient comparisons would be meaningless
  const Eigen::VectorXd entries = testing::random_vector(24, 42);
  Eigen::MatrixXd x(4, 6);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) x(r, c) = entries[r * 6 + c];
  const Eigen::VectorXd sv = singular_values_descending(x * x.transpose());
  const Eigen::VectorXd ref = Eigen::JacobiSVD<Eigen::MatrixXd>(x).singularValues();
  ASSERT_EQ(sv.size(), 4);
  ASSERT_GT(ref[3], 1e-3 * ref[0]);  // premise: comfortably full rank
  for (long i = 0; i < 4; ++i) EXPECT_NEAR(sv[i], ref[i], 1e-10 * ref[0]);
}

TEST(Spectrum, ClampsNegativeRoundoffToZero) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
  g(0, 0) = 1.0;
  g(1, 1) = -1e-18;  // roundoff-scale negative eigenvalue
  const Eigen::VectorXd sv = singular_values_descending(g);
  EXPECT_DOUBLE_EQ(sv[0], 1.0);
  EXPECT_EQ(sv[1], 0.0);
}

TEST(CandidateSet, ThresholdCases) {
  Eigen::VectorXd sv(4);
  sv << 1.0, 0.5, 0.01, 1e-6;
  // p=2: threshold sqrt(1e-6) = 1e-3, only the last ratio qualifies
  EXPECT_EQ(candidate_set(sv, 2.0, 1e-10), (std::vector<int>{3}));
  // p=1: threshold is the last ratio itself
  EXPECT_EQ(candidate_set(sv, 1.0, 1e-10), (std::vector<int>{3}));
  // huge p: threshold tends to 1 from below, everything except the leader
  EXPECT_EQ(candidate_set(sv, 1e6, 1e-10), (std::vector<int>{1, 2, 3}));
  // floor dominates a tiny power threshold
  Eigen::VectorXd tail(3);
  tail << 1.0, 1e-20, 1e-30;
  EXPECT_EQ(candidate_set(tail, 1.5, 1e-10), (std::vector<int>{1, 2}));
  // all-equal spectrum: ratio threshold is 1, every index qualifies
  EXPECT_EQ(candidate_set(Eigen::VectorXd::Ones(3), 2.0, 1e-10), (std::vector<int>{0, 1, 2}));
  // degenerate leader falls back to the minimal direction
  EXPECT_EQ(candidate_set(Eigen::VectorXd::Zero(3), 2.0, 1e-10), (std::vector<int>{2}));
  EXPECT_THROW(candidate_set(sv, 0.5, 1e-10), ConfigError);
}

TEST(Selection, WeightedExtremizerOnDiagonalGram) {
  // gram eigenpairs: (1, e0), (4e-12, e2), (1e-12, e1); descending singular
  // basis order is e0, e2, e1 and the candidate set is {1, 2} for p = 2
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(3, 3);
  gram(0, 0) = 1.0;
  gram(1, 1) = 1e-12;
  gram(2, 2) = 4e-12;
  Eigen::VectorXd weights(3);
  weights << 5.0, 3.0, 7.0;
  SamplingConfig cfg;
  cfg.p = 2.0;
  const SourceSelection mini = select_source(gram, weights, cfg);
  EXPECT_EQ(mini.candidates, (std::vector<int>{1, 2}));
  EXPECT_NEAR(mini.objective_value, 3.0, 1e-9);
  EXPECT_NEAR(mini.scaled[1], 1.0, 1e-9);  // sign fixed positive
  EXPECT_NEAR(std::abs(mini.scaled[0]) + std::abs(mini.scaled[2]), 0.0, 1e-9);
  cfg.objective = SamplingConfig::Objective::kMaximize;
  const SourceSelection maxi = select_source(gram, weights, cfg);
  EXPECT_NEAR(maxi.objective_value, 7.0, 1e-9);
  EXPECT_NEAR(maxi.scaled[2], 1.0, 1e-9);
  EXPECT_NEAR(maxi.scaled.norm(), 1.0, 1e-12);
}

TEST(Selection, SingleCandidateReturnsMinimalSingularVector) {
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(3, 3);
  gram(0, 0) = 4.0;
  gram(1, 1) = 1.0;
  gram(2, 2) = 1e-8;
  SamplingConfig cfg;
  cfg.p = 2.0;
  const SourceSelection sel = select_source(gram, Eigen::VectorXd::Ones(3), cfg);
  EXPECT_EQ(sel.candidates, (std::vector<int>{2}));
  EXPECT_NEAR(sel.scaled[2], 1.0, 1e-9);
}

// Shared fixture objects for the patch pipeline tests.
struct PipelineSetup {
  GridSpec grid;
  FieldLaw law{0.1, 1.0};
  SeedScheme seeds{7};
  Patch patch;
  PatchSampler sampler;

  PipelineSetup(int dim, double alpha, double beta, SamplerMode mode = SamplerMode::kPseudo)
      : grid(build_hierarchy(dim, dim == 1 ? 3 : 2, dim == 1 ? 4 : 3, dim == 1 ? 6 : 5)),
        law{alpha, beta},
        patch(make_patch(grid, dim == 1 ? ElementIndex{3, 0} : ElementIndex{1, 1}, 1)),
        sampler(make_patch_sampler(grid, law, seeds, patch, 3, mode)) {}
};

TEST(PatchSampler, BoundaryColumnsAreReusableAndNonzero) {
  PipelineSetup s(1, 0.1, 1.0);
  const Eigen::VectorXd c0 = s.sampler.boundary_column(0);
  const Eigen::VectorXd c0_again = s.sampler.boundary_column(0);
  const Eigen::VectorXd c1 = s.sampler.boundary_column(1);
  EXPECT_TRUE(bit_equal(c0, c0_again));
  EXPECT_FALSE(bit_equal(c0, c1));
  EXPECT_GT(c0.norm(), 0.0);
  EXPECT_EQ(c0.size(), static_cast<long>(make_region(s.patch).artificial_nodes().size()));
}

TEST(PatchSampler, ModesDrawFromTheRightStreams) {
  const GridSpec g = build_hierarchy(1, 3, 4, 6);
  const FieldLaw law{0.1, 1.0};
  const SeedScheme seeds{7};
  const Patch patch = make_patch(g, ElementIndex{3, 0}, 1);
  const Region region = make_region(patch);

  const PatchSampler pseudo = make_patch_sampler(g, law, seeds, patch, 3, SamplerMode::kPseudo);
  const auto direct =
      restrict_field(sample_field(g, law, seeds, StreamPurpose::kBasisSampling, 3, 2), g, region);
  EXPECT_EQ(pseudo.coefficient(2), direct);

  // common random numbers: identical coefficients across patch streams
  const PatchSampler crn_a = make_patch_sampler(g, law, seeds, patch, 3, SamplerMode::kCommonRandom);
  const PatchSampler crn_b = make_patch_sampler(g, law, seeds, patch, 5, SamplerMode::kCommonRandom);
  const PatchSampler pseudo_b = make_patch_sampler(g, law, seeds, patch, 5, SamplerMode::kPseudo);
  EXPECT_EQ(crn_a.coefficient(4), crn_b.coefficient(4));
  EXPECT_NE(pseudo.coefficient(4), pseudo_b.coefficient(4));

  const PatchSampler ld = make_patch_sampler(g, law, seeds, patch, 3, SamplerMode::kLowDiscrepancy);
  EXPECT_EQ(ld.coefficient(6), restrict_field(sample_field_lowdiscrepancy(g, law, 6), g, region));
}

TEST(Pipeline, SourceHasUnitNormAndContractiveSpectrum) {
  for (int dim : {1, 2}) {
    PipelineSetup s(dim, 0.1, 1.0);
    SamplingConfig cfg;
    cfg.M = 4;
    cfg.m_factor = 2;
    const LocalBasis b = compute_local_basis(s.patch, s.sampler, cfg);
    const double measure = s.grid.cell_measure(s.grid.log_coarse);
    EXPECT_NEAR(b.source.values.squaredNorm() * measure, 1.0, 1e-12);
    EXPECT_EQ(b.m, cfg.m_factor * s.patch.element_count());
    EXPECT_EQ(b.sample_count, cfg.M);
    EXPECT_GT(b.sigma_t, 0.0);
    EXPECT_LT(b.sigma_t, 1.0);
    // H1-normalized columns project L2-contractively: calibrated spectrum has
    // total squared mass at most one
    EXPECT_LE(b.singular_values.squaredNorm(), 1.0 + 1e-12);
    // descending order, sigma equals the smallest calibrated value
    for (long i = 1; i < b.singular_values.size(); ++i)
      EXPECT_LE(b.singular_values[i], b.singular_values[i - 1]);
    EXPECT_DOUBLE_EQ(b.sigma_t, b.singular_values[b.singular_values.size() - 1]);
  }
}

TEST(Pipeline, OneDimensionalExtensionsHaveRankTwo) {
  // for one coefficient draw, 1D harmonic extensions form a two-parameter
  // family (one value per artificial endpoint), so the third calibrated
  // singular value vanishes up to eigensolver roundoff; with several draws
  // the averaged spectra mix distinct two-dimensional subspaces and the
  // third value is genuinely positive
  PipelineSetup s(1, 0.1, 1.0);
  SamplingConfig cfg;
  cfg.M = 1;
  cfg.m_factor = 3;
  const LocalBasis b = compute_local_basis(s.patch, s.sampler, cfg);
  ASSERT_EQ(b.singular_values.size(), 3);
  EXPECT_GT(b.singular_values[1], 1e-6 * b.singular_values[0]);
  EXPECT_LE(b.singular_values[2], 1e-7 * b.singular_values[0]);
}

TEST(Pipeline, DeterministicLawIsInvariantInSampleCount) {
  const double value = 0.7;
  PipelineSetup s(1, value, value);
  SamplingConfig cfg;
  cfg.m_factor = 2;
  cfg.M = 1;
  const LocalBasis one = compute_local_basis(s.patch, s.sampler, cfg);
  cfg.M = 100;
  const LocalBasis hundred = compute_local_basis(s.patch, s.sampler, cfg);
  EXPECT_TRUE(bit_equal(one.source.values, hundred.source.values));
  EXPECT_TRUE(bit_equal(one.singular_values, hundred.singular_values));
  EXPECT_TRUE(bit_equal(one.mean_response, hundred.mean_response));
  EXPECT_EQ(one.sigma_t, hundred.sigma_t);
  // identical responses leave the second central moment at exactly zero
  EXPECT_EQ(hundred.response_m2.norm(), 0.0);
}

TEST(Pipeline, ComparatorSourceMatchesMeanMultiplier) {
  PipelineSetup s(1, 0.4, 0.4);
  SamplingConfig cfg;
  cfg.M = 2;
  cfg.m_factor = 2;
  const LocalBasis b =
      compute_local_basis(s.patch, s.sampler, cfg, LocalBasisOptions{SourceKind::kLod, true});
  const Eigen::VectorXd direct = mean_lod_source(s.patch, s.sampler.coefficient, cfg.M);
  ASSERT_EQ(b.source.values.size(), direct.size());
  for (long i = 0; i < direct.size(); ++i) EXPECT_NEAR(b.source.values[i], direct[i], 1e-14);
  EXPECT_TRUE(std::isfinite(b.sigma_t));
  EXPECT_GE(b.sigma_t, 0.0);
}

TEST(Partition, GeometryClassesInOneDimension) {
  const GridSpec g = build_hierarchy(1, 3, 4, 5);
  const std::vector<int> ell_eff(8, 2);
  const PatchClassPartition part = partition_by_geometry(g, ell_eff, true);
  EXPECT_EQ(part.representatives, (std::vector<long>{0, 1, 2, 3, 5, 6, 7}));
  EXPECT_EQ(part.representative_of,
            (std::vector<long>{0, 1, 2, 3, 3, 5, 6, 7}));
}

TEST(Partition, SkipsAndIdentityWithoutStationarity) {
  const GridSpec g = build_hierarchy(1, 2, 3, 4);
  std::vector<int> ell_eff{1, -1, 1, 1};
  const PatchClassPartition off = partition_by_geometry(g, ell_eff, false);
  EXPECT_EQ(off.representatives, (std::vector<long>{0, 2, 3}));
  EXPECT_EQ(off.representative_of, (std::vector<long>{0, -1, 2, 3}));
  const PatchClassPartition on = partition_by_geometry(g, ell_eff, true);
  EXPECT_EQ(on.representative_of[1], -1);
  EXPECT_THROW(partition_by_geometry(g, std::vector<int>(3, 1), false), ConfigError);
}

ModelOptions small_options(int ell) {
  ModelOptions opt;
  opt.ell = ell;
  return opt;
}

SamplingConfig small_sampling(int M) {
  SamplingConfig cfg;
  cfg.M = M;
  cfg.m_factor = 2;
  return cfg;
}

TEST(Model, BuildsConsistentCoarseModel) {
  const GridSpec g = build_hierarchy(1, 2, 3, 5);
  const CoarseModel model =
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(3), SeedScheme{11}, small_options(1));
  ASSERT_EQ(model.bases.size(), 4u);
  const double measure = g.cell_measure(g.log_coarse);
  double max_sigma = 0.0;
  for (const auto& b : model.bases) {
    EXPECT_NEAR(b.source.values.squaredNorm() * measure, 1.0, 1e-12);
    max_sigma = std::max(max_sigma, b.sigma_t);
  }
  EXPECT_DOUBLE_EQ(model.sigma, max_sigma);
  EXPECT_GT(model.lambda_min, 0.0);
  EXPECT_GE(model.lambda_max, model.lambda_min);
  EXPECT_DOUBLE_EQ(model.crb, 1.0 / model.lambda_min);
  // expansion columns carry unit L2 norm sources
  for (int id = 0; id < 4; ++id)
    EXPECT_NEAR(Eigen::VectorXd(model.expansion.col(id)).squaredNorm(), 1.0, 1e-12);
  EXPECT_TRUE(model.warnings.empty());
}

TEST(Model, ReducesOversizedPatchesWithWarning) {
  const GridSpec g = build_hierarchy(1, 2, 3, 5);
  const CoarseModel model =
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(2), SeedScheme{11}, small_options(2));
  // the two central elements cannot carry a proper second-order patch
  EXPECT_EQ(model.ell_effective, (std::vector<int>{2, 1, 1, 2}));
  ASSERT_EQ(model.warnings.size(), 1u);
  EXPECT_EQ(model.warnings[0], "ell-reduced:2");
}

TEST(Model, FailsWhenNoProperPatchExists) {
  const GridSpec g = build_hierarchy(1, 1, 2, 4);
  EXPECT_THROW(
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(2), SeedScheme{11}, small_options(1)),
      GridError);
}

TEST(Model, StationarityRejectsDependentSamplers) {
  const GridSpec g = build_hierarchy(1, 2, 3, 5);
  ModelOptions opt = small_options(1);
  opt.stationarity = true;
  opt.sampler = SamplerMode::kCommonRandom;
  EXPECT_THROW(
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(2), SeedScheme{11}, opt),
      ConfigError);
  opt.sampler = SamplerMode::kLowDiscrepancy;
  EXPECT_THROW(
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(2), SeedScheme{11}, opt),
      ConfigError);
}

TEST(Model, StationarityCopiesRepresentativeData) {
  const GridSpec g = build_hierarchy(1, 3, 4, 6);
  ModelOptions opt = small_options(1);
  opt.stationarity = true;
  const CoarseModel model =
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(2), SeedScheme{11}, opt);
  // elements 2..5 share one geometry class; the members carry the
  // representative's data verbatim, relabeled to their own center
  for (long id = 3; id <= 5; ++id) {
    EXPECT_TRUE(bit_equal(model.bases[2].source.values, model.bases[id].source.values));
    EXPECT_EQ(model.bases[2].sigma_t, model.bases[id].sigma_t);
    EXPECT_EQ(model.bases[id].source.center.ix, static_cast<int>(id));
  }
  // boundary classes differ from the interior class
  EXPECT_FALSE(bit_equal(model.bases[0].source.values, model.bases[2].source.values));

  // stationarity changes which streams feed the members, not the contract:
  // a non-stationary model agrees on every representative element
  const CoarseModel plain =
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(2), SeedScheme{11}, small_options(1));
  EXPECT_TRUE(bit_equal(plain.bases[2].source.values, model.bases[2].source.values));
}

TEST(Model, TwoDimensionalBuildStaysProper) {
  const GridSpec g = build_hierarchy(2, 2, 2, 4);
  const CoarseModel model =
      build_coarse_model(g, FieldLaw{0.5, 1.0}, small_sampling(2), SeedScheme{3}, small_options(1));
  ASSERT_EQ(model.bases.size(), 16u);
  EXPECT_GT(model.lambda_min, 0.0);
  for (const auto& b : model.bases) EXPECT_GT(b.sigma_t, 0.0);
}

TEST(Solution, ZeroAndLinearity) {
  const GridSpec g = build_hierarchy(1, 2, 3, 5);
  const CoarseModel model =
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(3), SeedScheme{11}, small_options(1));
  const long n = g.coarse_count();
  EXPECT_EQ(assemble_coarse_solution(model, Eigen::VectorXd::Zero(n)).norm(), 0.0);
  const Eigen::VectorXd f1 = testing::random_vector(n, 5);
  const Eigen::VectorXd f2 = testing::random_vector(n, 6);
  const Eigen::VectorXd lhs = assemble_coarse_solution(model, (f1 + 2.0 * f2).eval());
  const Eigen::VectorXd rhs =
      assemble_coarse_solution(model, f1) + 2.0 * assemble_coarse_solution(model, f2);
  EXPECT_LT((lhs - rhs).norm(), 1e-10 * std::max(1.0, rhs.norm()));
  EXPECT_THROW(assemble_coarse_solution(model, Eigen::VectorXd::Zero(n + 1)), ConfigError);
}

TEST(Solution, RefusesIllConditionedExpansion) {
  const GridSpec g = build_hierarchy(1, 2, 3, 5);
  CoarseModel model =
      build_coarse_model(g, FieldLaw{0.1, 1.0}, small_sampling(2), SeedScheme{11}, small_options(1));
  const Eigen::VectorXd f = Eigen::VectorXd::Ones(g.coarse_count());
  model.lambda_min = 0.0;
  try {
    assemble_coarse_solution(model, f);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("selection weight exponent r"), std::string::npos);
  }
  model.lambda_min = 1e-30;
  model.lambda_max = 1.0;
  EXPECT_THROW(assemble_coarse_solution(model, f), SolverError);
}

TEST(Cache, RoundTripPreservesEveryBit) {
  const std::string dir = temp_dir("cache_rt");
  PipelineSetup s(1, 0.1, 1.0);
  SamplingConfig cfg = small_sampling(2);
  LocalBasis b = compute_local_basis(s.patch, s.sampler, cfg);
  b.selected = {0, 2};
  write_basis_cache(dir, s.grid, "deadbeef", 3, b, 1, SourceKind::kSlod);
  bool stale = true;
  const auto back = read_basis_cache(dir, s.grid, "deadbeef", 3, 1, SourceKind::kSlod, &stale);
  ASSERT_TRUE(back.has_value());
  EXPECT_FALSE(stale);
  EXPECT_TRUE(bit_equal(b.source.values, back->source.values));
  EXPECT_TRUE(bit_equal(b.singular_values, back->singular_values));
  EXPECT_TRUE(bit_equal(b.mean_response, back->mean_response));
  EXPECT_TRUE(bit_equal(b.response_m2, back->response_m2));
  EXPECT_EQ(b.sigma_t, back->sigma_t);
  EXPECT_EQ(b.m, back->m);
  EXPECT_EQ(b.sample_count, back->sample_count);
  EXPECT_EQ(b.selected, back->selected);
  EXPECT_EQ(b.source.center.ix, back->source.center.ix);
  EXPECT_EQ(b.source.ell, back->source.ell);

  // missing file: no value, not stale
  const auto missing = read_basis_cache(dir, s.grid, "deadbeef", 4, 1, SourceKind::kSlod, &stale);
  EXPECT_FALSE(missing.has_value());
  EXPECT_FALSE(stale);
  // key mismatch: no value, stale
  const auto wrong = read_basis_cache(dir, s.grid, "feedface", 3, 1, SourceKind::kSlod, &stale);
  EXPECT_FALSE(wrong.has_value());
  EXPECT_TRUE(stale);
  std::filesystem::remove_all(dir);
}

TEST(Cache, PathSeparatesGridsAndKinds) {
  const GridSpec a = build_hierarchy(2, 2, 3, 5);
  const GridSpec b = build_hierarchy(2, 3, 3, 5);
  EXPECT_NE(basis_cache_path("x", a, 7, 2, SourceKind::kSlod),
            basis_cache_path("x", b, 7, 2, SourceKind::kSlod));
  EXPECT_NE(basis_cache_path("x", a, 7, 2, SourceKind::kSlod),
            basis_cache_path("x", a, 7, 2, SourceKind::kLod));
  EXPECT_NE(basis_cache_path("x", a, 7, 2, SourceKind::kSlod),
            basis_cache_path("x", a, 7, 1, SourceKind::kSlod));
  EXPECT_NE(basis_cache_path("x", a, 7, 2, SourceKind::kSlod),
            basis_cache_path("x", a, 8, 2, SourceKind::kSlod));
}

TEST(Cache, ModelReusesCacheBitIdentically) {
  const std::string dir = temp_dir("cache_model");
  const GridSpec g = build_hierarchy(1, 2, 3, 5);
  const FieldLaw law{0.1, 1.0};
  const SeedScheme seeds{11};
  ModelOptions opt = small_options(1);
  const CoarseModel fresh = build_coarse_model(g, law, small_sampling(2), seeds, opt);
  opt.cache_dir = dir;
  const CoarseModel writing = build_coarse_model(g, law, small_sampling(2), seeds, opt);
  const CoarseModel reading = build_coarse_model(g, law, small_sampling(2), seeds, opt);
  for (std::size_t i = 0; i < fresh.bases.size(); ++i) {
    EXPECT_TRUE(bit_equal(fresh.bases[i].source.values, writing.bases[i].source.values));
    EXPECT_TRUE(bit_equal(writing.bases[i].source.values, reading.bases[i].source.values));
    EXPECT_EQ(writing.bases[i].sigma_t, reading.bases[i].sigma_t);
  }
  EXPECT_EQ(fresh.sigma, reading.sigma);
  EXPECT_EQ(fresh.crb, reading.crb);
  EXPECT_TRUE(reading.warnings.empty());

  // a parameter change must not reuse the stale files silently
  SamplingConfig other = small_sampling(3);
  const CoarseModel recomputed = build_coarse_model(g, law, other, seeds, opt);
  bool saw_recompute_warning = false;
  for (const auto& w : recomputed.warnings)
    saw_recompute_warning = saw_recompute_warning || w.rfind("cache-recomputed:", 0) == 0;
  EXPECT_TRUE(saw_recompute_warning);
  EXPECT_EQ(recomputed.bases[0].sample_count, 3);
  std::filesystem::remove_all(dir);
}

TEST(Cache, CorruptFileTriggersRecompute) {
  const std::string dir = temp_dir("cache_corrupt");
  const GridSpec g = build_hierarchy(1, 2, 3, 5);
  PipelineSetup s(1, 0.1, 1.0);
  LocalBasis b = compute_local_basis(s.patch, s.sampler, small_sampling(2));
  write_basis_cache(dir, g, "cafe", 0, b, 1, SourceKind::kSlod);
  {
    std::ofstream os(basis_cache_path(dir, g, 0, 1, SourceKind::kSlod), std::ios::trunc);
    os << "stochhom-basis-cache v1\nkey cafe\ngarbage\n";
  }
  bool stale = false;
  EXPECT_FALSE(read_basis_cache(dir, g, "cafe", 0, 1, SourceKind::kSlod, &stale).has_value());
  EXPECT_TRUE(stale);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace stochhom
