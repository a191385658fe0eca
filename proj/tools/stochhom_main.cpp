// Command-line front end: builds coarse surrogate models for diffusion
// problems with rough random coefficients and runs the measurement studies
// (localization error indicator, Riesz stability, convergence against a
// streamed reference). Configuration precedence: config file, then
// STOCHHOM_<key> environment variables, then -D overrides.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stochhom/stochhom.hpp"

namespace {

using namespace stochhom;

std::vector<std::pair<std::string, std::string>> split_overrides(
    const std::vector<std::string>& defs) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& def : defs) {
    const auto eq = def.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + def + "': expected key=value");
    out.emplace_back(def.substr(0, eq), def.substr(eq + 1));
  }
  return out;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

void require_single_combo(const ExperimentConfig& cfg, const char* what) {
  if (cfg.log_h_list.size() != 1 || cfg.log_eps_list.size() != 1 || cfg.ell_list.size() != 1)
    throw ConfigError(std::string(what) +
                      " needs single-valued logH, logEps and ell (lists are for studies)");
}

ModelOptions model_options(const ExperimentConfig& cfg, bool with_response) {
  ModelOptions opt;
  opt.ell = cfg.ell_list.front();
  opt.kind = cfg.source_kind == "slod" ? SourceKind::kSlod : SourceKind::kLod;
  opt.sampler = sampler_mode(cfg);
  opt.stationarity = cfg.stationarity;
  opt.with_response = with_response;
  opt.threads = cfg.threads;
  opt.cache_dir = cfg.cache_dir;
  return opt;
}

int run_basis(const ExperimentConfig& cfg) {
  require_single_combo(cfg, "basis");
  validate_experiment(cfg);
  if (cfg.cache_dir.empty())
    throw ConfigError("basis: set cacheDir so the computed local bases are persisted");
  const GridSpec grid =
      build_hierarchy(cfg.d, cfg.log_h_list.front(), cfg.log_eps_list.front(), cfg.log_fine);
  const SeedScheme seeds{cfg.seed};
  const ModelOptions opt = model_options(cfg, true);
  std::vector<int> ell_eff(static_cast<std::size_t>(grid.coarse_count()));
  for (long id = 0; id < grid.coarse_count(); ++id) {
    const int ell = max_proper_ell(grid, element_from_linear(grid, id), opt.ell);
    if (ell == 0)
      throw GridError("basis: no proper patch around element " + std::to_string(id));
    ell_eff[static_cast<std::size_t>(id)] = ell;
  }
  const PatchClassPartition classes = partition_by_geometry(grid, ell_eff, cfg.stationarity);
  std::vector<std::string> warnings;
  const std::vector<LocalBasis> reps = compute_representatives(
      grid, cfg.law, cfg.sampling, seeds, opt, ell_eff, classes, &warnings);
  std::cout << "element,ell,m,sigma\n";
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const long id = classes.representatives[k];
    std::cout << id << ',' << ell_eff[static_cast<std::size_t>(id)] << ',' << reps[k].m << ','
              << detail::format_full(reps[k].sigma_t) << '\n';
  }
  for (const std::string& w : warnings) std::cerr << "note: " << w << '\n';
  std::cerr << reps.size() << " representative bases cached in " << cfg.cache_dir << '\n';
  return 0;
}

int run_solve(const ExperimentConfig& cfg, const std::string& output, const std::string& command) {
  require_single_combo(cfg, "solve");
  validate_experiment(cfg);
  const GridSpec grid =
      build_hierarchy(cfg.d, cfg.log_h_list.front(), cfg.log_eps_list.front(), cfg.log_fine);
  const SeedScheme seeds{cfg.seed};
  const CoarseModel model =
      build_coarse_model(grid, cfg.law, cfg.sampling, seeds, model_options(cfg, true));
  const Region dom = global_region(grid);
  const Eigen::VectorXd f_fine = rhs_fine_cells(cfg, grid);
  const Eigen::VectorXd f_coarse = coarsen_cells(dom, f_fine, grid.log_fine, grid.log_coarse);
  const Eigen::VectorXd u = assemble_coarse_solution(model, f_coarse);

  const std::string path =
      output.empty() ? (std::filesystem::path(cfg.output_dir) / "solution.csv").string() : output;
  {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write solution file " + path);
    os << "ix,iy,u\n";
    const int n = grid.coarse_per_axis();
    for (long id = 0; id < grid.coarse_count(); ++id)
      os << static_cast<int>(id % n) << ',' << static_cast<int>(id / n) << ','
         << detail::format_full(u[id]) << '\n';
    if (!os) throw IoError("failed while writing solution file " + path);
  }
  ExperimentResult meta_only;
  meta_only.warnings = model.warnings;
  std::ofstream meta(path + ".meta.json");
  if (!meta) throw IoError("cannot write metadata sidecar " + path + ".meta.json");
  meta << "{\"version\":\"" << kVersion << "\",\"command\":\"" << json_escape(command)
       << "\",\"configHash\":\"" << config_hash(cfg) << "\",\"sigma\":"
       << detail::format_full(model.sigma) << ",\"crb\":" << detail::format_full(model.crb)
       << ",\"warnings\":[";
  for (std::size_t i = 0; i < model.warnings.size(); ++i) {
    if (i) meta << ',';
    meta << '"' << json_escape(model.warnings[i]) << '"';
  }
  meta << "]}\n";
  std::cerr << "sigma " << model.sigma << ", riesz bound " << model.crb << ", solution in " << path
            << '\n';
  return 0;
}

int run_study(const ExperimentConfig& cfg, StudyKind kind, const std::string& default_name,
              const std::string& output, const std::string& command) {
  const ExperimentResult result = run_experiment(cfg, kind);
  const std::string path =
      output.empty() ? (std::filesystem::path(cfg.output_dir) / default_name).string() : output;
  const std::string meta = write_report(path, kind, result, cfg, command);
  std::cerr << result.rows.size() << " rows written to " << path << " (metadata " << meta << ")\n";
  for (const std::string& w : result.warnings) std::cerr << "note: " << w << '\n';
  return 0;
}

int run_selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok, const std::string& detail = "") {
    if (ok) {
      std::cout << "ok   " << name << '\n';
    } else {
      ++failures;
      std::cout << "FAIL " << name << (detail.empty() ? "" : ": " + detail) << '\n';
    }
  };

  try {
    bool threw = false;
    try {
      build_hierarchy(2, 5, 3, 7);
    } catch (const GridError&) {
      threw = true;
    }
    check("hierarchy rejects H coarser ordering violations", threw);

    const GridSpec g = build_hierarchy(1, 2, 3, 6);
    const Region dom = global_region(g);
    Eigen::VectorXd nodal(dom.node_count());
    for (long i = 0; i < dom.node_count(); ++i) nodal[i] = dom.node_coord(i)[0] * 0.75 + 0.25;
    const Eigen::VectorXd p1 = project_p0(dom, nodal, g.log_coarse);
    // replicate the projection to fine-cell data and project again
    const int rep = 1 << (g.log_fine - g.log_coarse);
    Eigen::VectorXd fine_cells(dom.cell_count());
    for (long c = 0; c < dom.cell_count(); ++c) fine_cells[c] = p1[c / rep];
    const Eigen::VectorXd p2 = coarsen_cells(dom, fine_cells, g.log_fine, g.log_coarse);
    check("coarse projection is idempotent", (p1 - p2).norm() == 0.0);

    SparseOperator op = assemble_stiffness(dom, std::vector<double>(dom.cell_count(), 1.0));
    const FineFunction u =
        solve_dirichlet(op, assemble_load_p0(dom, Eigen::VectorXd::Ones(dom.cell_count()), g.log_fine));
    const long mid = dom.node_id(dom.nodes_x() / 2, 0);
    check("unit-load solve hits 0.125 at the midpoint",
          std::abs(u.nodal[mid] - 0.125) < 1e-12,
          "got " + std::to_string(u.nodal[mid]));

    // an interior patch has no domain-boundary nodes, so constant artificial
    // data must extend to the same constant everywhere
    const GridSpec g2 = build_hierarchy(2, 3, 3, 5);
    const Patch patch = make_patch(g2, ElementIndex{3, 3}, 1);
    const Region reg = make_region(patch);
    SparseOperator pop = assemble_stiffness(reg, std::vector<double>(reg.cell_count(), 1.0));
    const auto art = reg.artificial_nodes();
    const FineFunction ext =
        harmonic_extension(pop, Eigen::VectorXd::Constant(static_cast<long>(art.size()), 3.0));
    double max_dev = 0.0;
    for (long i = 0; i < ext.nodal.size(); ++i)
      max_dev = std::max(max_dev, std::abs(ext.nodal[i] - 3.0));
    check("harmonic extension preserves constants", max_dev < 1e-10,
          "max deviation " + std::to_string(max_dev));

    const FineFunction bub = bubble_function(reg, patch.center);
    const Eigen::VectorXd bproj = project_p0(reg, bub.nodal, g2.log_coarse);
    double dev = 0.0;
    const auto elems = patch.elements();
    for (std::size_t k = 0; k < elems.size(); ++k) {
      const double want = elems[k] == patch.center ? 1.0 : 0.0;
      dev = std::max(dev, std::abs(bproj[static_cast<long>(k)] - want));
    }
    check("bubble projects onto the element indicator", dev < 1e-12,
          "max deviation " + std::to_string(dev));

    const auto h4 = halton_point(0, 4);
    check("low-discrepancy first point",
          h4[0] == 0.5 && std::abs(h4[1] - 1.0 / 3.0) < 1e-15 &&
              std::abs(h4[2] - 0.2) < 1e-15 && std::abs(h4[3] - 1.0 / 7.0) < 1e-15);

    const GridSpec g1 = build_hierarchy(1, 3, 4, 6);
    const Patch p1d = make_patch(g1, ElementIndex{3, 0}, 2);
    const Eigen::VectorXd w = weight_function(p1d, 6.0);
    check("selection weights grade as distance to the sixth power",
          w.size() == 5 && w[0] == 64.0 && w[1] == 1.0 && w[2] == 0.0 && w[3] == 1.0 &&
              w[4] == 64.0);

    const FieldLaw law;
    const SeedScheme seeds{7};
    const PatchSampler sampler = make_patch_sampler(g1, law, seeds, p1d, 3, SamplerMode::kPseudo);
    SamplingConfig sc;
    sc.M = 3;
    const LocalBasis basis = compute_local_basis(p1d, sampler, sc);
    check("local source has unit coarse norm",
          std::abs(basis.source.values.norm() * std::sqrt(g1.cell_measure(g1.log_coarse)) - 1.0) <
              1e-12);
    check("localization indicator is positive and small",
          basis.sigma_t > 0.0 && basis.sigma_t < 1.0,
          "sigma " + std::to_string(basis.sigma_t));
  } catch (const std::exception& e) {
    ++failures;
    std::cout << "FAIL unexpected exception: " << e.what() << '\n';
  }

  std::cout << (failures == 0 ? "selftest passed" : "selftest FAILED") << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coarse surrogate models for diffusion with rough random coefficients"};
  app.set_version_flag("--version", std::string("stochhom ") + stochhom::kVersion);

  std::string config_file;
  std::vector<std::string> defs;
  app.add_option("-c,--config", config_file, "key=value configuration file");
  app.add_option("-D,--define", defs, "override a config key (key=value, repeatable)");
  app.require_subcommand(1);

  auto* basis = app.add_subcommand("basis", "compute and cache the representative local bases");
  auto* solve = app.add_subcommand("solve", "build the surrogate and solve one problem");
  std::string solve_output;
  solve->add_option("-o,--output", solve_output, "solution CSV path");
  auto* sigma = app.add_subcommand("sigma-study", "localization error indicator across meshes");
  auto* riesz = app.add_subcommand("riesz-study", "Riesz stability bound across meshes");
  auto* conv = app.add_subcommand("convergence", "relative error against a streamed reference");
  std::string study_output;
  for (auto* s : {sigma, riesz, conv})
    s->add_option("-o,--output", study_output, "report CSV path");
  auto* selftest = app.add_subcommand("selftest", "run built-in consistency checks");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string command = join_args(argc, argv);
    if (selftest->parsed()) return run_selftest();
    const stochhom::ExperimentConfig cfg =
        stochhom::load_experiment_config(config_file, split_overrides(defs));
    if (basis->parsed()) return run_basis(cfg);
    if (solve->parsed()) return run_solve(cfg, solve_output, command);
    if (sigma->parsed())
      return run_study(cfg, stochhom::StudyKind::kSigmaStudy, "sigma_study.csv", study_output,
                       command);
    if (riesz->parsed())
      return run_study(cfg, stochhom::StudyKind::kRieszStudy, "riesz_study.csv", study_output,
                       command);
    if (conv->parsed())
      return run_study(cfg, stochhom::StudyKind::kConvergence, "convergence.csv", study_output,
                       command);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
