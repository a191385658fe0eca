#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stochhom/errors.hpp"
#include "stochhom/fem.hpp"
#include "stochhom/field.hpp"
#include "stochhom/grid.hpp"
#include "stochhom/parallel.hpp"
#include "stochhom/rng.hpp"
#include "stochhom/slod.hpp"
#include "stochhom/version.hpp"

namespace stochhom {

// Full experiment description. Mesh exponents are lists so one run sweeps a
// family of (H, eps, ell) combinations. `threads` is runtime-only: it is
// excluded from the configuration hash and never changes any output byte.
struct ExperimentConfig {
  int d = 2;
  std::vector<int> log_h_list{3};
  std::vector<int> log_eps_list{5};
  int log_fine = 7;
  std::vector<int> ell_list{2};
  SamplingConfig sampling;
  FieldLaw law;
  std::string rhs = "sine-pi";  // sine-pi | sine-raw | one | file
  std::string rhs_file;
  int m_reference = 1000;
  std::uint64_t seed = 1;
  std::string source_kind = "slod";  // slod | lod
  std::string sampler = "pseudo";    // pseudo | lowdiscrepancy
  bool common_random_numbers = false;
  bool stationarity = false;
  bool record_wall_time = true;
  std::string output_dir = ".";
  std::string cache_dir;
  int threads = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

inline int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + value +
                      "'");
  }
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("config key '" + key + "': empty list entry");
    out.push_back(parse_int(key, item));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

}  // namespace detail

// The flat key set accepted in config files, environment overrides
// (STOCHHOM_<key>) and -D command-line overrides.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "d",          "logH",          "logEps",   "logh",
      "ell",        "M",             "mFactor",  "p",
      "r",          "thresholdFloor", "objectiveDirection", "alpha",
      "beta",       "rhs",           "rhsFile",  "Mreference",
      "seed",       "sourceKind",    "sampler",  "commonRandomNumbers",
      "stationarity", "recordWallTime", "outputDir", "cacheDir",
      "threads"};
  return keys;
}

inline void set_config_key(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value) {
  using namespace detail;
  if (key == "d")
    cfg.d = parse_int(key, value);
  else if (key == "logH")
    cfg.log_h_list = parse_int_list(key, value);
  else if (key == "logEps")
    cfg.log_eps_list = parse_int_list(key, value);
  else if (key == "logh")
    cfg.log_fine = parse_int(key, value);
  else if (key == "ell")
    cfg.ell_list = parse_int_list(key, value);
  else if (key == "M")
    cfg.sampling.M = parse_int(key, value);
  else if (key == "mFactor")
    cfg.sampling.m_factor = parse_int(key, value);
  else if (key == "p")
    cfg.sampling.p = parse_double(key, value);
  else if (key == "r")
    cfg.sampling.r = parse_double(key, value);
  else if (key == "thresholdFloor")
    cfg.sampling.threshold_floor = parse_double(key, value);
  else if (key == "objectiveDirection") {
    if (value == "minimize")
      cfg.sampling.objective = SamplingConfig::Objective::kMinimize;
    else if (value == "maximize")
      cfg.sampling.objective = SamplingConfig::Objective::kMaximize;
    else
      throw ConfigError("objectiveDirection must be 'minimize' or 'maximize', got '" + value + "'");
  } else if (key == "alpha")
    cfg.law.alpha = parse_double(key, value);
  else if (key == "beta")
    cfg.law.beta = parse_double(key, value);
  else if (key == "rhs")
    cfg.rhs = value;
  else if (key == "rhsFile")
    cfg.rhs_file = value;
  else if (key == "Mreference")
    cfg.m_reference = parse_int(key, value);
  else if (key == "seed")
    cfg.seed = parse_u64(key, value);
  else if (key == "sourceKind")
    cfg.source_kind = value;
  else if (key == "sampler")
    cfg.sampler = value;
  else if (key == "commonRandomNumbers")
    cfg.common_random_numbers = parse_bool(key, value);
  else if (key == "stationarity")
    cfg.stationarity = parse_bool(key, value);
  else if (key == "recordWallTime")
    cfg.record_wall_time = parse_bool(key, value);
  else if (key == "outputDir")
    cfg.output_dir = value;
  else if (key == "cacheDir")
    cfg.cache_dir = value;
  else if (key == "threads")
    cfg.threads = parse_int(key, value);
  else
    throw ConfigError("unknown config key '" + key + "'");
}

// Parses flat key=value text ('#' starts a comment, blank lines ignored).
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = value;
  }
  return out;
}

// Resolution order: built-in defaults, then the config file, then environment
// variables STOCHHOM_<key>, then explicit overrides (command line). Later
// sources win.
inline ExperimentConfig load_experiment_config(
    const std::string& config_file,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  if (!config_file.empty()) {
    std::ifstream is(config_file);
    if (!is) throw IoError("cannot open config file " + config_file);
    std::stringstream buffer;
    buffer << is.rdbuf();
    for (const auto& [k, v] : parse_config_text(buffer.str())) set_config_key(cfg, k, v);
  }
  for (const std::string& key : config_keys()) {
    const std::string env_name = "STOCHHOM_" + key;
    if (const char* v = std::getenv(env_name.c_str())) set_config_key(cfg, key, v);
  }
  for (const auto& [k, v] : overrides) set_config_key(cfg, k, v);
  return cfg;
}

inline void validate_experiment(const ExperimentConfig& cfg) {
  if (cfg.d != 1 && cfg.d != 2) throw ConfigError("d must be 1 or 2");
  cfg.law.validate();
  cfg.sampling.validate();
  for (int lh : cfg.log_h_list)
    if (lh < 1) throw ConfigError("logH entries must be at least 1");
  for (int le : cfg.log_eps_list)
    if (le > cfg.log_fine)
      throw ConfigError("logEps must not exceed logh (fine mesh must resolve the coefficient)");
  for (int ell : cfg.ell_list)
    if (ell < 1) throw ConfigError("ell entries must be at least 1");
  if (cfg.m_reference < 1) throw ConfigError("Mreference must be at least 1");
  if (cfg.threads < 1) throw ConfigError("threads must be at least 1");
  if (cfg.rhs != "sine-pi" && cfg.rhs != "sine-raw" && cfg.rhs != "one" && cfg.rhs != "file")
    throw ConfigError("rhs must be one of sine-pi, sine-raw, one, file");
  if (cfg.rhs == "file" && cfg.rhs_file.empty())
    throw ConfigError("rhs=file requires rhsFile to be set");
  if (cfg.source_kind != "slod" && cfg.source_kind != "lod")
    throw ConfigError("sourceKind must be 'slod' or 'lod'");
  if (cfg.sampler != "pseudo" && cfg.sampler != "lowdiscrepancy")
    throw ConfigError("sampler must be 'pseudo' or 'lowdiscrepancy'");
  if (cfg.sampler == "lowdiscrepancy" && cfg.d != 1)
    throw ConfigError("the low-discrepancy sampler is supported in one dimension only");
  if (cfg.stationarity && (cfg.common_random_numbers || cfg.sampler == "lowdiscrepancy"))
    throw ConfigError(
        "stationarity requires independent per-patch streams; disable it for common-random-number "
        "or low-discrepancy sampling");
}

inline SamplerMode sampler_mode(const ExperimentConfig& cfg) {
  if (cfg.sampler == "lowdiscrepancy") return SamplerMode::kLowDiscrepancy;
  return cfg.common_random_numbers ? SamplerMode::kCommonRandom : SamplerMode::kPseudo;
}

// Canonical hash over every reproducibility-relevant field (threads excluded).
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << cfg.d << '|';
  for (int v : cfg.log_h_list) os << v << ',';
  os << '|';
  for (int v : cfg.log_eps_list) os << v << ',';
  os << '|' << cfg.log_fine << '|';
  for (int v : cfg.ell_list) os << v << ',';
  os << '|' << cfg.sampling.M << '|' << cfg.sampling.m_factor << '|'
     << detail::format_full(cfg.sampling.p) << '|' << detail::format_full(cfg.sampling.r) << '|'
     << detail::format_full(cfg.sampling.threshold_floor) << '|'
     << (cfg.sampling.objective == SamplingConfig::Objective::kMinimize ? "min" : "max") << '|'
     << detail::format_full(cfg.law.alpha) << '|' << detail::format_full(cfg.law.beta) << '|'
     << cfg.rhs << '|' << cfg.rhs_file << '|' << cfg.m_reference << '|' << cfg.seed << '|'
     << cfg.source_kind << '|' << cfg.sampler << '|' << cfg.common_random_numbers << '|'
     << cfg.stationarity << '|' << cfg.record_wall_time << '|' << cfg.output_dir << '|'
     << cfg.cache_dir;
  std::ostringstream hex;
  hex << std::hex << detail::hash_bytes(os.str());
  return hex.str();
}

// P0 right-hand-side file: "stochhom-p0 v1", "level <log>", "values <count> ...",
// values on the full domain at the given dyadic level.
inline std::pair<int, Eigen::VectorXd> read_p0_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open right-hand-side file " + path);
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != "stochhom-p0 v1")
    throw IoError("right-hand-side file " + path + ": bad header");
  std::string word;
  int level = 0;
  long count = 0;
  if (!(is >> word >> level) || word != "level")
    throw IoError("right-hand-side file " + path + ": missing level");
  if (!(is >> word >> count) || word != "values" || count < 1)
    throw IoError("right-hand-side file " + path + ": missing values");
  Eigen::VectorXd v(count);
  for (long i = 0; i < count; ++i)
    if (!(is >> v[i])) throw IoError("right-hand-side file " + path + ": truncated values");
  return {level, std::move(v)};
}

// Right-hand side evaluated as fine-cell midpoint values on the full domain.
inline Eigen::VectorXd rhs_fine_cells(const ExperimentConfig& cfg, const GridSpec& g) {
  const Region dom = global_region(g);
  Eigen::VectorXd values(dom.cell_count());
  if (cfg.rhs == "file") {
    auto [level, data] = read_p0_file(cfg.rhs_file);
    if (level < 0 || level > g.log_fine)
      throw ConfigError("rhs file level must lie between 0 and logh");
    if (data.size() != g.level_cell_count(level))
      throw ConfigError("rhs file value count does not match its level for this grid");
    const int shift = g.log_fine - level;
    const int n_level = g.axis_cells(level);
    for (int iy = 0; iy < dom.cells_y(); ++iy)
      for (int ix = 0; ix < dom.cells_x(); ++ix)
        values[dom.cell_id(ix, iy)] =
            data[(ix >> shift) + static_cast<long>(n_level) * (g.dim == 2 ? iy >> shift : 0)];
    return values;
  }
  const double pi = std::numbers::pi;
  const double two_pi_sq = 2.0 * pi * pi;
  for (long c = 0; c < dom.cell_count(); ++c) {
    const auto x = dom.cell_center(c);
    if (cfg.rhs == "sine-pi")
      values[c] = two_pi_sq * std::sin(pi * x[0]) * (g.dim == 2 ? std::sin(pi * x[1]) : 1.0);
    else if (cfg.rhs == "sine-raw")
      values[c] = two_pi_sq * std::sin(x[0]) * (g.dim == 2 ? std::sin(x[1]) : 1.0);
    else
      values[c] = 1.0;
  }
  return values;
}

struct ReferenceStats {
  Eigen::VectorXd mean;  // coarse averages of the fine reference solution
  Eigen::VectorXd m2;    // second central moments (diagnostics)
  int samples = 0;
};

// Streamed empirical mean of the coarse-projected fine reference solutions.
// Samples are processed in fixed-size chunks; chunks may run in parallel, but
// each chunk accumulates strictly in sample order and the chunk results are
// merged in chunk order, so the outcome is thread-count independent. Memory
// stays O(chunk), not O(samples).
inline ReferenceStats reference_stream(const GridSpec& g, const FieldLaw& law,
                                       const SeedScheme& seeds, const Eigen::VectorXd& fine_load,
                                       int samples, SamplerMode mode, int threads) {
  if (samples < 1) throw ConfigError("reference_stream: sample count must be positive");
  const Region dom = global_region(g);
  const long n = g.coarse_count();
  constexpr int kChunk = 16;
  const int n_chunks = (samples + kChunk - 1) / kChunk;
  struct Acc {
    Eigen::VectorXd mean, m2;
    long count = 0;
  };
  std::vector<Acc> accs(static_cast<std::size_t>(n_chunks));
  parallel_for(static_cast<std::size_t>(n_chunks), threads, [&](std::size_t ci) {
    Acc a{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
    const int i0 = static_cast<int>(ci) * kChunk;
    const int i1 = std::min(samples, i0 + kChunk);
    for (int i = i0; i < i1; ++i) {
      const FieldSample field = mode == SamplerMode::kLowDiscrepancy
                                    ? sample_field_lowdiscrepancy(g, law, static_cast<std::uint64_t>(i))
                                    : sample_field(g, law, seeds, static_cast<std::uint64_t>(i));
      SparseOperator op = assemble_stiffness(dom, restrict_field(field, g, dom));
      const FineFunction sol = solve_dirichlet(op, fine_load);
      const Eigen::VectorXd proj = project_p0(dom, sol.nodal, g.log_coarse);
      ++a.count;
      const Eigen::VectorXd delta = proj - a.mean;
      a.mean += delta / static_cast<double>(a.count);
      a.m2 += delta.cwiseProduct(proj - a.mean);
    }
    accs[ci] = std::move(a);
  });
  Acc total{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
  for (const Acc& a : accs) {
    if (a.count == 0) continue;
    if (total.count == 0) {
      total = a;
      continue;
    }
    const Eigen::VectorXd delta = a.mean - total.mean;
    const double na = static_cast<double>(total.count), nb = static_cast<double>(a.count);
    total.mean += delta * (nb / (na + nb));
    total.m2 += a.m2 + delta.cwiseProduct(delta) * (na * nb / (na + nb));
    total.count += a.count;
  }
  return ReferenceStats{std::move(total.mean), std::move(total.m2),
                        static_cast<int>(total.count)};
}

// Relative L2 distance of two P0 functions on the same coarse mesh (uniform
// cell measures cancel). A vanishing reference is an error, not a zero.
inline double relative_error(const Eigen::VectorXd& u, const Eigen::VectorXd& reference) {
  if (u.size() != reference.size()) throw ConfigError("relative_error: size mismatch");
  const double den = reference.norm();
  if (!(den > 0.0)) throw SolverError("relative_error: reference norm is zero");
  return (u - reference).norm() / den;
}

// Least-squares slope of log2(y) against log2(x).
inline double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ConfigError("fit_slope: size mismatch");
  if (xs.size() < 2) throw ConfigError("fit_slope: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  std::vector<double> lx(xs.size()), ly(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw ConfigError("fit_slope: values must be positive for log-log regression");
    lx[i] = std::log2(xs[i]);
    ly[i] = std::log2(ys[i]);
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_slope: abscissae are all equal");
  return sxy / sxx;
}

enum class StudyKind { kConvergence, kSigmaStudy, kRieszStudy };

struct ReportRow {
  int d = 0;
  double H = 0, eps = 0;
  int ell = 0, M = 0, m = 0;
  double p = 0, r = 0;
  std::uint64_t seed = 0;
  double sigma = 0, crb = 0, rel_l2 = 0, wall_time_s = 0;
  std::string log;
};

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
};

// Runs one study over all admissible (ell, eps, H) combinations. Combinations
// with H <= eps are skipped (the coarse mesh must not resolve the coefficient
// scale). A combination whose patches would swallow the whole domain is
// skipped by the convergence study, restricted to proper-patch elements by
// the sigma study, and handled by neighborhood-order reduction in the Riesz
// study (each with a recorded note).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, StudyKind kind) {
  validate_experiment(cfg);
  ExperimentResult result;
  const SeedScheme seeds{cfg.seed};
  const SamplerMode mode = sampler_mode(cfg);
  const SourceKind source =
      cfg.source_kind == "slod" ? SourceKind::kSlod : SourceKind::kLod;
  for (int ell : cfg.ell_list)
    for (int log_eps : cfg.log_eps_list)
      for (int log_h : cfg.log_h_list) {
        std::ostringstream combo_name;
        combo_name << "(logH=" << log_h << ", logEps=" << log_eps << ", ell=" << ell << ")";
        if (log_h >= log_eps) {
          result.warnings.push_back("skipped-coarse-resolves-coefficient:" + combo_name.str());
          continue;
        }
        const GridSpec grid = build_hierarchy(cfg.d, log_h, log_eps, cfg.log_fine);
        long improper = 0;
        for (long id = 0; id < grid.coarse_count(); ++id)
          if (max_proper_ell(grid, element_from_linear(grid, id), ell) < ell) ++improper;
        if (improper == grid.coarse_count()) {
          result.warnings.push_back("skipped-no-proper-patch:" + combo_name.str());
          continue;
        }
        if (kind == StudyKind::kConvergence && improper > 0) {
          result.warnings.push_back("skipped-whole-domain-patch:" + combo_name.str());
          continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        ReportRow row;
        row.d = cfg.d;
        row.H = grid.coarse_h();
        row.eps = grid.eps_h();
        row.ell = ell;
        row.M = cfg.sampling.M;
        row.p = cfg.sampling.p;
        row.r = cfg.sampling.r;
        row.seed = cfg.seed;
        std::vector<std::string> notes;
        ModelOptions mopts;
        mopts.ell = ell;
        mopts.kind = source;
        mopts.sampler = mode;
        mopts.stationarity = cfg.stationarity;
        mopts.threads = cfg.threads;
        mopts.cache_dir = cfg.cache_dir;
        if (kind == StudyKind::kSigmaStudy) {
          std::vector<int> ell_eff(static_cast<std::size_t>(grid.coarse_count()), -1);
          for (long id = 0; id < grid.coarse_count(); ++id)
            if (max_proper_ell(grid, element_from_linear(grid, id), ell) == ell)
              ell_eff[static_cast<std::size_t>(id)] = ell;
          if (improper > 0) notes.push_back("skipped-elements:" + std::to_string(improper));
          mopts.with_response = false;
          const PatchClassPartition classes =
              partition_by_geometry(grid, ell_eff, cfg.stationarity);
          const std::vector<LocalBasis> reps = compute_representatives(
              grid, cfg.law, cfg.sampling, seeds, mopts, ell_eff, classes, &notes);
          for (const LocalBasis& b : reps) {
            row.sigma = std::max(row.sigma, b.sigma_t);
            row.m = std::max(row.m, b.m);
          }
        } else if (kind == StudyKind::kRieszStudy) {
          mopts.with_response = false;
          CoarseModel model = build_coarse_model(grid, cfg.law, cfg.sampling, seeds, mopts);
          row.sigma = model.sigma;
          row.crb = model.crb;
          for (const LocalBasis& b : model.bases) row.m = std::max(row.m, b.m);
          notes.insert(notes.end(), model.warnings.begin(), model.warnings.end());
        } else {
          mopts.with_response = true;
          CoarseModel model = build_coarse_model(grid, cfg.law, cfg.sampling, seeds, mopts);
          const Region dom = global_region(grid);
          const Eigen::VectorXd f_fine = rhs_fine_cells(cfg, grid);
          const Eigen::VectorXd f_coarse =
              coarsen_cells(dom, f_fine, grid.log_fine, grid.log_coarse);
          const Eigen::VectorXd u = assemble_coarse_solution(model, f_coarse);
          const Eigen::VectorXd load = assemble_load_p0(dom, f_fine, grid.log_fine);
          const ReferenceStats ref = reference_stream(grid, cfg.law, seeds, load,
                                                      cfg.m_reference, mode, cfg.threads);
          row.sigma = model.sigma;
          row.crb = model.crb;
          row.rel_l2 = relative_error(u, ref.mean);
          for (const LocalBasis& b : model.bases) row.m = std::max(row.m, b.m);
          notes.insert(notes.end(), model.warnings.begin(), model.warnings.end());
        }
        const auto t1 = std::chrono::steady_clock::now();
        row.wall_time_s =
            cfg.record_wall_time ? std::chrono::duration<double>(t1 - t0).count() : 0.0;
        std::string joined;
        for (const std::string& n : notes) {
          if (!joined.empty()) joined += ';';
          joined += n;
        }
        row.log = joined;
        result.rows.push_back(std::move(row));
      }
  if (result.rows.empty())
    throw ConfigError("run_experiment: no admissible parameter combination produced a row");
  return result;
}

// Column sets per study. The sigma study reports no Riesz or error columns,
// the Riesz study no error column, so every written field is meaningful.
inline std::string report_header(StudyKind kind) {
  switch (kind) {
    case StudyKind::kSigmaStudy:
      return "d,H,eps,ell,M,m,p,r,seed,sigma,wall_time_s,log";
    case StudyKind::kRieszStudy:
      return "d,H,eps,ell,M,m,p,r,seed,sigma,crb,wall_time_s,log";
    case StudyKind::kConvergence:
      return "d,H,eps,ell,M,m,p,r,seed,sigma,crb,rel_l2,wall_time_s,log";
  }
  throw ConfigError("unknown study kind");
}

inline std::string format_report_row(StudyKind kind, const ReportRow& row) {
  using detail::format_full;
  std::ostringstream os;
  os << row.d << ',' << format_full(row.H) << ',' << format_full(row.eps) << ',' << row.ell << ','
     << row.M << ',' << row.m << ',' << format_full(row.p) << ',' << format_full(row.r) << ','
     << row.seed << ',' << format_full(row.sigma);
  if (kind != StudyKind::kSigmaStudy) os << ',' << format_full(row.crb);
  if (kind == StudyKind::kConvergence) os << ',' << format_full(row.rel_l2);
  os << ',' << format_full(row.wall_time_s) << ',' << row.log;
  return os.str();
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

// Writes the report CSV (17 significant digits) plus a one-line JSON sidecar
// (<name>.meta.json) recording version, command, config hash, objective
// direction and accumulated warnings.
inline std::string write_report(const std::string& path, StudyKind kind,
                                const ExperimentResult& result, const ExperimentConfig& cfg,
                                const std::string& command) {
  {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write report file " + path);
    os << report_header(kind) << '\n';
    for (const ReportRow& row : result.rows) os << format_report_row(kind, row) << '\n';
    if (!os) throw IoError("failed while writing report file " + path);
  }
  const std::string meta_path = path + ".meta.json";
  std::ofstream meta(meta_path);
  if (!meta) throw IoError("cannot write metadata sidecar " + meta_path);
  meta << "{\"version\":\"" << kVersion << "\",\"command\":\"" << json_escape(command)
       << "\",\"configHash\":\"" << config_hash(cfg) << "\",\"objectiveDirection\":\""
       << (cfg.sampling.objective == SamplingConfig::Objective::kMinimize ? "minimize"
                                                                          : "maximize")
       << "\",\"recordWallTime\":" << (cfg.record_wall_time ? "true" : "false")
       << ",\"warnings\":[";
  for (std::size_t i = 0; i < result.warnings.size(); ++i) {
    if (i) meta << ',';
    meta << '"' << json_escape(result.warnings[i]) << '"';
  }
  meta << "]}\n";
  if (!meta) throw IoError("failed while writing metadata sidecar " + meta_path);
  return meta_path;
}

}  // namespace stochhom
