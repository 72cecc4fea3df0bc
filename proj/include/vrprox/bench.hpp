#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vrprox/datagen.hpp"
#include "vrprox/io.hpp"
#include "vrprox/optimizers.hpp"
#include "vrprox/preprocess.hpp"
#include "vrprox/problem.hpp"
#include "vrprox/theory.hpp"

namespace vrprox {

/// Runs fn(0..num_tasks-1) on up to `workers` threads. Task outputs must go
/// to disjoint slots; determinism comes from per-task seeds, not scheduling.
template <typename F>
void parallel_for_each(int num_tasks, int workers, F&& fn) {
  workers = std::max(1, std::min(workers, num_tasks));
  if (workers == 1) {
    for (int i = 0; i < num_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < num_tasks; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// The 13-point learning-rate grid {2, 2/2, ..., 2/2^12}.
inline std::vector<Scalar> learning_rate_grid() {
  std::vector<Scalar> grid;
  for (int k = 0; k <= 12; ++k) grid.push_back(2.0 / std::pow(2.0, k));
  return grid;
}

// ---------------------------------------------------------------------------
// Experiment configuration: every key mirrors a CLI flag; files are flat
// key=value text or JSON with the same keys.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // Problem source: a synthetic family or a dataset file.
  std::string model = "lasso";  // lasso | group | corrected | scad | mcp | dataset
  std::string data_path;        // model == dataset
  std::string loss = "squared";     // dataset mode: squared | logistic
  std::string reg = "l1";           // dataset mode: l1 | group | scad | mcp
  Index n = 200, p = 400, r = 5;
  Index q = 0, num_groups = 0, s_g = 0;
  Scalar b = 0.0, u = 1.0, gamma_w = 0.0, sigma_scale = 1.0;
  Scalar zeta = 3.7, mcp_b = 3.0;
  Scalar lambda = -1.0;  // < 0 resolves to the matching corollary bound
  Scalar rho = -1.0;     // < 0 resolves to 2 * constraint norm of theta*
  bool normalize = true;
  bool poly_expand = false;  // dataset mode: standardize + cubic expansion + group reg
  std::uint64_t seed = 0;

  // Solvers and their shared knobs.
  std::vector<std::string> solvers{"svrg"};
  Index m = 0;          // 0 -> 2n
  Scalar beta = 0.0;    // 0 with grid=on -> tuned; otherwise required
  int epochs = 100;     // pass budget (converted to outer epochs for SVRG)
  int eval_every = 1;
  std::string outer = "default";  // default | average | random | last
  bool sgd_constant = false;
  Scalar rda_gamma = 1.0;
  bool grid = false;
  int grid_passes = 30;
  int reference_passes = 500;

  // Harness.
  int workers = 1;
  bool timing = true;
  std::string out_dir = ".";
  Scalar tau = 1.0, c1 = 1.0;  // universal constants surfaced in reports

  std::string canonical_text() const;
  std::uint64_t hash() const { return fnv1a64(canonical_text()); }
  std::string hash_hex() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash()));
    return buf;
  }
};

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

inline std::string ExperimentConfig::canonical_text() const {
  std::ostringstream os;
  os << "b=" << format_g17(b) << "\n"
     << "beta=" << format_g17(beta) << "\n"
     << "c1=" << format_g17(c1) << "\n"
     << "data=" << data_path << "\n"
     << "epochs=" << epochs << "\n"
     << "eval_every=" << eval_every << "\n"
     << "gamma_w=" << format_g17(gamma_w) << "\n"
     << "grid=" << (grid ? "on" : "off") << "\n"
     << "grid_passes=" << grid_passes << "\n"
     << "lambda=" << format_g17(lambda) << "\n"
     << "loss=" << loss << "\n"
     << "m=" << m << "\n"
     << "mcp_b=" << format_g17(mcp_b) << "\n"
     << "model=" << model << "\n"
     << "n=" << n << "\n"
     << "normalize=" << (normalize ? "on" : "off") << "\n"
     << "num_groups=" << num_groups << "\n"
     << "outer=" << outer << "\n"
     << "p=" << p << "\n"
     << "poly_expand=" << (poly_expand ? "on" : "off") << "\n"
     << "q=" << q << "\n"
     << "r=" << r << "\n"
     << "rda_gamma=" << format_g17(rda_gamma) << "\n"
     << "reference_passes=" << reference_passes << "\n"
     << "reg=" << reg << "\n"
     << "rho=" << format_g17(rho) << "\n"
     << "s_g=" << s_g << "\n"
     << "seed=" << seed << "\n"
     << "sgd_constant=" << (sgd_constant ? "on" : "off") << "\n"
     << "sigma_scale=" << format_g17(sigma_scale) << "\n"
     << "solver=" << join_list(solvers) << "\n"
     << "tau=" << format_g17(tau) << "\n"
     << "timing=" << (timing ? "on" : "off") << "\n"
     << "u=" << format_g17(u) << "\n"
     << "zeta=" << format_g17(zeta) << "\n";
  return os.str();
}

inline bool parse_bool_flag(const std::string& value, const std::string& key) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + value);
}

inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
  if (key == "model") cfg.model = value;
  else if (key == "data") cfg.data_path = value;
  else if (key == "loss") cfg.loss = value;
  else if (key == "reg") cfg.reg = value;
  else if (key == "n") cfg.n = std::stoll(value);
  else if (key == "p") cfg.p = std::stoll(value);
  else if (key == "r") cfg.r = std::stoll(value);
  else if (key == "q") cfg.q = std::stoll(value);
  else if (key == "num_groups") cfg.num_groups = std::stoll(value);
  else if (key == "s_g") cfg.s_g = std::stoll(value);
  else if (key == "b") cfg.b = std::stod(value);
  else if (key == "u") cfg.u = std::stod(value);
  else if (key == "gamma_w") cfg.gamma_w = std::stod(value);
  else if (key == "sigma_scale") cfg.sigma_scale = std::stod(value);
  else if (key == "zeta") cfg.zeta = std::stod(value);
  else if (key == "mcp_b") cfg.mcp_b = std::stod(value);
  else if (key == "lambda") cfg.lambda = std::stod(value);
  else if (key == "rho") cfg.rho = std::stod(value);
  else if (key == "normalize") cfg.normalize = parse_bool_flag(value, key);
  else if (key == "poly_expand") cfg.poly_expand = parse_bool_flag(value, key);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "solver") {
    cfg.solvers.clear();
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) if (!item.empty()) cfg.solvers.push_back(item);
  }
  else if (key == "m") cfg.m = std::stoll(value);
  else if (key == "beta") cfg.beta = std::stod(value);
  else if (key == "epochs") cfg.epochs = std::stoi(value);
  else if (key == "eval_every") cfg.eval_every = std::stoi(value);
  else if (key == "outer") cfg.outer = value;
  else if (key == "sgd_constant") cfg.sgd_constant = parse_bool_flag(value, key);
  else if (key == "rda_gamma") cfg.rda_gamma = std::stod(value);
  else if (key == "grid") cfg.grid = parse_bool_flag(value, key);
  else if (key == "grid_passes") cfg.grid_passes = std::stoi(value);
  else if (key == "reference_passes") cfg.reference_passes = std::stoi(value);
  else if (key == "workers") cfg.workers = std::stoi(value);
  else if (key == "timing") cfg.timing = parse_bool_flag(value, key);
  else if (key == "out") cfg.out_dir = value;
  else if (key == "tau") cfg.tau = std::stod(value);
  else if (key == "c1") cfg.c1 = std::stod(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Loads a flat key=value document ('#' comments) or, for .json paths, a JSON
/// object with the same keys.
inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    for (const auto& [key, value] : doc.items()) {
      std::string text;
      if (value.is_string()) text = value.get<std::string>();
      else if (value.is_boolean()) text = value.get<bool>() ? "on" : "off";
      else text = value.dump();
      apply_config_key(cfg, key, text);
    }
    return;
  }
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::invalid_argument("config: bad line " + std::to_string(line_no));
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    apply_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

// ---------------------------------------------------------------------------
// Problem assembly
// ---------------------------------------------------------------------------

/// Fully materialized experiment instance: dataset after normalization, the
/// composite problem, and the ground truth mapped into the normalized
/// coordinates (theta* / column scale).
struct AssembledProblem {
  CompositeProblem problem;
  std::optional<GroundTruth> truth;
  std::optional<RowMatrix> hidden_x;  // corrected model only
  CovarianceModel covariance;
  Scalar resolved_lambda = 0.0;
  Scalar resolved_rho = 0.0;
  bool normalized = false;
};

inline AssembledProblem assemble_problem(const ExperimentConfig& cfg) {
  AssembledProblem out;
  Dataset data;
  std::optional<GroundTruth> truth;
  std::optional<RowMatrix> hidden;
  LossKind loss = LossKind::squared();
  RegularizerKind reg = RegularizerKind::l1();

  SynthSpec spec;
  spec.n = cfg.n;
  spec.p = cfg.p;
  spec.r = cfg.r;
  spec.q = cfg.q;
  spec.num_groups = cfg.num_groups;
  spec.s_g = cfg.s_g;
  spec.b = cfg.b;
  spec.noise_sd = cfg.u;
  spec.gamma_w = cfg.gamma_w;
  spec.sigma_scale = cfg.sigma_scale;
  spec.seed = cfg.seed;
  out.covariance = CovarianceModel(cfg.model == "corrected" ? 0.0 : cfg.b, cfg.sigma_scale);

  if (cfg.model == "lasso" || cfg.model == "scad" || cfg.model == "mcp") {
    auto gen = gen_sparse_linear(spec);
    data = std::move(gen.dataset);
    truth = std::move(gen.truth);
    if (cfg.model == "scad") reg = RegularizerKind::scad(cfg.zeta);
    else if (cfg.model == "mcp") reg = RegularizerKind::mcp(cfg.mcp_b);
  } else if (cfg.model == "group") {
    auto gen = gen_group_sparse(spec);
    data = std::move(gen.dataset);
    truth = std::move(gen.truth);
    reg = RegularizerKind::group(GroupMap::contiguous(cfg.p, cfg.q));
  } else if (cfg.model == "corrected") {
    auto gen = gen_corrupted_covariates(spec);
    data = std::move(gen.dataset);
    truth = std::move(gen.truth);
    hidden = std::move(gen.hidden_x);
    loss = LossKind::corrected(cfg.gamma_w);
  } else if (cfg.model == "dataset") {
    if (cfg.data_path.empty()) throw std::invalid_argument("config: dataset model needs data=");
    LibsvmOptions opts;
    opts.remap_binary_labels = (cfg.loss == "logistic");
    data = read_libsvm(cfg.data_path, opts);
    if (cfg.loss == "logistic") loss = LossKind::logistic();
    else if (cfg.loss == "squared") loss = LossKind::squared();
    else throw std::invalid_argument("config: dataset loss must be squared or logistic");
    if (cfg.poly_expand) {
      // polynomial-grouping pipeline: standardize, cube-expand, group penalty
      ExpandResult expanded = polynomial_group_expand(standardize_columns(data));
      data = std::move(expanded.dataset);
      reg = RegularizerKind::group(std::move(expanded.groups));
    } else if (cfg.reg == "group") {
      if (cfg.q < 1) throw std::invalid_argument("config: group reg needs q");
      reg = RegularizerKind::group(GroupMap::contiguous(data.p(), cfg.q));
    } else if (cfg.reg == "scad") reg = RegularizerKind::scad(cfg.zeta);
    else if (cfg.reg == "mcp") reg = RegularizerKind::mcp(cfg.mcp_b);
    else if (cfg.reg != "l1") throw std::invalid_argument("config: unknown reg " + cfg.reg);
  } else {
    throw std::invalid_argument("config: unknown model '" + cfg.model + "'");
  }

  // Normalization (flag recorded in every manifest); ground truth moves to
  // the rescaled coordinates so gaps and cone checks stay meaningful.
  if (cfg.normalize) {
    NormalizeResult norm = (reg.tag == RegTag::kGroup)
                               ? group_normalize(data, reg.groups)
                               : column_normalize(data);
    data = std::move(norm.dataset);
    if (truth) {
      for (Index j = 0; j < truth->theta_star.size(); ++j)
        truth->theta_star(j) /= norm.scales(j);
    }
    out.normalized = true;
  }

  // Lambda default: the matching corollary lower bound.
  Scalar lambda = cfg.lambda;
  if (lambda < 0.0) {
    const Scalar rho_prov = truth ? 2.0 * truth->theta_star.lpNorm<1>() : 1.0;
    if (cfg.model == "lasso" || cfg.model == "dataset")
      lambda = lambda_bound_lasso(cfg.u, data.p(), data.n());
    else if (cfg.model == "group")
      lambda = lambda_bound_group(cfg.u, cfg.q, cfg.num_groups, data.n());
    else if (cfg.model == "scad" || cfg.model == "mcp")
      lambda = lambda_bound_scad(cfg.u, data.p(), data.n(), rho_prov, cfg.tau);
    else if (cfg.model == "corrected")
      lambda = lambda_bound_corrected(out.covariance.sigma_max(data.p()), cfg.gamma_w, cfg.u,
                                      truth ? truth->theta_star.norm() : 1.0, data.p(), data.n(),
                                      rho_prov, cfg.tau, cfg.c1);
  }

  // Rho default: twice the constraint norm of theta*, so the planted model is
  // comfortably feasible and the constraint stays non-binding.
  Scalar rho = cfg.rho;
  if (rho < 0.0) {
    if (!truth) throw std::invalid_argument("config: rho must be given for dataset problems");
    rho = 2.0 * constraint_norm(reg, lambda, truth->theta_star);
    if (!(rho > 0.0)) rho = 1.0;  // degenerate all-zero truth
  }

  out.problem = CompositeProblem(std::move(data), loss, std::move(reg), lambda, rho);
  out.truth = std::move(truth);
  out.hidden_x = std::move(hidden);
  out.resolved_lambda = lambda;
  out.resolved_rho = rho;
  return out;
}

// ---------------------------------------------------------------------------
// Solver dispatch
// ---------------------------------------------------------------------------

inline OuterIterate parse_outer(const std::string& name) {
  if (name == "default") return OuterIterate::kDefault;
  if (name == "average") return OuterIterate::kAverage;
  if (name == "random") return OuterIterate::kRandom;
  if (name == "last") return OuterIterate::kLast;
  throw std::invalid_argument("config: unknown outer mode " + name);
}

inline bool solver_known(const std::string& name) {
  return name == "svrg" || name == "cg" || name == "sgd" || name == "sag" || name == "rda";
}

inline bool solver_constant_rate(const std::string& name) {
  return name == "svrg" || name == "cg" || name == "sag";
}

/// Runs one solver with a pass budget; "svrg" resolves to the convex or
/// non-convex variant by the problem's mu.
inline RunTrace run_solver(const std::string& name, const CompositeProblem& problem,
                           const ExperimentConfig& cfg, Scalar beta, int pass_budget,
                           const Vector* reference) {
  OptimizerConfig oc;
  oc.m = cfg.m;
  oc.beta = beta;
  oc.seed = cfg.seed;
  oc.eval_every = cfg.eval_every;
  oc.outer = parse_outer(cfg.outer);
  oc.sgd_constant_step = cfg.sgd_constant;
  oc.rda_gamma = cfg.rda_gamma;
  oc.record_wallclock = cfg.timing;
  const Index n = problem.dataset.n();
  const Index m = cfg.m > 0 ? cfg.m : 2 * n;
  if (name == "svrg") {
    oc.epochs = svrg_epochs_for_passes(n, m, static_cast<Scalar>(pass_budget));
    return problem.is_convex() ? run_prox_svrg(problem, oc, reference)
                               : run_nonconvex_prox_svrg(problem, oc, reference);
  }
  oc.epochs = pass_budget;
  if (name == "cg") return run_composite_gradient(problem, oc, reference);
  if (name == "sgd") return run_prox_sgd(problem, oc, reference);
  if (name == "sag") return run_prox_sag(problem, oc, reference);
  if (name == "rda") return run_rda(problem, oc, reference);
  throw std::invalid_argument("unknown solver '" + name + "'");
}

// ---------------------------------------------------------------------------
// Learning-rate grid search
// ---------------------------------------------------------------------------

struct GridPoint {
  Scalar beta = 0.0;
  Scalar final_objective = 0.0;
  bool diverged = false;
};

struct GridResult {
  std::string solver;
  std::vector<GridPoint> points;
  std::optional<Scalar> winner;  // empty when every point diverged
};

/// Probes every rate in the exponential grid with a short run and keeps the
/// rate with the smallest final objective.
inline GridResult grid_search(const std::string& solver, const CompositeProblem& problem,
                              const ExperimentConfig& cfg) {
  const auto rates = learning_rate_grid();
  GridResult result;
  result.solver = solver;
  result.points.resize(rates.size());
  parallel_for_each(static_cast<int>(rates.size()), cfg.workers, [&](int k) {
    GridPoint point;
    point.beta = rates[static_cast<std::size_t>(k)];
    try {
      RunTrace probe = run_solver(solver, problem, cfg, point.beta, cfg.grid_passes, nullptr);
      point.diverged = probe.diverged;
      point.final_objective = probe.final_objective();
      if (!std::isfinite(point.final_objective)) point.diverged = true;
    } catch (const std::exception&) {
      point.diverged = true;
      point.final_objective = std::numeric_limits<Scalar>::quiet_NaN();
    }
    result.points[static_cast<std::size_t>(k)] = point;
  });
  Scalar best_obj = std::numeric_limits<Scalar>::infinity();
  for (const auto& point : result.points) {
    if (!point.diverged && point.final_objective < best_obj) {
      best_obj = point.final_objective;
      result.winner = point.beta;
    }
  }
  return result;
}

}  // namespace vrprox
