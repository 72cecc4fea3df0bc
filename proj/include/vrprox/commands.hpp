#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vrprox/bench.hpp"

namespace vrprox {

// ---------------------------------------------------------------------------
// gen: synthetic dataset + ground-truth sidecar on disk
// ---------------------------------------------------------------------------

inline nlohmann::json truth_to_json(const GroundTruth& truth) {
  nlohmann::json out;
  std::vector<Index> idx;
  std::vector<Scalar> val;
  for (Index j = 0; j < truth.theta_star.size(); ++j) {
    if (truth.theta_star(j) != 0.0) {
      idx.push_back(j);
      val.push_back(truth.theta_star(j));
    }
  }
  out["dimension"] = truth.theta_star.size();
  out["indices"] = idx;
  out["values"] = val;
  out["support"] = truth.support.support;
  out["support_kind"] =
      truth.support.kind == SubspaceModel::Kind::kCoordinate ? "coordinate" : "group";
  return out;
}

/// Writes the dataset in libsvm text plus a JSON sidecar with the generating
/// parameters and planted truth; byte-identical on re-invocation.
inline int cmd_gen(const ExperimentConfig& cfg, const std::string& out_path) {
  try {
    if (cfg.model == "dataset")
      throw std::invalid_argument("gen: needs a synthetic model, not 'dataset'");
    ExperimentConfig raw = cfg;
    raw.normalize = false;  // gen stores raw data; normalization happens at run time
    raw.lambda = std::max<Scalar>(cfg.lambda, 0.0);
    raw.rho = cfg.rho > 0 ? cfg.rho : 1.0;
    AssembledProblem assembled = assemble_problem(raw);

    write_libsvm(assembled.problem.dataset, out_path);

    nlohmann::json sidecar;
    sidecar["model"] = cfg.model;
    sidecar["n"] = cfg.n;
    sidecar["p"] = cfg.p;
    sidecar["r"] = cfg.r;
    sidecar["q"] = cfg.q;
    sidecar["num_groups"] = cfg.num_groups;
    sidecar["s_g"] = cfg.s_g;
    sidecar["b"] = cfg.b;
    sidecar["u"] = cfg.u;
    sidecar["gamma_w"] = cfg.gamma_w;
    sidecar["sigma_scale"] = cfg.sigma_scale;
    sidecar["seed"] = cfg.seed;
    sidecar["regression"] = true;
    if (assembled.truth) sidecar["truth"] = truth_to_json(*assembled.truth);
    if (assembled.hidden_x) {
      std::string blob;
      blob.reserve(static_cast<std::size_t>(assembled.hidden_x->size()) * 8);
      for (Index i = 0; i < assembled.hidden_x->rows(); ++i)
        for (Index j = 0; j < assembled.hidden_x->cols(); ++j) {
          blob += format_g17((*assembled.hidden_x)(i, j));
          blob += ' ';
        }
      char buf[20];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(fnv1a64(blob)));
      sidecar["hidden_x_fnv1a64"] = std::string(buf);
    }
    std::ofstream side(out_path + ".truth.json");
    if (!side) throw std::runtime_error("gen: cannot open sidecar for " + out_path);
    side << sidecar.dump(2) << '\n';
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "gen: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gen: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// run: reference + every configured solver + manifest
// ---------------------------------------------------------------------------

struct SolverOutcome {
  std::string solver;
  Scalar beta = 0.0;
  bool diverged = false;
  Scalar final_objective = 0.0;
  std::optional<Scalar> final_gap;
  std::string trace_path;
  RunTrace trace;
};

struct RunArtifacts {
  std::string hash;
  std::string manifest_path;
  Scalar reference_objective = 0.0;
  Vector reference;
  std::vector<SolverOutcome> outcomes;
  AssembledProblem assembled;
};

/// Resolves per-solver rates: explicit beta when given, otherwise the grid
/// winner for rate-driven solvers (RDA is driven by gamma and gets a nominal
/// rate of 1).
inline std::map<std::string, Scalar> resolve_betas(const ExperimentConfig& cfg,
                                                   const CompositeProblem& problem,
                                                   std::map<std::string, GridResult>* grids) {
  if (cfg.solvers.empty()) throw std::invalid_argument("run: at least one solver is required");
  std::map<std::string, Scalar> betas;
  for (const auto& solver : cfg.solvers) {
    if (!solver_known(solver)) throw std::invalid_argument("run: unknown solver " + solver);
    if (solver == "rda") {
      betas[solver] = 1.0;
      continue;
    }
    if (cfg.beta > 0.0 && !cfg.grid) {
      betas[solver] = cfg.beta;
      continue;
    }
    if (!cfg.grid && cfg.beta <= 0.0)
      throw std::invalid_argument("run: beta must be > 0 (or enable grid search)");
    GridResult grid = grid_search(solver, problem, cfg);
    if (!grid.winner)
      throw std::runtime_error("run: every grid rate diverged for solver " + solver);
    betas[solver] = *grid.winner;
    if (grids) (*grids)[solver] = std::move(grid);
  }
  return betas;
}

inline int cmd_run(const ExperimentConfig& cfg, RunArtifacts* artifacts_out = nullptr) {
  try {
    AssembledProblem assembled = assemble_problem(cfg);
    const CompositeProblem& problem = assembled.problem;
    const std::string hash = cfg.hash_hex();
    std::filesystem::create_directories(cfg.out_dir);

    std::map<std::string, GridResult> grids;
    const auto betas = resolve_betas(cfg, problem, &grids);

    // One reference for the whole comparison, computed with the SVRG variant
    // at its resolved rate.
    Scalar ref_beta = betas.count("svrg") ? betas.at("svrg") : cfg.beta;
    if (ref_beta <= 0.0) {
      GridResult grid = grid_search("svrg", problem, cfg);
      if (!grid.winner) throw std::runtime_error("run: reference grid search diverged everywhere");
      ref_beta = *grid.winner;
    }
    OptimizerConfig ref_cfg;
    ref_cfg.beta = ref_beta;
    ref_cfg.m = cfg.m;
    ref_cfg.seed = cfg.seed;
    ref_cfg.record_wallclock = cfg.timing;
    const Vector reference =
        reference_solution(problem, ref_cfg, static_cast<Scalar>(cfg.reference_passes));
    const Scalar ref_obj = objective_value(problem, reference);

    std::vector<SolverOutcome> outcomes(cfg.solvers.size());
    parallel_for_each(static_cast<int>(cfg.solvers.size()), cfg.workers, [&](int k) {
      const std::string& solver = cfg.solvers[static_cast<std::size_t>(k)];
      SolverOutcome outcome;
      outcome.solver = solver;
      outcome.beta = betas.at(solver);
      RunTrace trace = run_solver(solver, problem, cfg, outcome.beta, cfg.epochs, &reference);
      outcome.diverged = trace.diverged;
      outcome.final_objective = trace.final_objective();
      outcome.final_gap = trace.final_gap();
      outcome.trace_path = cfg.out_dir + "/" + hash + "_" + solver + ".csv";
      write_trace_csv(trace, outcome.trace_path);
      outcome.trace = std::move(trace);
      outcomes[static_cast<std::size_t>(k)] = std::move(outcome);
    });

    nlohmann::json manifest;
    manifest["config_hash"] = hash;
    {
      nlohmann::json conf;
      std::istringstream canon(cfg.canonical_text());
      std::string line;
      while (std::getline(canon, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) conf[line.substr(0, eq)] = line.substr(eq + 1);
      }
      manifest["config"] = std::move(conf);
    }
    manifest["resolved"]["lambda"] = assembled.resolved_lambda;
    manifest["resolved"]["rho"] = assembled.resolved_rho;
    manifest["resolved"]["m"] = cfg.m > 0 ? cfg.m : 2 * problem.dataset.n();
    manifest["resolved"]["normalized"] = assembled.normalized;
    manifest["resolved"]["reference_beta"] = ref_beta;
    manifest["resolved"]["reference_objective"] = ref_obj;
    bool any_diverged = false;
    for (const auto& outcome : outcomes) {
      nlohmann::json row;
      row["beta"] = outcome.beta;
      row["diverged"] = outcome.diverged;
      row["final_objective"] = outcome.final_objective;
      if (outcome.final_gap) row["final_gap"] = *outcome.final_gap;
      row["trace"] = outcome.trace_path;
      manifest["solvers"][outcome.solver] = std::move(row);
      any_diverged = any_diverged || outcome.diverged;
    }
    for (const auto& [solver, grid] : grids) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& point : grid.points) {
        rows.push_back({{"beta", point.beta},
                        {"final_objective", point.final_objective},
                        {"diverged", point.diverged}});
      }
      manifest["grid"][solver] = std::move(rows);
    }
    const std::string manifest_path = cfg.out_dir + "/" + hash + "_manifest.json";
    {
      std::ofstream out(manifest_path);
      if (!out) throw std::runtime_error("run: cannot write manifest");
      out << manifest.dump(2) << '\n';
    }

    if (artifacts_out) {
      artifacts_out->hash = hash;
      artifacts_out->manifest_path = manifest_path;
      artifacts_out->reference_objective = ref_obj;
      artifacts_out->reference = reference;
      artifacts_out->outcomes = std::move(outcomes);
      artifacts_out->assembled = std::move(assembled);
    }
    return any_diverged ? 1 : 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "run: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "run: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// grid: the 13-point rate sweep for the constant-rate solvers
// ---------------------------------------------------------------------------

struct GridArtifacts {
  std::string report_path;
  std::map<std::string, GridResult> results;
  std::map<std::string, std::string> winner_traces;
};

inline int cmd_grid(const ExperimentConfig& cfg, GridArtifacts* artifacts_out = nullptr) {
  try {
    AssembledProblem assembled = assemble_problem(cfg);
    const CompositeProblem& problem = assembled.problem;
    const std::string hash = cfg.hash_hex();
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<std::string> solvers;
    for (const auto& solver : cfg.solvers) {
      if (!solver_known(solver)) throw std::invalid_argument("grid: unknown solver " + solver);
      if (solver_constant_rate(solver)) solvers.push_back(solver);
    }
    if (solvers.empty())
      throw std::invalid_argument("grid: no constant-rate solver (svrg/cg/sag) configured");

    GridArtifacts artifacts;
    artifacts.report_path = cfg.out_dir + "/" + hash + "_grid.csv";
    std::ofstream report(artifacts.report_path);
    if (!report) throw std::runtime_error("grid: cannot write report");
    report << "solver,beta,final_objective,diverged\n";

    bool any_winner = false;
    for (const auto& solver : solvers) {
      GridResult result = grid_search(solver, problem, cfg);
      for (const auto& point : result.points) {
        report << solver << ',' << format_g17(point.beta) << ','
               << format_g17(point.final_objective) << ',' << (point.diverged ? 1 : 0) << '\n';
      }
      if (result.winner) {
        any_winner = true;
        RunTrace best = run_solver(solver, problem, cfg, *result.winner, cfg.epochs, nullptr);
        const std::string path = cfg.out_dir + "/" + hash + "_" + solver + "_best.csv";
        write_trace_csv(best, path);
        artifacts.winner_traces[solver] = path;
      }
      artifacts.results[solver] = std::move(result);
    }
    if (artifacts_out) *artifacts_out = std::move(artifacts);
    return any_winner ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "grid: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "grid: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// diagnose: the full Theorem 1 / Theorem 3 constant pipeline on a synthetic
// instance with ground truth
// ---------------------------------------------------------------------------

struct DiagnoseReport {
  RscParams rsc;
  Scalar compatibility = 0.0;
  Scalar mu = 0.0;
  Scalar smoothness = 0.0;
  Scalar beta = 0.0;
  Index m = 0;
  Scalar sigma_bar = 0.0;
  bool sigma_bar_certified = false;
  std::optional<Scalar> alpha;
  std::optional<Scalar> Q;
  std::optional<Scalar> chi;
  std::optional<Scalar> e2;
  std::optional<int> epochs_to_tolerance;
  std::string no_certificate_reason;
  Scalar lambda_min = 0.0;
  Scalar estimation_error = 0.0;  // ||theta_hat - theta*||
  ConeReport cone;
  RscCheckReport rsc_check;
};

inline int cmd_diagnose(const ExperimentConfig& cfg, DiagnoseReport* report_out = nullptr) {
  try {
    if (cfg.model == "dataset")
      throw std::invalid_argument("diagnose: needs a synthetic model with ground truth");
    AssembledProblem assembled = assemble_problem(cfg);
    const CompositeProblem& problem = assembled.problem;
    const GroundTruth& truth = *assembled.truth;
    const Index n = problem.dataset.n(), p = problem.dataset.p();
    const std::string hash = cfg.hash_hex();
    std::filesystem::create_directories(cfg.out_dir);

    DiagnoseReport rep;
    rep.rsc = rsc_params_for_gaussian(assembled.covariance, p, n, cfg.c1);
    rep.compatibility = subspace_compatibility(truth.support);
    rep.mu = problem.mu();
    rep.smoothness = smoothness_bound(problem.loss, problem.dataset).L;
    rep.m = cfg.m > 0 ? cfg.m : 2 * n;
    rep.beta = cfg.beta > 0.0 ? cfg.beta : 1.0 / (16.0 * rep.smoothness);

    const ModifiedRsc bar = modified_rsc(rep.rsc.sigma, rep.rsc.tau_sigma, rep.compatibility,
                                         rep.mu);
    rep.sigma_bar = bar.sigma_bar;
    rep.sigma_bar_certified = bar.certified;

    // Reference solution and estimation error.
    OptimizerConfig ref_cfg;
    ref_cfg.beta = rep.beta;
    ref_cfg.m = rep.m;
    ref_cfg.seed = cfg.seed;
    const Vector theta_hat = reference_solution(problem, ref_cfg);
    rep.estimation_error = (theta_hat - truth.theta_star).norm();

    const auto [star_m, star_perp] = subspace_split(truth.theta_star, truth.support);
    const Scalar psi_perp = problem.reg.is_convex()
                                ? penalty_value(problem.reg, 1.0, star_perp)
                                : star_perp.lpNorm<1>();

    try {
      if (problem.is_convex()) {
        const ConvexContraction c = contraction_convex(rep.beta, rep.sigma_bar, rep.smoothness,
                                                       rep.m);
        rep.alpha = c.alpha;
        rep.Q = c.Q;
        rep.e2 = statistical_tolerance_convex(rep.rsc.tau_sigma, c.Q, rep.compatibility,
                                              rep.estimation_error, psi_perp);
      } else {
        const NonconvexContraction c = contraction_nonconvex(rep.beta, rep.mu, rep.smoothness,
                                                             rep.m, rep.sigma_bar);
        rep.alpha = c.alpha;
        rep.chi = c.chi;
        rep.e2 = statistical_tolerance_nonconvex(
            rep.rsc.tau_sigma, c.chi, static_cast<Scalar>(truth.support.support.size()),
            rep.estimation_error);
      }
      if (rep.alpha && *rep.alpha > 0.0 && *rep.alpha < 1.0) {
        const Scalar gap0 =
            objective_value(problem, Vector::Zero(p)) - objective_value(problem, theta_hat);
        const Scalar kappa2 = std::max(*rep.e2 / (1.0 - *rep.alpha), 1e-12);
        if (gap0 > 0.0) rep.epochs_to_tolerance = epochs_needed(gap0, kappa2, *rep.alpha);
      } else if (rep.alpha) {
        rep.no_certificate_reason = "alpha outside [0,1)";
      }
    } catch (const NoCertificateError& e) {
      rep.no_certificate_reason = e.what();
    }

    if (cfg.model == "lasso") rep.lambda_min = lambda_bound_lasso(cfg.u, p, n);
    else if (cfg.model == "group") rep.lambda_min = lambda_bound_group(cfg.u, cfg.q, cfg.num_groups, n);
    else if (cfg.model == "scad" || cfg.model == "mcp")
      rep.lambda_min = lambda_bound_scad(cfg.u, p, n, assembled.resolved_rho, cfg.tau);
    else if (cfg.model == "corrected")
      rep.lambda_min = lambda_bound_corrected(assembled.covariance.sigma_max(p), cfg.gamma_w,
                                              cfg.u, truth.theta_star.norm(), p, n,
                                              assembled.resolved_rho, cfg.tau, cfg.c1);

    Vector grad_star = full_gradient(problem.loss, problem.dataset, truth.theta_star);
    if (problem.loss.tag == LossTag::kCorrectedQuadratic)
      grad_star -= problem.mu() * truth.theta_star;
    rep.cone = check_cone_condition(theta_hat, truth.theta_star, truth.support, problem.reg,
                                    problem.lambda, grad_star);

    rep.rsc_check = empirical_rsc_check(problem.dataset, assembled.covariance, 200, cfg.seed,
                                        cfg.c1);

    nlohmann::json doc;
    doc["config_hash"] = hash;
    doc["constants"] = {{"tau", cfg.tau}, {"c1", cfg.c1}};
    doc["rsc"] = {{"sigma", rep.rsc.sigma},       {"tau_sigma", rep.rsc.tau_sigma},
                  {"nu", rep.rsc.nu},             {"sigma_min", rep.rsc.sigma_min},
                  {"sigma_max", rep.rsc.sigma_max}};
    doc["compatibility"] = rep.compatibility;
    doc["mu"] = rep.mu;
    doc["smoothness"] = rep.smoothness;
    doc["beta"] = rep.beta;
    doc["m"] = rep.m;
    doc["sigma_bar"] = rep.sigma_bar;
    doc["sigma_bar_certified"] = rep.sigma_bar_certified;
    if (rep.alpha) doc["alpha"] = *rep.alpha;
    if (rep.Q) doc["Q"] = *rep.Q;
    if (rep.chi) doc["chi"] = *rep.chi;
    if (rep.e2) doc["e2"] = *rep.e2;
    if (rep.epochs_to_tolerance) doc["epochs_needed"] = *rep.epochs_to_tolerance;
    if (!rep.no_certificate_reason.empty()) doc["no_certificate"] = rep.no_certificate_reason;
    doc["lambda_min"] = rep.lambda_min;
    doc["lambda"] = assembled.resolved_lambda;
    doc["estimation_error"] = rep.estimation_error;
    doc["cone"] = {{"lhs", rep.cone.lhs},     {"rhs", rep.cone.rhs},
                   {"slack", rep.cone.slack}, {"pass", rep.cone.pass},
                   {"dual_of_gradient", rep.cone.dual_of_gradient},
                   {"lambda_ok", rep.cone.lambda_ok}};
    doc["empirical_rsc"] = {{"trials", rep.rsc_check.trials},
                            {"c1_used", rep.rsc_check.c1_used},
                            {"c1_min", rep.rsc_check.c1_min},
                            {"pass_fraction", rep.rsc_check.pass_fraction},
                            {"violations", rep.rsc_check.violations}};
    const std::string path = cfg.out_dir + "/" + hash + "_diagnose.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("diagnose: cannot write report");
    out << doc.dump(2) << '\n';
    std::cout << doc.dump(2) << "\n";

    if (report_out) *report_out = std::move(rep);
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "diagnose: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "diagnose: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// phase: sparsity sweep with fitted per-pass decay factors
// ---------------------------------------------------------------------------

struct PhaseRow {
  Index r = 0;
  Scalar decay_factor = 0.0;
  bool linear = false;
  std::string note;
};

struct PhaseTable {
  std::vector<PhaseRow> rows;
  std::string table_path;
};

inline constexpr Scalar kPhaseLinearThreshold = 0.995;

// Default fit window for the phase sweep: the tail of the run, past the
// transient descent that every rate shows regardless of regime.
inline constexpr Scalar kPhaseFitLo = 50.0;
inline constexpr Scalar kPhaseFitHi = 150.0;

inline int cmd_phase_with_window(const ExperimentConfig& cfg, const std::vector<Index>& r_list,
                                 Scalar fit_lo, Scalar fit_hi, PhaseTable* table_out = nullptr) {
  try {
    if (r_list.empty()) throw std::invalid_argument("phase: empty r list");
    const std::string hash = cfg.hash_hex();
    std::filesystem::create_directories(cfg.out_dir);

    PhaseTable table;
    table.rows.resize(r_list.size());
    parallel_for_each(static_cast<int>(r_list.size()), cfg.workers, [&](int k) {
      PhaseRow row;
      row.r = r_list[static_cast<std::size_t>(k)];
      try {
        ExperimentConfig point = cfg;
        point.r = row.r;
        point.workers = 1;  // parallelism lives at the r level here
        AssembledProblem assembled = assemble_problem(point);
        const CompositeProblem& problem = assembled.problem;

        Scalar beta = point.beta;
        if (beta <= 0.0) {
          GridResult grid = grid_search("svrg", problem, point);
          if (!grid.winner) throw std::runtime_error("all grid rates diverged");
          beta = *grid.winner;
        }
        OptimizerConfig ref_cfg;
        ref_cfg.beta = beta;
        ref_cfg.m = point.m;
        ref_cfg.seed = point.seed;
        const Vector reference = reference_solution(problem, ref_cfg);
        RunTrace trace = run_solver("svrg", problem, point, beta, point.epochs, &reference);
        if (trace.diverged) {
          row.decay_factor = std::numeric_limits<Scalar>::quiet_NaN();
          row.linear = false;
          row.note = "diverged";
        } else {
          row.decay_factor = fit_decay_factor(trace, fit_lo, fit_hi);
          row.linear = std::isfinite(row.decay_factor) &&
                       row.decay_factor < kPhaseLinearThreshold;
          if (!std::isfinite(row.decay_factor)) {
            // Gap already at the reference-precision floor inside the fit
            // window: the run converged faster than the window resolves.
            const auto gap = trace.final_gap();
            if (gap && *gap <= 1e-10) {
              row.linear = true;
              row.decay_factor = 0.0;
              row.note = "converged before fit window";
            } else {
              row.note = "gap below fit floor";
            }
          }
        }
      } catch (const std::exception& e) {
        row.decay_factor = std::numeric_limits<Scalar>::quiet_NaN();
        row.linear = false;
        row.note = e.what();
      }
      table.rows[static_cast<std::size_t>(k)] = std::move(row);
    });

    table.table_path = cfg.out_dir + "/" + hash + "_phase.csv";
    std::ofstream out(table.table_path);
    if (!out) throw std::runtime_error("phase: cannot write table");
    out << "r,decay_factor,linear\n";
    for (const auto& row : table.rows)
      out << row.r << ',' << format_g17(row.decay_factor) << ',' << (row.linear ? 1 : 0) << '\n';

    if (table_out) *table_out = std::move(table);
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "phase: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "phase: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_phase(const ExperimentConfig& cfg, const std::vector<Index>& r_list,
                     PhaseTable* table_out = nullptr) {
  return cmd_phase_with_window(cfg, r_list, kPhaseFitLo, kPhaseFitHi, table_out);
}

}  // namespace vrprox
