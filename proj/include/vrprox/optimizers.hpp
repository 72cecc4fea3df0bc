#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "vrprox/problem.hpp"
#include "vrprox/rng.hpp"
#include "vrprox/trace.hpp"

namespace vrprox {

/// Outer-iterate rule for the variance-reduced solvers: the convex variant
/// averages the inner iterates, the non-convex variant picks one uniformly at
/// random. kDefault resolves per variant at launch.
enum class OuterIterate { kDefault, kAverage, kRandom, kLast };

struct OptimizerConfig {
  Index m = 0;             // inner-loop length; 0 resolves to 2n at launch
  Scalar beta = 0.0;       // step size, must be > 0
  int epochs = 50;         // outer iterations (SVRG) or passes (other solvers)
  std::uint64_t seed = 0;
  int eval_every = 1;      // trace granularity in epochs/passes
  OuterIterate outer = OuterIterate::kDefault;
  bool sgd_constant_step = false;  // default schedule is beta/(1 + t/n)
  Scalar rda_gamma = 1.0;
  bool enforce_theory_step = false;  // reject beta above 1/L (resp. 1/L_mu)
  bool record_wallclock = true;
  Vector theta0;  // empty resolves to zeros (feasible for every rho > 0)
  Scalar divergence_factor = 1e3;
};

/// v = (grad f_i(theta) - mu theta) - (grad f_i(snapshot) - mu snapshot) + vtilde.
/// vtilde must be the (mu-shifted) full gradient taken at the same snapshot.
inline Vector reduced_variance_gradient(const LossKind& loss, const Dataset& data, Index i,
                                        const Vector& theta, const Vector& snapshot,
                                        const Vector& vtilde, Scalar mu = 0.0) {
  if (vtilde.size() != data.p() || snapshot.size() != data.p())
    throw std::invalid_argument("reduced_variance_gradient: stale snapshot (dimension mismatch)");
  Vector v = component_gradient(loss, data, i, theta) -
             component_gradient(loss, data, i, snapshot) + vtilde;
  if (mu != 0.0) v.noalias() += mu * (snapshot - theta);
  return v;
}

namespace detail {

enum class Solver { kSvrg, kNonconvexSvrg, kCompositeGradient, kProxSgd, kProxSag, kRda };

inline const char* solver_name(Solver s) {
  switch (s) {
    case Solver::kSvrg: return "svrg";
    case Solver::kNonconvexSvrg: return "nonconvex_svrg";
    case Solver::kCompositeGradient: return "composite_gradient";
    case Solver::kProxSgd: return "prox_sgd";
    case Solver::kProxSag: return "prox_sag";
    case Solver::kRda: return "rda";
  }
  return "?";
}

struct LaunchState {
  Index n = 0, p = 0, m = 0;
  Scalar mu = 0.0;
  Scalar smoothness = 0.0;
  bool beta_within_theory = false;
  Vector theta0;
};

inline LaunchState prepare_launch(const CompositeProblem& problem, const OptimizerConfig& config,
                                  Solver solver) {
  problem.validate();
  if (!(config.beta > 0.0)) throw std::invalid_argument("OptimizerConfig: beta must be > 0");
  if (config.epochs < 1) throw std::invalid_argument("OptimizerConfig: epochs must be >= 1");
  LaunchState st;
  st.n = problem.dataset.n();
  st.p = problem.dataset.p();
  st.m = config.m > 0 ? config.m : 2 * st.n;
  st.mu = problem.mu();

  if (solver == Solver::kSvrg && st.mu != 0.0)
    throw std::invalid_argument("run_prox_svrg: requires a convex problem (mu = 0)");
  if (solver == Solver::kNonconvexSvrg && st.mu == 0.0)
    throw std::invalid_argument("run_nonconvex_prox_svrg: requires mu > 0");
  if (solver == Solver::kRda && st.mu != 0.0)
    throw std::invalid_argument("run_rda: convex problems only");

  st.smoothness = smoothness_bound(problem.loss, problem.dataset).L;
  if (st.smoothness <= 0.0)
    throw std::invalid_argument("optimizer launch: smoothness L = 0 (all-zero design), "
                                "no step size is admissible");
  const Scalar l_mu = std::max(st.mu, st.smoothness - st.mu);
  const Scalar theory_cap = (st.mu > 0.0) ? 1.0 / l_mu : 1.0 / st.smoothness;
  st.beta_within_theory = config.beta <= theory_cap;
  if (config.enforce_theory_step && !st.beta_within_theory)
    throw std::invalid_argument("OptimizerConfig: beta exceeds the theory step bound");

  if (config.theta0.size() == 0) {
    st.theta0 = Vector::Zero(st.p);
  } else {
    if (config.theta0.size() != st.p)
      throw std::invalid_argument("OptimizerConfig: theta0 dimension mismatch");
    st.theta0 = config.theta0;
    if (!feasibility_check(problem, st.theta0))
      st.theta0 = project_onto_constraint(problem.reg, problem.lambda, problem.rho, st.theta0);
  }
  return st;
}

// Collects per-record rows, the divergence guard, and the wall clock.
class TraceBuilder {
 public:
  TraceBuilder(const CompositeProblem& problem, const OptimizerConfig& config,
               const Vector* reference, Solver solver)
      : problem_(problem), record_wallclock_(config.record_wallclock),
        divergence_factor_(config.divergence_factor),
        start_(std::chrono::steady_clock::now()) {
    if (reference != nullptr) ref_obj_ = objective_value(problem, *reference);
    trace_.note = solver_name(solver);
  }

  void set_initial(const Vector& theta0) {
    initial_obj_ = objective_value_unchecked(problem_, theta0);
    add(0, 0.0, 0, initial_obj_);
  }

  Scalar initial_objective() const { return initial_obj_; }

  // Returns false when the run must abort (divergence). Non-finite objectives
  // go to the note only: every recorded objective stays finite.
  bool observe(int epoch, Scalar passes, std::int64_t evals, Scalar objective, bool do_record) {
    const bool bad = !std::isfinite(objective) ||
                     objective > divergence_factor_ * (std::abs(initial_obj_) + 1.0);
    if (bad) {
      trace_.diverged = true;
      trace_.note += ": diverged at epoch " + std::to_string(epoch) + " (objective " +
                     std::to_string(objective) + " from " + std::to_string(initial_obj_) + ")";
      if (std::isfinite(objective)) add(epoch, passes, evals, objective);
      return false;
    }
    if (do_record) add(epoch, passes, evals, objective);
    return true;
  }

  RunTrace take(Vector theta) {
    trace_.theta = std::move(theta);
    return std::move(trace_);
  }

  void append_note(const std::string& s) { trace_.note += s; }

 private:
  void add(int epoch, Scalar passes, std::int64_t evals, Scalar objective) {
    TraceRecord rec;
    rec.epoch = epoch;
    rec.passes = passes;
    rec.objective = objective;
    if (ref_obj_) rec.gap = objective - *ref_obj_;
    rec.grad_evals = evals;
    rec.wallclock_ms =
        record_wallclock_
            ? std::chrono::duration<Scalar, std::milli>(std::chrono::steady_clock::now() - start_)
                  .count()
            : 0.0;
    trace_.records.push_back(rec);
  }

  const CompositeProblem& problem_;
  RunTrace trace_;
  std::optional<Scalar> ref_obj_;
  Scalar initial_obj_ = 0.0;
  bool record_wallclock_ = true;
  Scalar divergence_factor_ = 1e3;
  std::chrono::steady_clock::time_point start_;
};

struct SvrgOptions {
  bool nonconvex = false;
  Scalar stop_tol = 0.0;   // > 0: stop when the per-epoch objective change drops below it
                           // and the outer iterate has stabilized
  bool track_best = false; // return the best outer iterate instead of the last
};

inline RunTrace run_svrg_impl(const CompositeProblem& problem, const OptimizerConfig& config,
                              const Vector* reference, const SvrgOptions& opts) {
  const Solver solver = opts.nonconvex ? Solver::kNonconvexSvrg : Solver::kSvrg;
  const LaunchState st = prepare_launch(problem, config, solver);
  const Scalar mu = st.mu;
  const Scalar beta = config.beta;
  const Scalar w0 = beta * problem.lambda;
  const Scalar feas_limit = problem.rho * (1.0 + kFeasSlack);
  OuterIterate outer_mode = config.outer;
  if (outer_mode == OuterIterate::kDefault)
    outer_mode = opts.nonconvex ? OuterIterate::kRandom : OuterIterate::kAverage;

  TraceBuilder builder(problem, config, reference, solver);
  builder.set_initial(st.theta0);
  if (!st.beta_within_theory) builder.append_note(" [beta above theory bound]");

  Rng rng(derive_stream(config.seed, static_cast<std::uint64_t>(solver)));
  const Dataset& data = problem.dataset;
  const Index n = st.n, m = st.m;

  Vector outer = st.theta0;
  Vector best = outer;
  Vector prev_outer = outer;
  Scalar best_obj = builder.initial_objective();
  Scalar prev_obj = builder.initial_objective();
  Vector theta(st.p), z(st.p), inner_sum(st.p), picked(st.p), derivs(n), grad_full(st.p);
  std::int64_t evals = 0;

  for (int s = 1; s <= config.epochs; ++s) {
    // Snapshot: full (mu-shifted) gradient and cached per-sample derivatives.
    Vector acts = data.design_times(outer);
    for (Index i = 0; i < n; ++i)
      derivs(i) = loss_derivative(problem.loss, acts(i), data.response(i));
    grad_full = data.design_transpose_times(derivs) / static_cast<Scalar>(n);
    const Vector base = beta * grad_full;  // beta * grad F(snapshot), convex part

    theta = outer;
    inner_sum.setZero();
    const Index pick_k = (outer_mode == OuterIterate::kRandom) ? 1 + rng.next_index(m) : 0;
    for (Index k = 1; k <= m; ++k) {
      const Index i = rng.next_index(n);
      const Scalar a = data.row_dot(i, theta);
      const Scalar diff = loss_derivative(problem.loss, a, data.response(i)) - derivs(i);
      z.noalias() = (1.0 + beta * mu) * theta - base;
      data.add_scaled_row(i, -beta * diff, z);
      const Scalar norm = shrink_into(problem.reg, problem.lambda, w0, z, theta);
      if (norm > feas_limit)
        theta = constrained_prox_weighted(problem.reg, problem.lambda, w0, problem.rho, z);
      if (outer_mode == OuterIterate::kAverage) inner_sum += theta;
      if (k == pick_k) picked = theta;
    }
    switch (outer_mode) {
      case OuterIterate::kAverage: outer = inner_sum / static_cast<Scalar>(m); break;
      case OuterIterate::kRandom: outer = picked; break;
      default: outer = theta; break;
    }
    evals += n + 2 * m;
    const Scalar obj = objective_value_unchecked(problem, outer);
    const bool record = (s % config.eval_every == 0) || s == config.epochs;
    if (!builder.observe(s, static_cast<Scalar>(evals) / static_cast<Scalar>(n), evals, obj,
                         record))
      break;
    if (opts.track_best && obj < best_obj) {
      best_obj = obj;
      best = outer;
    }
    if (opts.stop_tol > 0.0 && std::abs(prev_obj - obj) < opts.stop_tol &&
        (outer - prev_outer).lpNorm<Eigen::Infinity>() < 1e-9)
      break;
    prev_obj = obj;
    prev_outer = outer;
  }
  return builder.take(opts.track_best && best_obj < objective_value_unchecked(problem, outer)
                          ? std::move(best)
                          : std::move(outer));
}

}  // namespace detail

/// Convex proximal SVRG: per epoch a full-gradient snapshot, m variance-
/// reduced prox steps, outer iterate = average of the inner iterates.
inline RunTrace run_prox_svrg(const CompositeProblem& problem, const OptimizerConfig& config,
                              const Vector* reference = nullptr) {
  return detail::run_svrg_impl(problem, config, reference, {});
}

/// Non-convex proximal SVRG: mu-shifted gradients, convexified-penalty prox,
/// outer iterate drawn uniformly from the inner iterates.
inline RunTrace run_nonconvex_prox_svrg(const CompositeProblem& problem,
                                        const OptimizerConfig& config,
                                        const Vector* reference = nullptr) {
  detail::SvrgOptions opts;
  opts.nonconvex = true;
  return detail::run_svrg_impl(problem, config, reference, opts);
}

/// Full proximal gradient: theta <- prox(theta - beta * grad F_mu(theta)).
/// One record per pass; config.epochs counts passes.
inline RunTrace run_composite_gradient(const CompositeProblem& problem,
                                       const OptimizerConfig& config,
                                       const Vector* reference = nullptr) {
  const auto st = detail::prepare_launch(problem, config, detail::Solver::kCompositeGradient);
  detail::TraceBuilder builder(problem, config, reference, detail::Solver::kCompositeGradient);
  builder.set_initial(st.theta0);
  const Dataset& data = problem.dataset;
  const Scalar beta = config.beta, mu = st.mu;
  Vector theta = st.theta0, z(st.p);
  std::int64_t evals = 0;
  for (int t = 1; t <= config.epochs; ++t) {
    Vector acts = data.design_times(theta);
    for (Index i = 0; i < st.n; ++i)
      acts(i) = loss_derivative(problem.loss, acts(i), data.response(i));
    const Vector grad = data.design_transpose_times(acts) / static_cast<Scalar>(st.n);
    z.noalias() = (1.0 + beta * mu) * theta - beta * grad;
    theta = constrained_prox(problem.reg, problem.lambda, beta, problem.rho, z);
    evals += st.n;
    const Scalar obj = objective_value_unchecked(problem, theta);
    const bool record = (t % config.eval_every == 0) || t == config.epochs;
    if (!builder.observe(t, static_cast<Scalar>(t), evals, obj, record)) break;
  }
  return builder.take(std::move(theta));
}

/// Proximal stochastic gradient with the beta/(1 + t/n) schedule by default
/// (constant-step mode via config.sgd_constant_step). config.epochs = passes.
inline RunTrace run_prox_sgd(const CompositeProblem& problem, const OptimizerConfig& config,
                             const Vector* reference = nullptr) {
  const auto st = detail::prepare_launch(problem, config, detail::Solver::kProxSgd);
  detail::TraceBuilder builder(problem, config, reference, detail::Solver::kProxSgd);
  builder.set_initial(st.theta0);
  Rng rng(derive_stream(config.seed, static_cast<std::uint64_t>(detail::Solver::kProxSgd)));
  const Dataset& data = problem.dataset;
  const Scalar mu = st.mu;
  Vector theta = st.theta0, z(st.p);
  std::int64_t evals = 0;
  std::int64_t t = 0;
  for (int pass = 1; pass <= config.epochs; ++pass) {
    for (Index k = 0; k < st.n; ++k, ++t) {
      const Scalar beta_t = config.sgd_constant_step
                                ? config.beta
                                : config.beta / (1.0 + static_cast<Scalar>(t) / static_cast<Scalar>(st.n));
      const Index i = rng.next_index(st.n);
      const Scalar g = loss_derivative(problem.loss, data.row_dot(i, theta), data.response(i));
      z.noalias() = (1.0 + beta_t * mu) * theta;
      data.add_scaled_row(i, -beta_t * g, z);
      const Scalar norm = detail::shrink_into(problem.reg, problem.lambda, beta_t * problem.lambda,
                                              z, theta);
      if (norm > problem.rho * (1.0 + kFeasSlack))
        theta = constrained_prox_weighted(problem.reg, problem.lambda, beta_t * problem.lambda,
                                          problem.rho, z);
    }
    evals += st.n;
    const Scalar obj = objective_value_unchecked(problem, theta);
    const bool record = (pass % config.eval_every == 0) || pass == config.epochs;
    if (!builder.observe(pass, static_cast<Scalar>(pass), evals, obj, record)) break;
  }
  return builder.take(std::move(theta));
}

/// Proximal SAG: per-sample gradient table (one scalar per sample for the
/// linear losses), one table entry refreshed per step, prox step on the table
/// average. The table is initialized by one full pass, counted in the trace.
inline RunTrace run_prox_sag(const CompositeProblem& problem, const OptimizerConfig& config,
                             const Vector* reference = nullptr) {
  const auto st = detail::prepare_launch(problem, config, detail::Solver::kProxSag);
  detail::TraceBuilder builder(problem, config, reference, detail::Solver::kProxSag);
  builder.set_initial(st.theta0);
  Rng rng(derive_stream(config.seed, static_cast<std::uint64_t>(detail::Solver::kProxSag)));
  const Dataset& data = problem.dataset;
  const Scalar beta = config.beta, mu = st.mu;
  const Scalar inv_n = 1.0 / static_cast<Scalar>(st.n);

  Vector theta = st.theta0, z(st.p);
  Vector table(st.n);
  for (Index i = 0; i < st.n; ++i)
    table(i) = loss_derivative(problem.loss, data.row_dot(i, theta), data.response(i));
  Vector avg = data.design_transpose_times(table) / static_cast<Scalar>(st.n);
  std::int64_t evals = st.n;  // initialization pass
  const bool record_init = (1 % config.eval_every == 0) || config.epochs == 1;
  if (!builder.observe(1, 1.0, evals, objective_value_unchecked(problem, theta), record_init))
    return builder.take(std::move(theta));

  for (int pass = 2; pass <= config.epochs; ++pass) {
    for (Index k = 0; k < st.n; ++k) {
      const Index i = rng.next_index(st.n);
      const Scalar g = loss_derivative(problem.loss, data.row_dot(i, theta), data.response(i));
      data.add_scaled_row(i, (g - table(i)) * inv_n, avg);
      table(i) = g;
      z.noalias() = (1.0 + beta * mu) * theta - beta * avg;
      const Scalar norm = detail::shrink_into(problem.reg, problem.lambda, beta * problem.lambda,
                                              z, theta);
      if (norm > problem.rho * (1.0 + kFeasSlack))
        theta = constrained_prox_weighted(problem.reg, problem.lambda, beta * problem.lambda,
                                          problem.rho, z);
    }
    evals += st.n;
    const Scalar obj = objective_value_unchecked(problem, theta);
    const bool record = (pass % config.eval_every == 0) || pass == config.epochs;
    if (!builder.observe(pass, static_cast<Scalar>(pass), evals, obj, record)) break;
  }
  return builder.take(std::move(theta));
}

/// Regularized dual averaging with the gamma / (2 sqrt(t)) proximal term:
/// theta_{t+1} = argmin over the constraint ball of
///   <gbar_t, theta> + lambda psi(theta) + gamma/(2 sqrt(t)) ||theta||^2,
/// i.e. the constrained prox of -sqrt(t)/gamma * gbar_t at weight
/// lambda sqrt(t)/gamma. Convex problems only.
inline RunTrace run_rda(const CompositeProblem& problem, const OptimizerConfig& config,
                        const Vector* reference = nullptr) {
  const auto st = detail::prepare_launch(problem, config, detail::Solver::kRda);
  if (!(config.rda_gamma > 0.0)) throw std::invalid_argument("run_rda: gamma must be > 0");
  detail::TraceBuilder builder(problem, config, reference, detail::Solver::kRda);
  builder.set_initial(st.theta0);
  Rng rng(derive_stream(config.seed, static_cast<std::uint64_t>(detail::Solver::kRda)));
  const Dataset& data = problem.dataset;

  Vector theta = st.theta0, gbar = Vector::Zero(st.p), z(st.p);
  std::int64_t evals = 0;
  std::int64_t t = 0;
  for (int pass = 1; pass <= config.epochs; ++pass) {
    for (Index k = 0; k < st.n; ++k) {
      ++t;
      const Index i = rng.next_index(st.n);
      const Scalar g = loss_derivative(problem.loss, data.row_dot(i, theta), data.response(i));
      gbar *= static_cast<Scalar>(t - 1) / static_cast<Scalar>(t);
      data.add_scaled_row(i, g / static_cast<Scalar>(t), gbar);
      const Scalar step = std::sqrt(static_cast<Scalar>(t)) / config.rda_gamma;
      z.noalias() = -step * gbar;
      theta = constrained_prox_weighted(problem.reg, problem.lambda, step * problem.lambda,
                                        problem.rho, z);
    }
    evals += st.n;
    const Scalar obj = objective_value_unchecked(problem, theta);
    const bool record = (pass % config.eval_every == 0) || pass == config.epochs;
    if (!builder.observe(pass, static_cast<Scalar>(pass), evals, obj, record)) break;
  }
  return builder.take(std::move(theta));
}

/// Epoch budget that yields at least `passes` effective passes for an SVRG
/// run with inner length m on n samples.
inline int svrg_epochs_for_passes(Index n, Index m, Scalar passes) {
  const Scalar per_epoch = (static_cast<Scalar>(n) + 2.0 * static_cast<Scalar>(m)) /
                           static_cast<Scalar>(n);
  return std::max(1, static_cast<int>(std::ceil(passes / per_epoch)));
}

/// High-precision solution for gap computation: runs the matching SVRG
/// variant for at least 500 effective passes or until the per-epoch objective
/// change drops below 1e-12, whichever comes first, and keeps the best outer
/// iterate seen.
inline Vector reference_solution(const CompositeProblem& problem, const OptimizerConfig& config,
                                 Scalar pass_budget = 500.0) {
  OptimizerConfig cfg = config;
  const Index n = problem.dataset.n();
  const Index m = cfg.m > 0 ? cfg.m : 2 * n;
  cfg.m = m;
  cfg.epochs = svrg_epochs_for_passes(n, m, pass_budget);
  cfg.eval_every = std::numeric_limits<int>::max();  // records not needed
  detail::SvrgOptions opts;
  opts.nonconvex = !problem.is_convex();
  opts.stop_tol = 1e-12;
  opts.track_best = true;
  RunTrace trace = detail::run_svrg_impl(problem, cfg, nullptr, opts);
  if (trace.diverged)
    throw std::runtime_error("reference_solution: solver diverged (" + trace.note + ")");
  return trace.theta;
}

}  // namespace vrprox
