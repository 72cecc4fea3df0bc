#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "vrprox/covariance.hpp"
#include "vrprox/dataset.hpp"
#include "vrprox/regularizers.hpp"
#include "vrprox/rng.hpp"
#include "vrprox/types.hpp"

namespace vrprox {

/// Raised when a convergence-certificate formula is evaluated outside its
/// precondition (for example 4 L beta >= 1): the constants exist only inside
/// the linear-rate regime.
class NoCertificateError : public std::runtime_error {
 public:
  explicit NoCertificateError(const std::string& what) : std::runtime_error(what) {}
};

/// Restricted-strong-convexity parameters of the loss plus the design
/// covariance extremes they are derived from.
struct RscParams {
  Scalar sigma = 0.0;      // curvature
  Scalar tau_sigma = 0.0;  // tolerance coefficient
  Scalar nu = 0.0;         // max diagonal of Sigma
  Scalar sigma_min = 0.0;
  Scalar sigma_max = 0.0;
};

struct ModifiedRsc {
  Scalar sigma_bar = 0.0;
  bool certified = false;  // sigma_bar > 0
};

/// sigma - mu - 64 tau_sigma H^2. Negative values are returned as-is with the
/// certificate flag cleared.
inline ModifiedRsc modified_rsc(Scalar sigma, Scalar tau_sigma, Scalar compatibility,
                                Scalar mu = 0.0) {
  if (sigma < 0.0 || tau_sigma < 0.0 || compatibility < 0.0 || mu < 0.0)
    throw std::invalid_argument("modified_rsc: inputs must be nonnegative");
  ModifiedRsc out;
  out.sigma_bar = sigma - mu - 64.0 * tau_sigma * compatibility * compatibility;
  out.certified = out.sigma_bar > 0.0;
  return out;
}

struct ConvexContraction {
  Scalar alpha = 0.0;
  Scalar Q = 0.0;  // sigma_bar * beta * (1 - 4 L beta) * m
};

inline ConvexContraction contraction_convex(Scalar beta, Scalar sigma_bar, Scalar L, Index m) {
  if (!(beta > 0.0) || !(L > 0.0) || m < 1)
    throw std::invalid_argument("contraction_convex: need beta > 0, L > 0, m >= 1");
  const Scalar one_minus = 1.0 - 4.0 * L * beta;
  if (one_minus <= 0.0)
    throw NoCertificateError("contraction_convex: 4 L beta >= 1, no certificate");
  if (!(sigma_bar > 0.0))
    throw NoCertificateError("contraction_convex: sigma_bar <= 0, no certificate");
  ConvexContraction out;
  const Scalar md = static_cast<Scalar>(m);
  out.Q = sigma_bar * beta * one_minus * md;
  out.alpha = 1.0 / out.Q + (4.0 * L * beta / one_minus) * ((md + 1.0) / md);
  return out;
}

struct NonconvexContraction {
  Scalar alpha = 0.0;
  Scalar chi = 0.0;
};

inline NonconvexContraction contraction_nonconvex(Scalar beta, Scalar mu, Scalar L, Index m,
                                                  Scalar sigma_bar) {
  if (!(beta > 0.0) || !(L > 0.0) || m < 1 || mu < 0.0)
    throw std::invalid_argument("contraction_nonconvex: bad inputs");
  if (!(sigma_bar > 0.0))
    throw NoCertificateError("contraction_nonconvex: sigma_bar <= 0, no certificate");
  const Scalar md = static_cast<Scalar>(m);
  const Scalar denom =
      beta * md * (2.0 - 8.0 * L * beta - (2.0 * mu / sigma_bar) * (1.0 + 4.0 * L * beta));
  if (!(denom > 0.0))
    throw NoCertificateError(
        "contraction_nonconvex: nonpositive denominator; needs mu/sigma_bar < "
        "(1 - 4 L beta)/(1 + 4 L beta)");
  const Scalar coupling = 1.0 + beta * mu + 4.0 * L * mu * beta * beta * (1.0 + md);
  NonconvexContraction out;
  out.alpha = (8.0 * L * beta * beta * (md + 1.0) + 2.0 * coupling / sigma_bar) / denom;
  out.chi = ((2.0 * mu * beta * md / sigma_bar) * (1.0 + 4.0 * L * beta) +
             2.0 * coupling / sigma_bar) /
            denom;
  return out;
}

/// e^2 = (8 tau / Q) (8 H ||theta_hat - theta*|| + 8 psi(theta*_Mperp))^2.
inline Scalar statistical_tolerance_convex(Scalar tau_sigma, Scalar Q, Scalar compatibility,
                                           Scalar estimation_error, Scalar psi_perp) {
  if (!(Q > 0.0)) throw std::invalid_argument("statistical_tolerance_convex: Q must be > 0");
  const Scalar inner = 8.0 * compatibility * estimation_error + 8.0 * psi_perp;
  return (8.0 * tau_sigma / Q) * inner * inner;
}

/// e^2 = 64 tau chi r ||theta_hat - theta*||^2.
inline Scalar statistical_tolerance_nonconvex(Scalar tau_sigma, Scalar chi, Scalar r,
                                              Scalar estimation_error) {
  if (tau_sigma < 0.0 || chi < 0.0 || r < 0.0 || estimation_error < 0.0)
    throw std::invalid_argument("statistical_tolerance_nonconvex: inputs must be nonnegative");
  return 64.0 * tau_sigma * chi * r * estimation_error * estimation_error;
}

// ---------------------------------------------------------------------------
// Corollary lambda lower bounds (natural-log convention; unidentified
// universal constants are explicit caller inputs with default 1).
// ---------------------------------------------------------------------------

inline Scalar lambda_bound_lasso(Scalar u, Index p, Index n) {
  return 6.0 * u * std::sqrt(std::log(static_cast<Scalar>(p)) / static_cast<Scalar>(n));
}

inline Scalar lambda_bound_group(Scalar u, Index q, Index num_groups, Index n) {
  const Scalar nd = static_cast<Scalar>(n);
  return 4.0 * u * (std::sqrt(static_cast<Scalar>(q) / nd) +
                    std::sqrt(std::log(static_cast<Scalar>(num_groups)) / nd));
}

inline Scalar lambda_bound_scad(Scalar u, Index p, Index n, Scalar rho, Scalar tau = 1.0) {
  const Scalar ratio = std::log(static_cast<Scalar>(p)) / static_cast<Scalar>(n);
  return std::max(12.0 * u * std::sqrt(ratio), 16.0 * rho * tau * ratio);
}

inline Scalar lambda_bound_corrected(Scalar sigma_max, Scalar gamma_w, Scalar noise_sd,
                                     Scalar theta_star_norm, Index p, Index n, Scalar rho,
                                     Scalar tau = 1.0, Scalar c1 = 1.0) {
  const Scalar ratio = std::log(static_cast<Scalar>(p)) / static_cast<Scalar>(n);
  const Scalar phi = (std::sqrt(sigma_max) + std::sqrt(gamma_w)) *
                     (noise_sd + std::sqrt(gamma_w) * theta_star_norm);
  return std::max(c1 * phi * std::sqrt(ratio), 16.0 * rho * tau * ratio);
}

/// ceil(3 ln(gap0 / kappa^2) / ln(1/alpha)); zero when already within
/// tolerance.
inline int epochs_needed(Scalar gap0, Scalar kappa2, Scalar alpha) {
  if (!(kappa2 > 0.0)) throw std::invalid_argument("epochs_needed: kappa^2 must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw NoCertificateError("epochs_needed: alpha outside (0,1), no certificate");
  if (gap0 <= kappa2) return 0;
  const Scalar s = 3.0 * std::log(gap0 / kappa2) / std::log(1.0 / alpha);
  return static_cast<int>(std::ceil(s));
}

// ---------------------------------------------------------------------------
// Cone condition (decomposability of the estimation error)
// ---------------------------------------------------------------------------

struct ConeReport {
  Scalar lhs = 0.0;              // psi(Delta*_Mperp)
  Scalar rhs = 0.0;              // 3 psi(Delta*_M) + 4 psi(theta*_Mperp)
  Scalar slack = 0.0;            // rhs - lhs
  bool pass = false;             // lhs <= rhs + 1e-8
  Scalar dual_of_gradient = 0.0; // psi*(grad F(theta*))
  Scalar lambda = 0.0;
  bool lambda_ok = false;        // lambda >= 2 psi*(grad F(theta*))
};

/// Evaluates both sides of psi(Delta*_Mperp) <= 3 psi(Delta*_M) +
/// 4 psi(theta*_Mperp) via the subspace split. For SCAD/MCP the l1 norm plays
/// the role of psi (their constraint lower bound), with the l-infinity dual.
inline ConeReport check_cone_condition(const Vector& theta_hat, const Vector& theta_star,
                                       const SubspaceModel& sub, const RegularizerKind& reg,
                                       Scalar lambda, const Vector& grad_at_star) {
  const auto psi = [&](const Vector& v) {
    if (reg.is_convex()) return penalty_value(reg, 1.0, v);
    return v.lpNorm<1>();
  };
  const Vector delta = theta_hat - theta_star;
  const auto [delta_m, delta_perp] = subspace_split(delta, sub);
  const auto [star_m, star_perp] = subspace_split(theta_star, sub);

  ConeReport report;
  report.lhs = psi(delta_perp);
  report.rhs = 3.0 * psi(delta_m) + 4.0 * psi(star_perp);
  report.slack = report.rhs - report.lhs;
  report.pass = report.lhs <= report.rhs + 1e-8;
  report.dual_of_gradient = reg.is_convex() ? dual_norm(reg, grad_at_star)
                                            : grad_at_star.lpNorm<Eigen::Infinity>();
  report.lambda = lambda;
  report.lambda_ok = lambda >= 2.0 * report.dual_of_gradient;
  return report;
}

// ---------------------------------------------------------------------------
// Empirical RSC sampling check
// ---------------------------------------------------------------------------

struct RscCheckReport {
  int trials = 0;
  Scalar c1_used = 1.0;
  Scalar c1_min = 0.0;        // smallest c1 making the inequality hold on every sample
  Scalar pass_fraction = 0.0; // fraction of samples satisfied at c1_used
  int violations = 0;
};

/// Samples directions (single coordinates, sparse, dense, and null-space
/// adversaries when p > n) and checks
///   ||X delta||^2 / n >= (1/2) delta' Sigma delta - c1 nu (ln p / n) ||delta||_1^2.
inline RscCheckReport empirical_rsc_check(const Dataset& data, const CovarianceModel& cov,
                                          int trials, std::uint64_t seed, Scalar c1 = 1.0) {
  if (trials < 1) throw std::invalid_argument("empirical_rsc_check: trials must be >= 1");
  if (!(cov.scale > 0.0)) throw std::invalid_argument("empirical_rsc_check: degenerate Sigma");
  const Index n = data.n(), p = data.p();
  const Scalar log_ratio = std::log(static_cast<Scalar>(p)) / static_cast<Scalar>(n);

  // Gram factorization for null-space directions, built once when p > n.
  const int kinds = p > n ? 4 : 3;
  Eigen::LDLT<Matrix> gram_ldlt;
  bool gram_ready = false;
  const auto null_project = [&](const Vector& v) {
    if (!gram_ready) {
      Matrix gram(n, n);
      for (Index i = 0; i < n; ++i)
        for (Index k = i; k < n; ++k) {
          Scalar dot = 0.0;
          if (data.is_dense()) dot = data.dense().row(i).dot(data.dense().row(k));
          else dot = data.sparse().row(i).dot(data.sparse().row(k));
          gram(i, k) = dot;
          gram(k, i) = dot;
        }
      gram_ldlt.compute(gram);
      gram_ready = true;
    }
    const Vector xv = data.design_times(v);
    return Vector(v - data.design_transpose_times(gram_ldlt.solve(xv)));
  };

  RscCheckReport report;
  report.trials = trials;
  report.c1_used = c1;
  int satisfied = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_stream(seed, 0x5c5c, static_cast<std::uint64_t>(t)));
    Vector delta = Vector::Zero(p);
    switch (t % kinds) {
      case 0:  // single coordinate
        delta(rng.next_index(p)) = 1.0;
        break;
      case 1: {  // sparse, random small support
        const Index k = 1 + rng.next_index(std::min<Index>(p, 64));
        for (Index j = 0; j < k; ++j) delta(rng.next_index(p)) = rng.next_normal();
        break;
      }
      case 2:  // dense
        for (Index j = 0; j < p; ++j) delta(j) = rng.next_normal();
        break;
      default: {  // dense direction projected onto the null space of X
        for (Index j = 0; j < p; ++j) delta(j) = rng.next_normal();
        delta = null_project(delta);
        if (delta.norm() < 1e-12) delta.setOnes();
        break;
      }
    }
    const Scalar lhs = data.design_times(delta).squaredNorm() / static_cast<Scalar>(n);
    const Scalar base = 0.5 * cov.quad_form(delta);
    const Scalar l1 = delta.lpNorm<1>();
    const Scalar tolerance_unit = cov.nu() * log_ratio * l1 * l1;
    const Scalar needed = tolerance_unit > 0.0 ? std::max(0.0, (base - lhs) / tolerance_unit) : 0.0;
    report.c1_min = std::max(report.c1_min, needed);
    if (lhs >= base - c1 * tolerance_unit - 1e-12) ++satisfied;
  }
  report.pass_fraction = static_cast<Scalar>(satisfied) / static_cast<Scalar>(trials);
  report.violations = trials - satisfied;
  return report;
}

/// Defaults used for synthetic Gaussian designs: sigma = sigma_min(Sigma)/2,
/// tau_sigma = c1 nu(Sigma) ln(p)/n.
inline RscParams rsc_params_for_gaussian(const CovarianceModel& cov, Index p, Index n,
                                         Scalar c1 = 1.0) {
  RscParams out;
  out.nu = cov.nu();
  out.sigma_min = cov.sigma_min(p);
  out.sigma_max = cov.sigma_max(p);
  out.sigma = 0.5 * out.sigma_min;
  out.tau_sigma = c1 * out.nu * std::log(static_cast<Scalar>(p)) / static_cast<Scalar>(n);
  return out;
}

}  // namespace vrprox
