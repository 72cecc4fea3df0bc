#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "vrprox/dataset.hpp"
#include "vrprox/losses.hpp"
#include "vrprox/regularizers.hpp"
#include "vrprox/types.hpp"

namespace vrprox {

/// Composite estimator G(theta) = F(theta) + penalty(theta) minimized over
/// { constraint-norm <= rho }. Convex when mu() == 0; otherwise the loss or
/// the penalty carries a concave quadratic handled by the mu-shift in the
/// non-convex solver. Immutable after construction.
struct CompositeProblem {
  Dataset dataset;
  LossKind loss;
  RegularizerKind reg;
  Scalar lambda = 0.0;
  Scalar rho = std::numeric_limits<Scalar>::infinity();

  CompositeProblem() = default;
  CompositeProblem(Dataset data, LossKind loss_kind, RegularizerKind reg_kind, Scalar lambda_in,
                   Scalar rho_in)
      : dataset(std::move(data)), loss(loss_kind), reg(std::move(reg_kind)), lambda(lambda_in),
        rho(rho_in) {
    validate();
  }

  // Concavity parameter: gamma_w for corrected-quadratic, 1/(zeta-1) or 1/b
  // for SCAD/MCP, zero for the convex estimators.
  Scalar mu() const {
    if (loss.tag == LossTag::kCorrectedQuadratic) return loss.gamma_w;
    return reg.concavity();
  }

  bool is_convex() const { return mu() == 0.0; }

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("CompositeProblem: lambda must be >= 0");
    if (!(rho > 0.0)) throw std::invalid_argument("CompositeProblem: rho must be > 0");
    if (!reg.is_convex() && loss.tag != LossTag::kSquared)
      throw std::invalid_argument("CompositeProblem: SCAD/MCP pair with squared loss only");
    if (loss.tag == LossTag::kCorrectedQuadratic && reg.tag != RegTag::kL1)
      throw std::invalid_argument("CompositeProblem: corrected-quadratic pairs with l1 only");
    if (reg.tag == RegTag::kGroup) reg.groups.validate(dataset.p());
    if (loss.tag == LossTag::kLogistic) {
      for (Index i = 0; i < dataset.n(); ++i) {
        const Scalar y = dataset.response(i);
        if (y != 1.0 && y != -1.0)
          throw std::invalid_argument("CompositeProblem: logistic labels must be in {-1,+1}");
      }
    }
  }
};

/// As objective_value but returns non-finite values instead of throwing;
/// solver divergence guards use this.
inline Scalar objective_value_unchecked(const CompositeProblem& problem, const Vector& theta) {
  if (theta.size() != problem.dataset.p())
    throw std::invalid_argument("objective_value: dim mismatch");
  Scalar value = mean_loss(problem.loss, problem.dataset, theta);
  if (problem.loss.tag == LossTag::kCorrectedQuadratic)
    value -= 0.5 * problem.loss.gamma_w * theta.squaredNorm();
  value += penalty_value(problem.reg, problem.lambda, theta);
  return value;
}

/// G(theta) with SCAD/MCP evaluated in original non-convex form and the
/// corrected-quadratic concave shift included.
inline Scalar objective_value(const CompositeProblem& problem, const Vector& theta) {
  const Scalar value = objective_value_unchecked(problem, theta);
  if (!std::isfinite(value)) throw std::runtime_error("objective_value: non-finite value");
  return value;
}

inline Scalar constraint_norm(const CompositeProblem& problem, const Vector& theta) {
  return constraint_norm(problem.reg, problem.lambda, theta);
}

inline bool feasibility_check(const CompositeProblem& problem, const Vector& theta) {
  if (theta.size() != problem.dataset.p())
    throw std::invalid_argument("feasibility_check: dim mismatch");
  return constraint_norm(problem, theta) <= problem.rho * (1.0 + kFeasSlack);
}

}  // namespace vrprox
