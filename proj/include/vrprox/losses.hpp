#pragma once

#include <cmath>
#include <stdexcept>

#include "vrprox/dataset.hpp"
#include "vrprox/types.hpp"

namespace vrprox {

enum class LossTag { kSquared, kLogistic, kCorrectedQuadratic };

/// Loss family of the finite sum. For corrected-quadratic the component
/// functions are the convex parts f_i(t) = (z_i't - y_i)^2 / 2; the concave
/// -(gamma_w/2)||t||^2 shift is applied by the solvers as a mu-shift.
struct LossKind {
  LossTag tag = LossTag::kSquared;
  Scalar gamma_w = 0.0;  // noise-covariance scale, corrected-quadratic only

  static LossKind squared() { return {LossTag::kSquared, 0.0}; }
  static LossKind logistic() { return {LossTag::kLogistic, 0.0}; }
  static LossKind corrected(Scalar gamma_w) {
    if (gamma_w < 0.0) throw std::invalid_argument("LossKind: gamma_w must be >= 0");
    return {LossTag::kCorrectedQuadratic, gamma_w};
  }
};

struct SmoothnessBound {
  Scalar L = 0.0;         // max over components
  Vector per_component;   // L_i
};

// log(1 + exp(-a)) without overflow.
inline Scalar log1p_exp_neg(Scalar a) {
  return std::max(-a, 0.0) + std::log1p(std::exp(-std::abs(a)));
}

inline Scalar sigmoid(Scalar t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const Scalar e = std::exp(t);
  return e / (1.0 + e);
}

/// Value of the convex component f_i as a function of the linear activation
/// a = x_i' theta and the response y.
inline Scalar loss_value(const LossKind& loss, Scalar a, Scalar y) {
  switch (loss.tag) {
    case LossTag::kSquared:
    case LossTag::kCorrectedQuadratic: {
      const Scalar r = a - y;
      return 0.5 * r * r;
    }
    case LossTag::kLogistic:
      return log1p_exp_neg(y * a);
  }
  return 0.0;
}

/// d f_i / d a, so that the component gradient is loss_derivative(...) * x_i.
inline Scalar loss_derivative(const LossKind& loss, Scalar a, Scalar y) {
  switch (loss.tag) {
    case LossTag::kSquared:
    case LossTag::kCorrectedQuadratic:
      return a - y;
    case LossTag::kLogistic:
      return -y * sigmoid(-y * a);
  }
  return 0.0;
}

inline Vector component_gradient(const LossKind& loss, const Dataset& data, Index i,
                                 const Vector& theta) {
  if (i < 0 || i >= data.n()) throw std::out_of_range("component_gradient: sample index");
  if (theta.size() != data.p()) throw std::invalid_argument("component_gradient: dim mismatch");
  const Scalar g = loss_derivative(loss, data.row_dot(i, theta), data.response(i));
  Vector out = Vector::Zero(data.p());
  data.add_scaled_row(i, g, out);
  return out;
}

/// Mean of the component gradients (convex part for corrected-quadratic).
/// Accumulated in sample order so the result equals the mean of
/// component_gradient over i = 0..n-1 exactly.
inline Vector full_gradient(const LossKind& loss, const Dataset& data, const Vector& theta) {
  if (theta.size() != data.p()) throw std::invalid_argument("full_gradient: dim mismatch");
  Vector acc = Vector::Zero(data.p());
  for (Index i = 0; i < data.n(); ++i) {
    const Scalar g = loss_derivative(loss, data.row_dot(i, theta), data.response(i));
    data.add_scaled_row(i, g, acc);
  }
  return acc / static_cast<Scalar>(data.n());
}

/// (1/n) sum_i f_i(theta), convex part only. May return a non-finite value on
/// diverged iterates; callers that require finiteness check it.
inline Scalar mean_loss(const LossKind& loss, const Dataset& data, const Vector& theta) {
  if (theta.size() != data.p()) throw std::invalid_argument("mean_loss: dim mismatch");
  const Vector activations = data.design_times(theta);
  Scalar acc = 0.0;
  for (Index i = 0; i < data.n(); ++i)
    acc += loss_value(loss, activations(i), data.response(i));
  return acc / static_cast<Scalar>(data.n());
}

/// Component smoothness constants: ||x_i||^2 for the quadratic families,
/// ||x_i||^2 / 4 for logistic.
inline SmoothnessBound smoothness_bound(const LossKind& loss, const Dataset& data) {
  SmoothnessBound bound;
  bound.per_component.resize(data.n());
  const Scalar factor = (loss.tag == LossTag::kLogistic) ? 0.25 : 1.0;
  for (Index i = 0; i < data.n(); ++i)
    bound.per_component(i) = factor * data.row_squared_norm(i);
  bound.L = bound.per_component.maxCoeff();
  return bound;
}

}  // namespace vrprox
