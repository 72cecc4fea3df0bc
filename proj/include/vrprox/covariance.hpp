#pragma once

#include <cmath>
#include <stdexcept>

#include "vrprox/types.hpp"

namespace vrprox {

/// Compound-symmetric design covariance scale * ((1-b) I + b 11'). Covers all
/// synthetic suites: b = 0 gives scale * I. Kept in closed form so quadratic
/// forms and eigen-extremes cost O(p) at p = 5000.
struct CovarianceModel {
  Scalar b = 0.0;      // off-diagonal correlation, 0 <= b < 1
  Scalar scale = 1.0;  // diagonal value

  CovarianceModel() = default;
  CovarianceModel(Scalar b_in, Scalar scale_in = 1.0) : b(b_in), scale(scale_in) {
    if (b < 0.0 || b >= 1.0) throw std::invalid_argument("CovarianceModel: need 0 <= b < 1");
    if (!(scale > 0.0)) throw std::invalid_argument("CovarianceModel: scale must be > 0");
  }

  Scalar nu() const { return scale; }  // max diagonal entry

  Scalar sigma_min(Index p) const { return p > 1 ? scale * (1.0 - b) : scale; }

  Scalar sigma_max(Index p) const { return scale * (1.0 + b * static_cast<Scalar>(p - 1)); }

  // delta' Sigma delta
  Scalar quad_form(const Vector& delta) const {
    const Scalar s = delta.sum();
    return scale * ((1.0 - b) * delta.squaredNorm() + b * s * s);
  }
};

}  // namespace vrprox
