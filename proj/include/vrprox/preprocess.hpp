#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <utility>

#include "vrprox/dataset.hpp"
#include "vrprox/regularizers.hpp"
#include "vrprox/types.hpp"

namespace vrprox {

struct NormalizeResult {
  Dataset dataset;
  Vector scales;  // multiplier applied per column; map coefficients back with theta_j * scales_j
};

/// Rescales every column with ||X_j||_2 / sqrt(n) > 1 down to equality. Zero
/// columns are left untouched. Idempotent.
inline NormalizeResult column_normalize(const Dataset& data) {
  const Scalar root_n = std::sqrt(static_cast<Scalar>(data.n()));
  Vector norms = data.column_norms();
  Vector scales = Vector::Ones(data.p());
  for (Index j = 0; j < data.p(); ++j) {
    if (norms(j) > root_n) scales(j) = root_n / norms(j);
  }
  return {data.scaled_columns(scales), std::move(scales)};
}

/// Group counterpart: enforces |||X_G|||_{2->2} / sqrt(n) <= 1 per block via
/// the largest singular value, with one shared multiplier per block.
inline NormalizeResult group_normalize(const Dataset& data, const GroupMap& groups) {
  groups.validate(data.p());
  const Scalar root_n = std::sqrt(static_cast<Scalar>(data.n()));
  Vector scales = Vector::Ones(data.p());
  for (const auto& block : groups.blocks) {
    const Index q = static_cast<Index>(block.size());
    Matrix cols(data.n(), q);
    for (Index c = 0; c < q; ++c) {
      if (data.is_dense()) {
        cols.col(c) = data.dense().col(block[static_cast<std::size_t>(c)]);
      } else {
        cols.col(c) = Matrix(data.sparse()).col(block[static_cast<std::size_t>(c)]);
      }
    }
    // Largest singular value via the q-by-q Gram matrix (q is small).
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cols.transpose() * cols);
    const Scalar op_norm = std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
    if (op_norm > root_n) {
      const Scalar s = root_n / op_norm;
      for (Index j : block) scales(j) = s;
    }
  }
  return {data.scaled_columns(scales), std::move(scales)};
}

struct ExpandResult {
  Dataset dataset;
  GroupMap groups;  // one group {x_j, x_j^2, x_j^3} per original feature
};

/// Third-degree polynomial expansion: feature j becomes the triple
/// (x_j, x_j^2, x_j^3); the returned partition groups each triple.
inline ExpandResult polynomial_group_expand(const Dataset& data, int degree = 3) {
  if (degree != 3)
    throw std::invalid_argument("polynomial_group_expand: only degree 3 is supported");
  if (!data.is_dense())
    throw std::invalid_argument("polynomial_group_expand: dense datasets only");
  const Index p = data.p();
  Matrix expanded(data.n(), 3 * p);
  const Matrix& X = data.dense();
  for (Index j = 0; j < p; ++j) {
    expanded.col(3 * j) = X.col(j);
    expanded.col(3 * j + 1) = X.col(j).array().square();
    expanded.col(3 * j + 2) = X.col(j).array().cube();
  }
  return {Dataset(std::move(expanded), data.responses()), GroupMap::contiguous(3 * p, 3)};
}

/// Dense copy of a dataset (standardization and expansion destroy sparsity).
inline Dataset densify(const Dataset& data) {
  if (data.is_dense()) return data;
  RowMatrix dense = data.sparse();
  return Dataset(std::move(dense), data.responses());
}

/// Zero-mean unit-variance columns; constant columns are centered only. Used
/// ahead of polynomial expansion so higher powers stay in range.
inline Dataset standardize_columns(const Dataset& data_in) {
  const Dataset data = densify(data_in);
  Matrix X = data.dense();
  const Scalar n = static_cast<Scalar>(data.n());
  for (Index j = 0; j < data.p(); ++j) {
    const Scalar mean = X.col(j).mean();
    X.col(j).array() -= mean;
    const Scalar sd = std::sqrt(X.col(j).squaredNorm() / n);
    if (sd > 0.0) X.col(j) /= sd;
  }
  return Dataset(std::move(X), data.responses());
}

}  // namespace vrprox
