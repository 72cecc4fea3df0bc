#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>

namespace vrprox {

using Scalar = double;
using Index = Eigen::Index;

using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
// Dense designs are stored row-major: the stochastic solvers stream rows.
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseRowMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
using IndexVector = Eigen::Matrix<Index, Eigen::Dynamic, 1>;

// Relative slack allowed on the side constraint: prox root-finding returns
// boundary points only up to its own tolerance.
inline constexpr Scalar kFeasSlack = 1e-9;

}  // namespace vrprox
