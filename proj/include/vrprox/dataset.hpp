#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vrprox/types.hpp"

namespace vrprox {

/// Design matrix plus response vector. Rows are either dense (contiguous) or
/// sparse (compressed row storage with sorted, duplicate-free indices); the
/// loss layer only touches rows through the dot/axpy accessors below so both
/// storages coexist. Immutable after construction and safe to share across
/// threads.
class Dataset {
 public:
  Dataset() = default;

  Dataset(RowMatrix design, Vector responses)
      : dense_(std::move(design)), responses_(std::move(responses)), is_dense_(true) {
    validate_common(dense_.rows(), dense_.cols());
    if (!dense_.allFinite()) throw std::invalid_argument("Dataset: non-finite design entries");
  }

  Dataset(const Matrix& design, Vector responses)
      : Dataset(RowMatrix(design), std::move(responses)) {}

  Dataset(SparseRowMatrix design, Vector responses)
      : sparse_(std::move(design)), responses_(std::move(responses)), is_dense_(false) {
    sparse_.makeCompressed();
    validate_common(sparse_.rows(), sparse_.cols());
  }

  Index n() const { return is_dense_ ? dense_.rows() : sparse_.rows(); }
  Index p() const { return is_dense_ ? dense_.cols() : sparse_.cols(); }
  bool is_dense() const { return is_dense_; }

  const RowMatrix& dense() const {
    if (!is_dense_) throw std::logic_error("Dataset: dense access on sparse data");
    return dense_;
  }
  const SparseRowMatrix& sparse() const {
    if (is_dense_) throw std::logic_error("Dataset: sparse access on dense data");
    return sparse_;
  }

  const Vector& responses() const { return responses_; }
  Scalar response(Index i) const { return responses_(i); }

  Scalar row_dot(Index i, const Vector& v) const {
    if (is_dense_) return dense_.row(i).dot(v);
    Scalar acc = 0.0;
    for (SparseRowMatrix::InnerIterator it(sparse_, i); it; ++it) acc += it.value() * v(it.col());
    return acc;
  }

  // out += c * x_i
  void add_scaled_row(Index i, Scalar c, Vector& out) const {
    if (is_dense_) {
      out.noalias() += c * dense_.row(i).transpose();
      return;
    }
    for (SparseRowMatrix::InnerIterator it(sparse_, i); it; ++it) out(it.col()) += c * it.value();
  }

  Scalar row_squared_norm(Index i) const {
    if (is_dense_) return dense_.row(i).squaredNorm();
    Scalar acc = 0.0;
    for (SparseRowMatrix::InnerIterator it(sparse_, i); it; ++it) acc += it.value() * it.value();
    return acc;
  }

  // X v, length n.
  Vector design_times(const Vector& v) const {
    return is_dense_ ? Vector(dense_ * v) : Vector(sparse_ * v);
  }

  // X^T r, length p: accumulated row by row in sample order, so the result is
  // bit-identical to summing scaled rows i = 0..n-1.
  Vector design_transpose_times(const Vector& r) const {
    Vector acc = Vector::Zero(p());
    for (Index i = 0; i < n(); ++i) add_scaled_row(i, r(i), acc);
    return acc;
  }

  Vector column_norms() const {
    if (is_dense_) return dense_.colwise().norm();
    Vector acc = Vector::Zero(p());
    for (Index i = 0; i < sparse_.rows(); ++i)
      for (SparseRowMatrix::InnerIterator it(sparse_, i); it; ++it)
        acc(it.col()) += it.value() * it.value();
    return acc.cwiseSqrt();
  }

  // New dataset with column j multiplied by scales(j).
  Dataset scaled_columns(const Vector& scales) const {
    if (scales.size() != p()) throw std::invalid_argument("scaled_columns: bad scale length");
    if (is_dense_) {
      RowMatrix scaled = dense_ * scales.asDiagonal();
      return Dataset(std::move(scaled), responses_);
    }
    SparseRowMatrix scaled = sparse_;
    for (Index i = 0; i < scaled.rows(); ++i)
      for (SparseRowMatrix::InnerIterator it(scaled, i); it; ++it)
        it.valueRef() *= scales(it.col());
    return Dataset(std::move(scaled), responses_);
  }

  Dataset with_responses(Vector y) const {
    Dataset out = *this;
    if (y.size() != n()) throw std::invalid_argument("with_responses: bad length");
    out.responses_ = std::move(y);
    return out;
  }

 private:
  void validate_common(Index n_rows, Index n_cols) const {
    if (n_rows < 1 || n_cols < 1) throw std::invalid_argument("Dataset: need n >= 1 and p >= 1");
    if (responses_.size() != n_rows)
      throw std::invalid_argument("Dataset: response length does not match row count");
    if (!responses_.allFinite()) throw std::invalid_argument("Dataset: non-finite responses");
  }

  RowMatrix dense_;
  SparseRowMatrix sparse_;
  Vector responses_;
  bool is_dense_ = true;
};

/// Builds a sparse dataset from per-row (index, value) pairs. Indices must be
/// in range; duplicates within a row are rejected, unsorted input is sorted.
inline Dataset make_sparse_dataset(Index p, const std::vector<std::vector<std::pair<Index, Scalar>>>& rows,
                                   Vector responses) {
  const Index n = static_cast<Index>(rows.size());
  SparseRowMatrix design(n, p);
  std::vector<Eigen::Triplet<Scalar>> triplets;
  for (Index i = 0; i < n; ++i) {
    auto entries = rows[static_cast<std::size_t>(i)];
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto [j, v] = entries[k];
      if (j < 0 || j >= p) throw std::invalid_argument("make_sparse_dataset: index out of range");
      if (k > 0 && entries[k - 1].first == j)
        throw std::invalid_argument("make_sparse_dataset: duplicate index within a row");
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
    }
  }
  design.setFromTriplets(triplets.begin(), triplets.end());
  return Dataset(std::move(design), std::move(responses));
}

}  // namespace vrprox
