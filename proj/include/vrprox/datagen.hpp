#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vrprox/covariance.hpp"
#include "vrprox/dataset.hpp"
#include "vrprox/regularizers.hpp"
#include "vrprox/rng.hpp"
#include "vrprox/types.hpp"

namespace vrprox {

/// Synthetic-suite parameters. Compound-symmetric design covariance with
/// diagonal sigma_scale and off-diagonal sigma_scale * b; planted supports of
/// exact cardinality with +-1 coefficients.
struct SynthSpec {
  Index n = 0, p = 0;
  Index r = 0;                  // coordinate sparsity (lasso / scad / corrected)
  Index q = 0, num_groups = 0;  // group geometry, q * num_groups == p
  Index s_g = 0;                // number of nonzero groups
  Scalar b = 0.0;               // off-diagonal covariance
  Scalar noise_sd = 1.0;        // u
  Scalar gamma_w = 0.0;         // covariate-noise scale (corrected only)
  Scalar sigma_scale = 1.0;     // diagonal of Sigma
  std::uint64_t seed = 0;

  CovarianceModel covariance() const { return CovarianceModel(b, sigma_scale); }

  void validate_linear() const {
    if (n < 1 || p < 1) throw std::invalid_argument("SynthSpec: need n >= 1 and p >= 1");
    if (b < 0.0 || b >= 1.0) throw std::invalid_argument("SynthSpec: need 0 <= b < 1");
    if (r < 0 || r > p) throw std::invalid_argument("SynthSpec: need 0 <= r <= p");
    if (noise_sd < 0.0) throw std::invalid_argument("SynthSpec: noise sd must be >= 0");
    if (!(sigma_scale > 0.0)) throw std::invalid_argument("SynthSpec: sigma_scale must be > 0");
  }

  void validate_group() const {
    validate_linear();
    if (q < 1 || num_groups < 1 || q * num_groups != p)
      throw std::invalid_argument("SynthSpec: group geometry requires q * N_G == p");
    if (s_g < 0 || s_g > num_groups)
      throw std::invalid_argument("SynthSpec: need 0 <= s_G <= N_G");
  }
};

struct GroundTruth {
  Vector theta_star;
  SubspaceModel support;
};

struct SyntheticProblem {
  Dataset dataset;
  GroundTruth truth;
};

struct CorruptedProblem {
  Dataset dataset;  // observable Z = X + W
  GroundTruth truth;
  RowMatrix hidden_x;  // clean design, retained for evaluation only
};

namespace detail {

// k distinct indices in [0, p), deterministic under the stream.
inline std::vector<Index> sample_support(Index p, Index k, Rng& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) pool[static_cast<std::size_t>(j)] = j;
  for (Index j = 0; j < k; ++j) {
    const Index pick = j + rng.next_index(p - j);
    std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick)]);
  }
  std::vector<Index> out(pool.begin(), pool.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

// Row of N(0, scale*((1-b) I + b 11')) via x = sqrt(scale)(sqrt(b) g 1 + sqrt(1-b) z):
// O(p) per row, no p-by-p factor. Takes the row block by value (a view).
template <typename RowXpr>
void fill_gaussian_row(Scalar b, Scalar scale, Rng& rng, RowXpr row) {
  const Scalar shared = std::sqrt(b) * rng.next_normal();
  const Scalar own_sd = std::sqrt(1.0 - b);
  const Scalar root_scale = std::sqrt(scale);
  for (Index j = 0; j < row.size(); ++j)
    row(j) = root_scale * (shared + own_sd * rng.next_normal());
}

enum : std::uint64_t { kTagRow = 1, kTagSupport = 2, kTagSigns = 3, kTagNoise = 4, kTagCorrupt = 5 };

}  // namespace detail

/// y_i = x_i' theta* + noise, rows i.i.d. N(0, Sigma), theta* supported on r
/// coordinates with +-1 entries. Deterministic under spec.seed; rows use
/// per-row streams so generation can be parallelized without changing output.
inline SyntheticProblem gen_sparse_linear(const SynthSpec& spec) {
  spec.validate_linear();
  RowMatrix design(spec.n, spec.p);
  for (Index i = 0; i < spec.n; ++i) {
    Rng row_rng(derive_stream(spec.seed, detail::kTagRow, static_cast<std::uint64_t>(i)));
    detail::fill_gaussian_row(spec.b, spec.sigma_scale, row_rng, design.row(i));
  }

  Rng support_rng(derive_stream(spec.seed, detail::kTagSupport));
  const auto support = detail::sample_support(spec.p, spec.r, support_rng);
  Rng sign_rng(derive_stream(spec.seed, detail::kTagSigns));
  Vector theta_star = Vector::Zero(spec.p);
  for (Index j : support) theta_star(j) = sign_rng.next_sign();

  Rng noise_rng(derive_stream(spec.seed, detail::kTagNoise));
  Vector responses = design * theta_star;
  for (Index i = 0; i < spec.n; ++i) responses(i) += spec.noise_sd * noise_rng.next_normal();

  GroundTruth truth{std::move(theta_star), SubspaceModel::coordinates(support)};
  return {Dataset(std::move(design), std::move(responses)), std::move(truth)};
}

/// Group-structured support: s_G whole groups active, all their coordinates
/// set to +-1.
inline SyntheticProblem gen_group_sparse(const SynthSpec& spec) {
  spec.validate_group();
  RowMatrix design(spec.n, spec.p);
  for (Index i = 0; i < spec.n; ++i) {
    Rng row_rng(derive_stream(spec.seed, detail::kTagRow, static_cast<std::uint64_t>(i)));
    detail::fill_gaussian_row(spec.b, spec.sigma_scale, row_rng, design.row(i));
  }

  GroupMap groups = GroupMap::contiguous(spec.p, spec.q);
  Rng support_rng(derive_stream(spec.seed, detail::kTagSupport));
  const auto active = detail::sample_support(spec.num_groups, spec.s_g, support_rng);
  Rng sign_rng(derive_stream(spec.seed, detail::kTagSigns));
  Vector theta_star = Vector::Zero(spec.p);
  for (Index gid : active)
    for (Index j : groups.blocks[static_cast<std::size_t>(gid)]) theta_star(j) = sign_rng.next_sign();

  Rng noise_rng(derive_stream(spec.seed, detail::kTagNoise));
  Vector responses = design * theta_star;
  for (Index i = 0; i < spec.n; ++i) responses(i) += spec.noise_sd * noise_rng.next_normal();

  GroundTruth truth{std::move(theta_star), SubspaceModel::group_blocks(active, std::move(groups))};
  return {Dataset(std::move(design), std::move(responses)), std::move(truth)};
}

/// Errors-in-variables design: clean X sampled with Sigma = sigma_scale * I,
/// observed Z = X + W with W i.i.d. N(0, gamma_w I); responses come from the
/// clean X, which is returned for evaluation only.
inline CorruptedProblem gen_corrupted_covariates(const SynthSpec& spec) {
  spec.validate_linear();
  if (spec.gamma_w < 0.0) throw std::invalid_argument("SynthSpec: gamma_w must be >= 0");
  SynthSpec clean = spec;
  clean.b = 0.0;
  SyntheticProblem base = gen_sparse_linear(clean);

  RowMatrix hidden = base.dataset.dense();
  RowMatrix observed = hidden;
  const Scalar w_sd = std::sqrt(spec.gamma_w);
  if (w_sd > 0.0) {
    for (Index i = 0; i < spec.n; ++i) {
      Rng w_rng(derive_stream(spec.seed, detail::kTagCorrupt, static_cast<std::uint64_t>(i)));
      for (Index j = 0; j < spec.p; ++j) observed(i, j) += w_sd * w_rng.next_normal();
    }
  }
  Dataset data(std::move(observed), base.dataset.responses());
  return {std::move(data), std::move(base.truth), std::move(hidden)};
}

}  // namespace vrprox
